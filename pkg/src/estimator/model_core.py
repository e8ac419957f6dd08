#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Design matrices and constrained least-squares fits of the clustered
winning-margin power rating model.

A qualification match s contributes one row x_s to the M x K design X:
+1 for each red robot, -1 for each blue robot, 0 otherwise.  With a cluster
assignment g (robot i belongs to cluster g_i) the strengths are
beta_i = theta_{g_i} and the model is Y = X Z theta + error, where Z is the
K x c cluster indicator.  Because every row of X sums to zero, theta is only
identified up to a constant; fits pick the minimum-norm solution and then
shift it so that sum_i beta_i = 0.

Labels are 0-based internally (``ClusterAssignment.labels``); the 1-based
vector used in reports is ``ClusterAssignment.g``.
"""

# --------------------------------------------------------------------------- #
#  Standard-library imports
# --------------------------------------------------------------------------- #
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, Sequence, Tuple

# --------------------------------------------------------------------------- #
#  Third-party imports
# --------------------------------------------------------------------------- #
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# --------------------------------------------------------------------------- #
#  Project imports
# --------------------------------------------------------------------------- #
import config
from errors import IngestionError, ValidationError

_logger = logging.getLogger(__name__)

ALLIANCE_SIZE = 3


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# --------------------------------------------------------------------------- #
#  Match records and rosters
# --------------------------------------------------------------------------- #
class MatchRecord(BaseModel):
    """One qualification match."""

    model_config = ConfigDict(frozen=True)

    match_id: str = Field(description="Match identifier, e.g. 'qm12'")
    red: Tuple[str, str, str] = Field(description="Robots on the red alliance")
    blue: Tuple[str, str, str] = Field(description="Robots on the blue alliance")
    red_score: int = Field(ge=0, description="Final red alliance score")
    blue_score: int = Field(ge=0, description="Final blue alliance score")

    @model_validator(mode="after")
    def _distinct_robots(self) -> "MatchRecord":
        robots = self.red + self.blue
        if len(set(robots)) != len(robots):
            raise ValueError(f"match {self.match_id} lists a robot more than once: {robots}")
        return self

    @property
    def score_difference(self) -> int:
        return self.red_score - self.blue_score


@dataclass(frozen=True)
class RobotRoster:
    """Ordered robot identifiers; position in ``robots`` is the design column."""

    robots: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.robots)) != len(self.robots):
            raise ValidationError("roster contains duplicate robot identifiers")
        object.__setattr__(self, "robots", tuple(self.robots))

    @cached_property
    def index(self) -> Dict[str, int]:
        return {robot: i for i, robot in enumerate(self.robots)}

    def __len__(self) -> int:
        return len(self.robots)

    def __contains__(self, robot: str) -> bool:
        return robot in self.index

    def column(self, robot: str) -> int:
        try:
            return self.index[robot]
        except KeyError:
            raise ValidationError(f"robot {robot!r} is not in the roster") from None


# --------------------------------------------------------------------------- #
#  Design matrix
# --------------------------------------------------------------------------- #
def outcomes_from_differences(y: np.ndarray) -> np.ndarray:
    """D_s = 1 for a red win, 0.5 for a draw, 0 for a blue win."""
    y = np.asarray(y, dtype=float)
    return np.where(y > 0, 1.0, np.where(y < 0, 0.0, 0.5))


@dataclass(frozen=True)
class DesignMatrix:
    """Alliance design X, score differences Y and outcomes D."""

    x: np.ndarray
    y: np.ndarray
    roster: RobotRoster
    match_ids: Tuple[str, ...] = ()
    d: np.ndarray = field(init=False)

    def __post_init__(self):
        x = _frozen(self.x)
        y = _frozen(self.y)
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ValidationError(f"design shape {x.shape} does not match response shape {y.shape}")
        if x.shape[1] != len(self.roster):
            raise ValidationError(f"design has {x.shape[1]} columns for a roster of {len(self.roster)}")
        match_ids = tuple(self.match_ids) or tuple(f"m{s + 1}" for s in range(x.shape[0]))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "match_ids", match_ids)
        object.__setattr__(self, "d", _frozen(outcomes_from_differences(y)))

    @property
    def m(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    def with_response(self, y: Sequence[float]) -> "DesignMatrix":
        """Same schedule, new score differences (outcomes are recomputed)."""
        return DesignMatrix(self.x, np.asarray(y, dtype=float), self.roster, self.match_ids)

    def without_match(self, s: int) -> "DesignMatrix":
        keep = np.arange(self.m) != s
        ids = tuple(mid for i, mid in enumerate(self.match_ids) if i != s)
        return DesignMatrix(self.x[keep], self.y[keep], self.roster, ids)


def build_design(matches: Sequence[MatchRecord], roster: RobotRoster) -> DesignMatrix:
    """
    Build the M x K alliance design for ``matches`` over ``roster``.

    Raises
    ------
    IngestionError
        A match refers to a robot missing from the roster.
    ValidationError
        No matches, or a robot appears twice in one match.
    """
    if len(matches) == 0:
        raise ValidationError("cannot build a design from zero matches")

    x = np.zeros((len(matches), len(roster)), dtype=float)
    y = np.zeros(len(matches), dtype=float)
    for s, match in enumerate(matches):
        robots = tuple(match.red) + tuple(match.blue)
        if len(set(robots)) != len(robots):
            raise ValidationError(f"match {match.match_id} lists a robot more than once")
        for sign, alliance in ((1.0, match.red), (-1.0, match.blue)):
            for robot in alliance:
                if robot not in roster:
                    raise IngestionError(f"match {match.match_id}: unknown robot identifier {robot!r}")
                x[s, roster.column(robot)] = sign
        y[s] = match.red_score - match.blue_score

    _logger.debug(f"Built design with M={x.shape[0]} matches and K={x.shape[1]} robots")
    return DesignMatrix(x, y, roster, tuple(match.match_id for match in matches))


def validate_row(x_o: Iterable[float], k: int) -> np.ndarray:
    """Check that ``x_o`` is a K-vector with three +1 and three -1 entries."""
    row = np.asarray(list(x_o) if not isinstance(x_o, np.ndarray) else x_o, dtype=float)
    if row.shape != (k,):
        raise ValidationError(f"design row has shape {row.shape}, expected ({k},)")
    if not np.all(np.isin(row, (-1.0, 0.0, 1.0))):
        raise ValidationError("design row entries must be -1, 0 or +1")
    if np.count_nonzero(row == 1.0) != ALLIANCE_SIZE or np.count_nonzero(row == -1.0) != ALLIANCE_SIZE:
        raise ValidationError("design row must put exactly three robots on each alliance")
    return row


def design_row(roster: RobotRoster, red: Sequence[str], blue: Sequence[str]) -> np.ndarray:
    """Design row of a hypothetical match between ``red`` and ``blue``."""
    row = np.zeros(len(roster), dtype=float)
    for sign, alliance in ((1.0, red), (-1.0, blue)):
        for robot in alliance:
            if row[roster.column(robot)] != 0.0:
                raise ValidationError(f"robot {robot!r} appears twice in the hypothetical match")
            row[roster.column(robot)] = sign
    return validate_row(row, len(roster))


# --------------------------------------------------------------------------- #
#  Cluster assignments
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class ClusterAssignment:
    """Robot-to-cluster map with 0-based ``labels`` covering 0..c-1."""

    labels: np.ndarray
    c: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValidationError("cluster labels must be a non-empty vector")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise ValidationError("cluster labels must be integers")
        labels = _frozen(labels, dtype=np.int64)
        if self.c < 1 or self.c > labels.size:
            raise ValidationError(f"cluster count {self.c} is outside 1..{labels.size}")
        if labels.min() < 0 or labels.max() >= self.c:
            raise ValidationError(f"cluster labels must lie in 0..{self.c - 1}")
        if np.unique(labels).size != self.c:
            raise ValidationError(f"every one of the {self.c} clusters needs at least one robot")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "ClusterAssignment":
        labels = np.asarray(labels, dtype=np.int64)
        return cls(labels, int(labels.max()) + 1)

    @classmethod
    def from_g(cls, g: Sequence[int]) -> "ClusterAssignment":
        """Build from a 1-based cluster vector."""
        return cls.from_labels(np.asarray(g, dtype=np.int64) - 1)

    @classmethod
    def singletons(cls, k: int) -> "ClusterAssignment":
        return cls(np.arange(k), k)

    @property
    def k(self) -> int:
        return self.labels.size

    @property
    def g(self) -> np.ndarray:
        return self.labels + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.c)

    def indicator(self) -> np.ndarray:
        """K x c matrix Z with Z[i, g_i] = 1."""
        z = np.zeros((self.k, self.c), dtype=float)
        z[np.arange(self.k), self.labels] = 1.0
        return z

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def relabel_ascending(self, strengths: Sequence[float]) -> Tuple["ClusterAssignment", np.ndarray]:
        """
        Renumber clusters in ascending order of ``strengths`` (one per cluster).

        Returns the relabeled assignment and ``order`` such that
        ``strengths[order]`` is the ascending strength vector.  Equal strengths
        keep their current relative order.
        """
        order = np.argsort(np.asarray(strengths, dtype=float), kind="stable")
        new_of_old = np.empty(self.c, dtype=np.int64)
        new_of_old[order] = np.arange(self.c)
        return ClusterAssignment(new_of_old[self.labels], self.c), order

    def same_partition(self, other: "ClusterAssignment") -> bool:
        """True when both assignments group the robots identically (labels ignored)."""
        if self.k != other.k or self.c != other.c:
            return False
        pairs = set(zip(self.labels.tolist(), other.labels.tolist()))
        return len(pairs) == self.c


# --------------------------------------------------------------------------- #
#  Empirical distribution of residuals
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-continuous step function F(t) = #{e_s <= t} / M."""

    sorted_values: np.ndarray

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "EmpiricalCdf":
        return cls(_frozen(np.sort(np.asarray(values, dtype=float))))

    def __call__(self, t):
        counts = np.searchsorted(self.sorted_values, t, side="right")
        result = counts / self.sorted_values.size
        return float(result) if np.ndim(result) == 0 else result


# --------------------------------------------------------------------------- #
#  Fitted model
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class ClusteredModel:
    """Constrained least-squares fit for one cluster assignment."""

    assignment: ClusterAssignment
    theta: np.ndarray
    beta: np.ndarray
    residuals: np.ndarray
    cdf: EmpiricalCdf
    rss: float

    @property
    def c(self) -> int:
        return self.assignment.c

    @property
    def k(self) -> int:
        return self.assignment.k

    @property
    def sizes(self) -> np.ndarray:
        return self.assignment.sizes


def _min_norm_solve(xr: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.pinv(xr, rtol=config.RANK_TOLERANCE) @ y


def _center(theta: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    # the all-ones direction is in the null space of X Z, so the shift keeps the fit
    return theta - float(sizes @ theta) / float(sizes.sum())


def solve_cluster_strengths(design: DesignMatrix, assignment: ClusterAssignment) -> np.ndarray:
    """
    Zero-sum least-squares cluster strengths, in the assignment's own labels.

    Minimum-norm solution of ||Y - X Z theta||^2 shifted so that
    sum_k |G_k| theta_k = 0.
    """
    if assignment.k != design.k:
        raise ValidationError(f"assignment covers {assignment.k} robots, design has {design.k}")
    xr = design.x @ assignment.indicator()
    return _center(_min_norm_solve(xr, design.y), assignment.sizes)


def solve_reduced(xr: np.ndarray, y: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Same as ``solve_cluster_strengths`` for an already collapsed design ``xr``."""
    return _center(_min_norm_solve(xr, y), sizes)


def response_scale(design: DesignMatrix) -> float:
    return max(1.0, float(np.max(np.abs(design.y), initial=0.0)))


def snap_to_zero(values: np.ndarray, scale: float) -> np.ndarray:
    """Entries smaller than ``RESIDUAL_TOLERANCE * scale`` in magnitude become exactly 0."""
    values = np.asarray(values, dtype=float)
    return np.where(np.abs(values) < config.RESIDUAL_TOLERANCE * scale, 0.0, values)


def fit_wmprc(design: DesignMatrix, assignment: ClusterAssignment) -> ClusteredModel:
    """
    Fit the clustered model for ``assignment`` and relabel clusters so that
    cluster strengths ascend.

    Rounding-level residuals are set to 0, so every exact fit of the same
    data has the same residuals (and the same criteria).
    """
    theta = solve_cluster_strengths(design, assignment)
    canonical, order = assignment.relabel_ascending(theta)
    theta = theta[order]
    beta = theta[canonical.labels]
    residuals = snap_to_zero(design.y - design.x @ beta, response_scale(design))
    return ClusteredModel(
        assignment=canonical,
        theta=_frozen(theta),
        beta=_frozen(beta),
        residuals=_frozen(residuals),
        cdf=EmpiricalCdf.from_values(residuals),
        rss=float(residuals @ residuals),
    )


def fit_wmpr(design: DesignMatrix) -> ClusteredModel:
    """The unclustered model: every robot is its own cluster (c = K)."""
    return fit_wmprc(design, ClusterAssignment.singletons(design.k))


# --------------------------------------------------------------------------- #
#  Predictors
# --------------------------------------------------------------------------- #
def outcome_from_probability(p):
    """I(p - 0.5 > 0) + 0.5 I(p - 0.5 = 0), elementwise."""
    p = np.asarray(p, dtype=float)
    result = np.where(p - 0.5 > 0, 1.0, np.where(p - 0.5 == 0, 0.5, 0.0))
    return float(result) if result.ndim == 0 else result


def predict_score(model: ClusteredModel, x_o: Iterable[float]) -> float:
    """Predicted red-minus-blue score difference x_o' beta."""
    row = validate_row(x_o, model.k)
    return float(row @ model.beta)


def predict_prob(model: ClusteredModel, x_o: Iterable[float]) -> float:
    """Probability of a red win, 1 - F(-x_o' beta) under the residual distribution."""
    return 1.0 - model.cdf(-predict_score(model, x_o))


def predict_outcome(model: ClusteredModel, x_o: Iterable[float]) -> float:
    """Predicted outcome in {0, 0.5, 1}."""
    return outcome_from_probability(predict_prob(model, x_o))
