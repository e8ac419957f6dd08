#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Candidate cluster structures for c = K, K-1, ..., 2.

Three chains are offered:

* ``TCL`` merges the two closest clusters and refines the merged assignment
  non-hierarchically; the next merge starts from the refined model.
* ``LCT`` only merges, giving a nested hierarchy.
* ``ALT`` follows the ``LCT`` merges but reports the refined version of every
  candidate with c <= K - 2.

Refinement breaks each robot out of its cluster, re-estimates its strength
alone, and regroups all robots into the same number of clusters by centroid
linkage until the robot strengths stop moving.
"""

# --------------------------------------------------------------------------- #
#  Standard-library imports
# --------------------------------------------------------------------------- #
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

# --------------------------------------------------------------------------- #
#  Third-party imports
# --------------------------------------------------------------------------- #
import numpy as np

# --------------------------------------------------------------------------- #
#  Project imports
# --------------------------------------------------------------------------- #
import config
from errors import ValidationError
from estimator.crossval import CriterionRow, criterion_row
from estimator.model_core import (
    ClusterAssignment,
    ClusteredModel,
    DesignMatrix,
    fit_wmpr,
    fit_wmprc,
    solve_reduced,
)

_logger = logging.getLogger(__name__)


class Method(str, Enum):
    TCL = "tcl"
    LCT = "lct"
    ALT = "alt"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RefinementTrace:
    """Robot strength vectors visited by one refinement (index 0 is the input fit)."""

    iterations: int
    history: Tuple[np.ndarray, ...]
    converged: bool
    tolerance: float

    @property
    def final_distance(self) -> float:
        if len(self.history) < 2:
            return 0.0
        last = self.history[-1]
        return float(min(np.linalg.norm(last - prev) for prev in self.history[:-1]))


@dataclass(frozen=True)
class Candidate:
    model: ClusteredModel
    criteria: CriterionRow
    merged_pair: Optional[Tuple[int, int]] = None
    refinement: Optional[RefinementTrace] = None

    @property
    def c(self) -> int:
        return self.model.c


@dataclass(frozen=True)
class CandidateChain:
    """Candidates ordered by decreasing cluster count, K down to 2."""

    method: Method
    candidates: Tuple[Candidate, ...]

    @property
    def k(self) -> int:
        return self.candidates[0].model.k

    @property
    def rows(self) -> List[CriterionRow]:
        return [candidate.criteria for candidate in self.candidates]

    def by_c(self, c: int) -> Candidate:
        for candidate in self.candidates:
            if candidate.c == c:
                return candidate
        raise ValidationError(f"no candidate with c={c} (chain covers 2..{self.k})")

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


# --------------------------------------------------------------------------- #
#  Grouping scalar strengths
# --------------------------------------------------------------------------- #
def centroid_linkage(values: Sequence[float], target: int) -> ClusterAssignment:
    """
    Agglomerative centroid linkage of scalars down to ``target`` clusters.

    On the real line the clusters stay contiguous intervals of the sorted
    values, so the closest pair of centroids is always an adjacent pair and
    the first adjacent minimum is also the lexicographically smallest pair.
    Centroids are recomputed as plain means after every merge.  Clusters come
    back numbered in ascending order of their centroid.
    """
    values = np.asarray(values, dtype=float)
    k = values.size
    if not 1 <= target <= k:
        raise ValidationError(f"cannot group {k} values into {target} clusters")

    order = np.argsort(values, kind="stable")
    ordered = values[order]
    starts = list(range(k))
    while len(starts) > target:
        counts = np.diff(np.append(starts, k))
        centroids = np.add.reduceat(ordered, starts) / counts
        j = int(np.argmin(np.abs(np.diff(centroids))))
        del starts[j + 1]

    counts = np.diff(np.append(starts, k))
    labels = np.empty(k, dtype=np.int64)
    labels[order] = np.repeat(np.arange(len(starts)), counts)
    return ClusterAssignment(labels, target)


def merge_closest(model: ClusteredModel) -> Tuple[ClusterAssignment, Tuple[int, int]]:
    """
    Merge the two clusters of ``model`` with the closest strengths.

    Returns the c-1 cluster assignment (merged cluster placed first, then the
    usual ascending relabel by centroid) and the merged 0-based label pair.
    """
    c = model.c
    if c < 2:
        raise ValidationError("a single cluster cannot be merged")
    theta = np.asarray(model.theta)
    j = int(np.argmin(np.abs(np.diff(theta))))
    pair = (j, j + 1)

    labels = model.assignment.labels
    merged = np.isin(labels, pair)
    step = np.where(merged, 0, np.where(labels < j, labels + 1, labels - 1))

    sizes = model.assignment.sizes
    pair_size = sizes[j] + sizes[j + 1]
    merged_centroid = (sizes[j] * theta[j] + sizes[j + 1] * theta[j + 1]) / pair_size
    centroids = np.concatenate(([merged_centroid], np.delete(theta, pair)))

    assignment, _ = ClusterAssignment(step, c - 1).relabel_ascending(centroids)
    return assignment, pair


# --------------------------------------------------------------------------- #
#  Non-hierarchical refinement
# --------------------------------------------------------------------------- #
def breakout_strengths(design: DesignMatrix, model: ClusteredModel) -> np.ndarray:
    """
    Strength of every robot when it alone is split off into a new cluster.

    Robots already alone in their cluster keep their current strength.
    """
    assignment = model.assignment
    labels = assignment.labels
    sizes = assignment.sizes
    c = assignment.c
    xr = design.x @ assignment.indicator()

    strengths = np.array(model.beta, dtype=float)
    for i in range(design.k):
        home = labels[i]
        if sizes[home] < 2:
            continue
        column = design.x[:, i]
        split = np.empty((design.m, c + 1))
        split[:, :c] = xr
        split[:, home] -= column
        split[:, c] = column
        split_sizes = np.append(sizes, 1)
        split_sizes[home] -= 1
        strengths[i] = solve_reduced(split, design.y, split_sizes)[c]
    return strengths


def refine_nonhierarchical(
    design: DesignMatrix,
    assignment: ClusterAssignment,
    tolerance: float = config.REFINE_TOLERANCE,
    max_iterations: int = config.REFINE_MAX_ITERATIONS,
) -> Tuple[ClusteredModel, RefinementTrace]:
    """
    Refine ``assignment`` until the fitted strengths revisit a previous pass.

    Each pass computes break-out strengths, regroups them into the same number
    of clusters by centroid linkage and refits.  The loop stops as soon as the
    new strength vector is within ``tolerance`` (Euclidean) of any earlier one,
    which also ends two-state cycles.  When ``max_iterations`` is reached the
    last fit is returned with ``converged=False``.
    """
    q = assignment.c
    if q < 2:
        raise ValidationError("refinement needs at least two clusters")

    model = fit_wmprc(design, assignment)
    history: List[np.ndarray] = [model.beta]
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        regrouped = centroid_linkage(breakout_strengths(design, model), q)
        model = fit_wmprc(design, regrouped)
        distance = min(float(np.linalg.norm(model.beta - prev)) for prev in history)
        history.append(model.beta)
        if distance < tolerance:
            converged = True
            break

    if not converged:
        _logger.warning(f"Refinement at c={q} stopped after {max_iterations} passes without converging")
    return model, RefinementTrace(iterations, tuple(history), converged, tolerance)


# --------------------------------------------------------------------------- #
#  Candidate chains
# --------------------------------------------------------------------------- #
def generate_candidates(
    design: DesignMatrix,
    method: Method,
    tolerance: float = config.REFINE_TOLERANCE,
    max_iterations: int = config.REFINE_MAX_ITERATIONS,
) -> CandidateChain:
    """
    Build the candidate models c = K..2 for ``method`` and score each of them.

    Raises
    ------
    ValidationError
        Fewer than two matches or fewer than three robots.
    """
    method = Method(method)
    k = design.k
    if design.m < 2 or k < 3:
        raise ValidationError(f"need at least 2 matches and 3 robots, got M={design.m}, K={k}")

    wmpr = fit_wmpr(design)
    candidates = [Candidate(wmpr, criterion_row(wmpr, design))]
    parent = wmpr
    for c in range(k - 1, 1, -1):
        assignment, pair = merge_closest(parent)
        merged = fit_wmprc(design, assignment)
        if method is not Method.LCT and c <= k - 2:
            model, trace = refine_nonhierarchical(design, merged.assignment, tolerance, max_iterations)
        else:
            model, trace = merged, None
        candidates.append(Candidate(model, criterion_row(model, design), pair, trace))
        parent = model if method is Method.TCL else merged
        _logger.debug(
            f"{method.name} c={c}: merged clusters {pair[0] + 1},{pair[1] + 1}"
            + (f", refined in {trace.iterations} passes" if trace else "")
        )

    return CandidateChain(method, tuple(candidates))


# --------------------------------------------------------------------------- #
#  Chain diagnostics
# --------------------------------------------------------------------------- #
def chain_trace(chain: CandidateChain) -> List[Dict[str, object]]:
    """One JSON-ready record per candidate: merge, refinement passes and sizes."""
    records = []
    for candidate in chain:
        trace = candidate.refinement
        records.append({
            "c": candidate.c,
            "merged_pair": None if candidate.merged_pair is None else [p + 1 for p in candidate.merged_pair],
            "refinement_iterations": None if trace is None else trace.iterations,
            "converged": None if trace is None else trace.converged,
            "sizes": candidate.model.sizes.tolist(),
            "g": candidate.model.assignment.g.tolist(),
        })
    return records


@dataclass(frozen=True)
class Divergence:
    """First candidate whose partition differs from a reference chain."""

    c: int
    robots: Tuple[int, ...]


def first_divergence(chain: CandidateChain, reference: Mapping[int, Sequence[int]]) -> Optional[Divergence]:
    """
    Compare partitions with a reference ``{c: g}`` (any labeling) from c = K down.

    ``robots`` lists 0-based robots whose set of cluster-mates differs.
    Returns None when every shared c agrees.
    """
    for candidate in chain:
        if candidate.c not in reference:
            continue
        other = np.asarray(reference[candidate.c])
        ours = candidate.model.assignment.labels
        if other.shape != ours.shape:
            raise ValidationError(f"reference partition for c={candidate.c} covers {other.size} robots, expected {ours.size}")
        same_ours = ours[:, None] == ours[None, :]
        same_other = other[:, None] == other[None, :]
        mismatch = np.any(same_ours != same_other, axis=1)
        if mismatch.any():
            return Divergence(candidate.c, tuple(int(i) for i in np.flatnonzero(mismatch)))
    return None
