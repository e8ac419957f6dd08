#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Simulation experiments: designed truths, seeded responses, oracle prediction
errors and replication summaries.

Two designs are provided.  ``M1`` has four clusters and ``M2`` eight, with
strengths and error scales taken from fits to two championship divisions.
For each replication a response vector is drawn on a fixed schedule, every
requested method builds its candidate chain, every criterion selects a model,
and the selected models are compared with the truth.
"""

# --------------------------------------------------------------------------- #
#  Standard-library imports
# --------------------------------------------------------------------------- #
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import partial
from multiprocessing import Pool
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

# --------------------------------------------------------------------------- #
#  Third-party imports
# --------------------------------------------------------------------------- #
import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError
from scipy.special import ndtr
from tqdm import tqdm

# --------------------------------------------------------------------------- #
#  Project imports
# --------------------------------------------------------------------------- #
import config
from errors import ConfigError, ValidationError
from estimator.clustering import CandidateChain, Method, generate_candidates
from estimator.crossval import Criterion, CriterionRow, criterion_row
from estimator.indices import minr_vs_truth, rank_correlation_vs_truth
from estimator.model_core import (
    ClusterAssignment,
    ClusteredModel,
    DesignMatrix,
    RobotRoster,
    fit_wmpr,
    fit_wmprc,
    outcome_from_probability,
    outcomes_from_differences,
)
from estimator.selection import select
from logging_config import PerformanceLogger, get_simulation_logger
from reporting import write_table
from simulator.sampler import SeedLike, standard_normals

_logger = logging.getLogger(__name__)

SIGMA_MULTIPLIERS: Tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 4.0)


# --------------------------------------------------------------------------- #
#  Scenarios
# --------------------------------------------------------------------------- #
class BaseScenario(str, Enum):
    M1 = "M1"
    M2 = "M2"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ScenarioSpec:
    strengths: Tuple[float, ...]
    sizes: Tuple[int, ...]
    sigma_hat: float
    division: str


SCENARIOS: Dict[BaseScenario, ScenarioSpec] = {
    BaseScenario.M1: ScenarioSpec(
        strengths=(-15.07, -4.75, 4.76, 14.52),
        sizes=(9, 25, 24, 9),
        sigma_hat=11.056,
        division="2019 Roebling",
    ),
    BaseScenario.M2: ScenarioSpec(
        strengths=(-18.16, -13.57, -9.81, -0.58, 4.88, 7.90, 11.16, 18.20),
        sizes=(5, 3, 8, 22, 17, 6, 5, 2),
        sigma_hat=10.275,
        division="2019 Daly",
    ),
}


@dataclass(frozen=True)
class TruthSpec:
    """Designed cluster structure, strengths and normal error scale."""

    assignment: ClusterAssignment
    strengths: np.ndarray
    sigma: float
    scenario: str = "custom"
    error_family: str = "normal"
    # strengths as recorded for the division, before the zero-sum shift
    recorded_strengths: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        strengths = np.array(self.strengths, dtype=float)
        if strengths.shape != (self.assignment.c,):
            raise ValidationError(f"{strengths.size} true strengths for {self.assignment.c} clusters")
        if self.sigma < 0:
            raise ValidationError(f"error scale must be non-negative, got {self.sigma}")
        strengths.setflags(write=False)
        object.__setattr__(self, "strengths", strengths)

    @property
    def c(self) -> int:
        return self.assignment.c

    @property
    def k(self) -> int:
        return self.assignment.k

    @property
    def sizes(self) -> np.ndarray:
        return self.assignment.sizes

    @property
    def beta(self) -> np.ndarray:
        return self.strengths[self.assignment.labels]


def block_assignment(sizes: Sequence[int]) -> ClusterAssignment:
    """Clusters as consecutive blocks of the roster order."""
    return ClusterAssignment(np.repeat(np.arange(len(sizes)), sizes), len(sizes))


def make_scenario(
    base: BaseScenario,
    sigma_multiplier: float,
    design: DesignMatrix,
    assignment: Optional[ClusterAssignment] = None,
) -> TruthSpec:
    """
    Build the truth of scenario ``base`` on ``design``'s roster.

    Without ``assignment`` the clusters are consecutive blocks of the roster;
    a given assignment must list its clusters in ascending strength order with
    the recorded sizes.

    Raises
    ------
    ValidationError
        Roster size differs from the recorded cluster sizes, or the
        assignment does not match them.
    """
    spec = SCENARIOS[BaseScenario(base)]
    if sigma_multiplier < 0:
        raise ValidationError(f"sigma multiplier must be non-negative, got {sigma_multiplier}")
    if not any(math.isclose(sigma_multiplier, m) for m in SIGMA_MULTIPLIERS):
        _logger.warning(f"sigma multiplier {sigma_multiplier} is outside the standard grid {SIGMA_MULTIPLIERS}")

    total = sum(spec.sizes)
    if design.k != total:
        raise ValidationError(f"{base} needs {total} robots, the schedule has {design.k}")
    if assignment is None:
        assignment = block_assignment(spec.sizes)
    elif assignment.c != len(spec.sizes) or tuple(assignment.sizes.tolist()) != spec.sizes:
        raise ValidationError(
            f"assignment sizes {assignment.sizes.tolist()} do not match {base} sizes {list(spec.sizes)}"
        )

    # recorded strengths are rounded; shift them onto the zero-sum constraint
    recorded = np.array(spec.strengths)
    sizes = np.array(spec.sizes)
    return TruthSpec(
        assignment=assignment,
        strengths=recorded - float(sizes @ recorded) / total,
        sigma=sigma_multiplier * spec.sigma_hat,
        scenario=str(base),
        recorded_strengths=spec.strengths,
    )


def separability_ratios(truth: TruthSpec) -> np.ndarray:
    """Gaps between adjacent true cluster strengths in units of sigma."""
    gaps = np.diff(np.sort(truth.strengths))
    if truth.sigma == 0:
        return np.full(gaps.shape, math.inf)
    return gaps / truth.sigma


# --------------------------------------------------------------------------- #
#  Schedules and responses
# --------------------------------------------------------------------------- #
def synthetic_schedule(k: int, m: int, seed: int, roster: Optional[RobotRoster] = None) -> DesignMatrix:
    """
    Random 3-vs-3 schedule with balanced appearance counts.

    Each match takes the six robots with the fewest appearances so far (ties
    broken at random), so counts never differ by more than one.
    """
    if k < 6:
        raise ValidationError(f"a 3-vs-3 schedule needs at least 6 robots, got {k}")
    if m < 1:
        raise ValidationError("a schedule needs at least one match")
    roster = roster or RobotRoster(tuple(f"frc{i + 1}" for i in range(k)))
    if len(roster) != k:
        raise ValidationError(f"roster has {len(roster)} robots, expected {k}")

    rng = np.random.default_rng(seed)
    counts = np.zeros(k, dtype=np.int64)
    x = np.zeros((m, k))
    for s in range(m):
        chosen = np.lexsort((rng.random(k), counts))[:6]
        chosen = rng.permutation(chosen)
        x[s, chosen[:3]] = 1.0
        x[s, chosen[3:]] = -1.0
        counts[chosen] += 1

    return DesignMatrix(x, np.zeros(m), roster, tuple(f"qm{s + 1}" for s in range(m)))


def true_means(truth: TruthSpec, design: DesignMatrix) -> np.ndarray:
    """x_s' beta_o, summed per cluster so that evenly matched alliances give exactly 0."""
    return (design.x @ truth.assignment.indicator()) @ truth.strengths


def generate_y(truth: TruthSpec, design: DesignMatrix, seed: SeedLike) -> np.ndarray:
    """Y = X beta_o + sigma z with z from the seeded normal stream."""
    if truth.k != design.k:
        raise ValidationError(f"truth covers {truth.k} robots, the schedule has {design.k}")
    mean = true_means(truth, design)
    if truth.sigma == 0:
        return mean
    return mean + truth.sigma * standard_normals(seed, design.m)


# --------------------------------------------------------------------------- #
#  Oracle errors
# --------------------------------------------------------------------------- #
class OracleMspe(NamedTuple):
    mspe_y: float
    mspe_p: float
    mspe_d: float


def oracle_mspe(model: ClusteredModel, truth: TruthSpec, design: DesignMatrix) -> OracleMspe:
    """
    True prediction errors of ``model`` for a future match drawn uniformly
    from the schedule rows, with a fresh normal error.
    """
    if model.k != truth.k or truth.k != design.k:
        raise ValidationError("model, truth and schedule must cover the same robots")
    mean = true_means(truth, design)
    predicted = design.x @ model.beta
    p_hat = 1.0 - model.cdf(-predicted)
    d_hat = np.asarray(outcome_from_probability(p_hat))

    mspe_y = truth.sigma ** 2 + float(np.mean((predicted - mean) ** 2))
    if truth.sigma == 0:
        d_true = outcomes_from_differences(mean)
        return OracleMspe(mspe_y, float(np.mean((d_true - p_hat) ** 2)), float(np.mean((d_true - d_hat) ** 2)))

    p = ndtr(mean / truth.sigma)
    mspe_p = float(np.mean(p * (1.0 - p) + (p - p_hat) ** 2))
    mspe_d = float(np.mean(p * (1.0 - d_hat) ** 2 + (1.0 - p) * d_hat ** 2))
    return OracleMspe(mspe_y, mspe_p, mspe_d)


def mse_strengths(model: ClusteredModel, truth: TruthSpec) -> float:
    """Squared error of the robot strengths, summed over robots."""
    if model.k != truth.k:
        raise ValidationError(f"model covers {model.k} robots, truth {truth.k}")
    return float(np.sum((np.asarray(model.beta) - truth.beta) ** 2))


# --------------------------------------------------------------------------- #
#  Experiment configuration
# --------------------------------------------------------------------------- #
class ExperimentConfig(BaseModel):
    """One simulation experiment as read from ``config/experiments/*.yaml``."""

    model_config = ConfigDict(extra="forbid")

    scenario: BaseScenario = Field(description="Designed truth, M1 or M2")
    sigma_multiplier: float = Field(ge=0, description="Error scale in units of the fitted sigma")
    reps: int = Field(ge=1, description="Number of replications")
    master_seed: int = Field(0, ge=0, description="Seed from which every replication key is derived")
    methods: List[Method] = Field(default_factory=lambda: list(Method), description="Candidate chains to run")
    criteria: List[Criterion] = Field(default_factory=lambda: list(Criterion), description="Selection criteria")
    schedule: Optional[str] = Field(None, description="Match CSV providing X; synthetic when omitted")
    exclusions: List[str] = Field(default_factory=list, description="Match ids dropped from the schedule")
    truth_model: Optional[str] = Field(None, description="Model JSON whose assignment becomes the true one")
    synthetic_matches: int = Field(114, ge=1, description="Matches in a synthetic schedule")
    synthetic_seed: int = Field(0, ge=0, description="Seed of the synthetic schedule")
    threads: Optional[int] = Field(None, ge=1, description="Worker processes")


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Read and validate an experiment YAML file."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as handle:
            raw = yaml.safe_load(handle) or {}
        return ExperimentConfig.model_validate(raw)
    except FileNotFoundError:
        raise ConfigError(f"experiment config not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    except PydanticValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


# --------------------------------------------------------------------------- #
#  Replications
# --------------------------------------------------------------------------- #
_ESTIMATED_COLUMNS = ("mspe_y_hat", "mspe_p_hat", "mspe_d_hat", "mspeb_y_hat", "mspeb_p_hat", "mspeb_d_hat")


def _estimated(row: CriterionRow) -> Tuple[float, ...]:
    return tuple(getattr(row, name) for name in _ESTIMATED_COLUMNS)


def _score(model: ClusteredModel, row: CriterionRow, truth: TruthSpec, design: DesignMatrix) -> Dict[str, Any]:
    return {
        "c": model.c,
        "mse": mse_strengths(model, truth),
        "minr": minr_vs_truth(model, truth),
        "rc": rank_correlation_vs_truth(model, truth),
        "oracle": tuple(oracle_mspe(model, truth, design)),
        "estimated": _estimated(row)[:3],
    }


def _curve(chain: CandidateChain, truth: TruthSpec, design: DesignMatrix) -> Dict[str, np.ndarray]:
    return {
        "c": np.array([candidate.c for candidate in chain]),
        "estimated": np.array([_estimated(candidate.criteria) for candidate in chain]),
        "oracle": np.array([tuple(oracle_mspe(candidate.model, truth, design)) for candidate in chain]),
    }


def run_replication(
    index: int,
    truth: TruthSpec,
    design: DesignMatrix,
    methods: Sequence[Method],
    criteria: Sequence[Criterion],
    master_seed: int,
    tolerance: float = config.REFINE_TOLERANCE,
    max_iterations: int = config.REFINE_MAX_ITERATIONS,
) -> Dict[str, Any]:
    """Everything one replication contributes to the summary."""
    data = design.with_response(generate_y(truth, design, (master_seed, index)))
    result: Dict[str, Any] = {"index": index, "selections": {}, "curves": {}}

    wmpr = None
    for method in methods:
        chain = generate_candidates(data, method, tolerance, max_iterations)
        result["curves"][str(method)] = _curve(chain, truth, data)
        for criterion in criteria:
            selection = select(chain, criterion)
            row = chain.by_c(selection.c).criteria
            result["selections"][(str(method), str(criterion))] = _score(selection.model, row, truth, data)
        if wmpr is None:
            wmpr = chain.candidates[0]

    if wmpr is None:
        model = fit_wmpr(data)
        result["wmpr"] = _score(model, criterion_row(model, data), truth, data)
    else:
        result["wmpr"] = _score(wmpr.model, wmpr.criteria, truth, data)

    true_fit = fit_wmprc(data, truth.assignment)
    result["true"] = _score(true_fit, criterion_row(true_fit, data), truth, data)
    return result


# --------------------------------------------------------------------------- #
#  Summaries
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class SummaryRow:
    method: str
    criterion: str
    reps: int
    c_mean: float
    c_sd: float
    mse: float
    minr: float
    rc: float
    oracle_mspe_y: float
    oracle_mspe_p: float
    oracle_mspe_d: float
    estimated_mspe_y: float
    estimated_mspe_p: float
    estimated_mspe_d: float


@dataclass(frozen=True)
class CurvePoint:
    """Mean estimated and true criterion values of the candidate at ``c``."""

    method: str
    c: int
    mspe_y_hat: float
    mspe_p_hat: float
    mspe_d_hat: float
    mspeb_y_hat: float
    mspeb_p_hat: float
    mspeb_d_hat: float
    oracle_mspe_y: float
    oracle_mspe_p: float
    oracle_mspe_d: float


@dataclass(frozen=True)
class ExperimentSummary:
    rows: Tuple[SummaryRow, ...]
    curves: Tuple[CurvePoint, ...]
    reps: int
    master_seed: int
    metadata: Dict[str, Any] = field(default_factory=dict)

    def row(self, method: str, criterion: str = "-") -> SummaryRow:
        for row in self.rows:
            if row.method == str(method) and row.criterion == str(criterion):
                return row
        raise KeyError((method, criterion))


def _summarize(method: str, criterion: str, scores: List[Dict[str, Any]]) -> SummaryRow:
    c = np.array([s["c"] for s in scores], dtype=float)
    oracle = np.array([s["oracle"] for s in scores])
    estimated = np.array([s["estimated"] for s in scores])
    return SummaryRow(
        method=method,
        criterion=criterion,
        reps=len(scores),
        c_mean=float(c.mean()),
        c_sd=float(c.std(ddof=1)) if len(scores) > 1 else 0.0,
        mse=float(np.mean([s["mse"] for s in scores])),
        minr=float(np.mean([s["minr"] for s in scores])),
        rc=float(np.mean([s["rc"] for s in scores])),
        oracle_mspe_y=float(oracle[:, 0].mean()),
        oracle_mspe_p=float(oracle[:, 1].mean()),
        oracle_mspe_d=float(oracle[:, 2].mean()),
        estimated_mspe_y=float(estimated[:, 0].mean()),
        estimated_mspe_p=float(estimated[:, 1].mean()),
        estimated_mspe_d=float(estimated[:, 2].mean()),
    )


def summarize_replications(
    results: Sequence[Dict[str, Any]],
    methods: Sequence[Method],
    criteria: Sequence[Criterion],
    master_seed: int,
    metadata: Optional[Mapping[str, Any]] = None,
) -> ExperimentSummary:
    """Aggregate replication results in replication-index order."""
    results = sorted(results, key=lambda r: r["index"])
    rows = []
    for method in methods:
        for criterion in criteria:
            key = (str(method), str(criterion))
            rows.append(_summarize(str(method), str(criterion), [r["selections"][key] for r in results]))
    rows.append(_summarize("WMPR", "-", [r["wmpr"] for r in results]))
    rows.append(_summarize("TRUE", "-", [r["true"] for r in results]))

    curves = []
    for method in methods:
        per_rep = [r["curves"][str(method)] for r in results]
        estimated = np.mean([curve["estimated"] for curve in per_rep], axis=0)
        oracle = np.mean([curve["oracle"] for curve in per_rep], axis=0)
        for j, c in enumerate(per_rep[0]["c"]):
            curves.append(CurvePoint(str(method), int(c), *map(float, estimated[j]), *map(float, oracle[j])))

    return ExperimentSummary(tuple(rows), tuple(curves), len(results), master_seed, dict(metadata or {}))


def run_experiment(
    truth: TruthSpec,
    design: DesignMatrix,
    reps: int,
    methods: Sequence[Method] = tuple(Method),
    master_seed: int = 0,
    criteria: Sequence[Criterion] = tuple(Criterion),
    threads: int = config.DEFAULT_THREADS,
    metadata: Optional[Mapping[str, Any]] = None,
) -> ExperimentSummary:
    """
    Run ``reps`` replications and aggregate them.

    Replication r draws its errors from the key ``(master_seed, r)``, so the
    summary does not depend on ``threads``.
    """
    if reps < 1:
        raise ValidationError(f"reps must be at least 1, got {reps}")
    methods = [Method(m) for m in methods]
    criteria = [Criterion(c) for c in criteria]
    sim_logger = get_simulation_logger()

    meta = {
        "scenario": truth.scenario,
        "sigma": truth.sigma,
        "c_o": truth.c,
        "true_strengths": truth.strengths.tolist(),
        "recorded_strengths": list(truth.recorded_strengths) if truth.recorded_strengths else None,
        "true_sizes": truth.sizes.tolist(),
        "k": design.k,
        "m": design.m,
        "separability_ratios": separability_ratios(truth).tolist(),
        "methods": [str(m) for m in methods],
        "criteria": [str(c) for c in criteria],
        "tool_version": config.TOOL_VERSION,
    }
    meta.update(metadata or {})

    worker = partial(
        run_replication,
        truth=truth,
        design=design,
        methods=methods,
        criteria=criteria,
        master_seed=master_seed,
    )

    sim_logger.info(f"Running {reps} replications of {truth.scenario} (sigma={truth.sigma:.3f}) with {threads} worker(s)")
    results: List[Dict[str, Any]] = []
    with PerformanceLogger(sim_logger, f"{reps} replications"):
        with tqdm(total=reps, desc="Replications", unit="rep") as pbar:
            if threads <= 1:
                for index in range(reps):
                    results.append(worker(index))
                    pbar.update(1)
            else:
                with Pool(processes=threads) as pool:
                    for result in pool.imap(worker, range(reps)):
                        results.append(result)
                        pbar.update(1)
                        sim_logger.debug(f"Replication {result['index']} done")

    return summarize_replications(results, methods, criteria, master_seed, meta)


# --------------------------------------------------------------------------- #
#  Writers
# --------------------------------------------------------------------------- #
def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def write_summary(summary: ExperimentSummary, out_dir: Path, stem: str, provenance: Mapping[str, Any]) -> Dict[str, Path]:
    """
    Write ``<stem>_summary.csv``, ``<stem>_curves.csv`` and ``<stem>_summary.json``.

    ``provenance`` holds tool_version, input_digest and seed.
    """
    out_dir = config.ensure_dir(out_dir)
    paths = {
        "summary": out_dir / f"{stem}_summary.csv",
        "curves": out_dir / f"{stem}_curves.csv",
        "metadata": out_dir / f"{stem}_summary.json",
    }

    summary_fields = list(SummaryRow.__dataclass_fields__)
    write_table(
        paths["summary"],
        summary_fields,
        [[getattr(row, name) for name in summary_fields] for row in summary.rows],
        provenance,
    )
    curve_fields = list(CurvePoint.__dataclass_fields__)
    write_table(
        paths["curves"],
        curve_fields,
        [[getattr(point, name) for name in curve_fields] for point in summary.curves],
        provenance,
    )

    document = {
        **dict(provenance),
        "reps": summary.reps,
        "master_seed": summary.master_seed,
        "metadata": summary.metadata,
        "rows": [row.__dict__ for row in summary.rows],
    }
    with paths["metadata"].open("w", encoding="utf-8", newline="\n") as handle:
        json.dump(_json_safe(document), handle, indent=2, sort_keys=True)
        handle.write("\n")

    _logger.info(f"Wrote simulation summary to {out_dir}")
    return paths
