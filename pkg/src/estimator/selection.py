"""Pick the candidate minimizing an estimated prediction error."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple, Union

from errors import SelectionError
from estimator.clustering import CandidateChain
from estimator.crossval import Criterion, CriterionRow
from estimator.model_core import ClusteredModel

_logger = logging.getLogger(__name__)

ALL_CRITERIA: Tuple[Criterion, ...] = tuple(Criterion)


@dataclass(frozen=True)
class SelectionResult:
    criterion: Criterion
    c: int
    model: ClusteredModel
    value: float
    table: Tuple[CriterionRow, ...]


def select(chain: CandidateChain, criterion: Union[Criterion, str]) -> SelectionResult:
    """
    Argmin of ``criterion`` over the feasible candidates; ties go to the smaller c.

    Raises
    ------
    SelectionError
        Every candidate is infeasible.
    """
    criterion = Criterion(criterion)
    best: Optional[Tuple[float, int]] = None
    for candidate in chain:
        row = candidate.criteria
        value = row.value(criterion)
        if not row.feasible or math.isnan(value) or value == math.inf:
            continue
        key = (value, candidate.c)
        if best is None or key < best:
            best = key
    if best is None:
        raise SelectionError(f"no feasible candidate for criterion {criterion.value}")

    value, c = best
    _logger.debug(f"{chain.method.name}/{criterion.value}: selected c={c} ({value:.6g})")
    return SelectionResult(criterion, c, chain.by_c(c).model, value, tuple(chain.rows))


def select_all(chain: CandidateChain, criteria: Iterable[Criterion] = ALL_CRITERIA) -> Dict[Criterion, SelectionResult]:
    return {Criterion(criterion): select(chain, criterion) for criterion in criteria}
