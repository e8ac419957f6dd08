import math
from dataclasses import replace

import numpy as np
import pytest

from errors import SelectionError
from estimator.clustering import CandidateChain, Method, generate_candidates
from estimator.crossval import Criterion, infeasible_row
from estimator.selection import ALL_CRITERIA, select, select_all


@pytest.fixture
def chain(design_factory):
    rng = np.random.default_rng(17)
    labels = np.repeat([0, 1, 2], [3, 3, 2])
    design = design_factory(rng, 8, 36, strengths=[-10.0, 0.0, 14.0], labels=labels, sigma=2.0)
    return generate_candidates(design, Method.LCT)


def _with_values(chain: CandidateChain, criterion: Criterion, values) -> CandidateChain:
    """Same chain with ``criterion`` overwritten per candidate."""
    candidates = tuple(
        replace(candidate, criteria=replace(candidate.criteria, **{f"{criterion.value}_hat": value}))
        for candidate, value in zip(chain.candidates, values)
    )
    return CandidateChain(chain.method, candidates)


def test_select_is_argmin(chain):
    rows = chain.rows
    result = select(chain, Criterion.MSPE_Y)
    feasible = [row for row in rows if row.feasible]
    best = min(feasible, key=lambda row: (row.mspe_y_hat, row.c))

    assert result.c == best.c
    assert result.value == best.mspe_y_hat
    assert result.model is chain.by_c(best.c).model
    assert len(result.table) == len(chain)


def test_ties_go_to_fewer_clusters(chain):
    # c = 8, 7, ..., 2
    values = [3.0, 1.0, 2.0, 1.0, 5.0, 1.0, 4.0]
    result = select(_with_values(chain, Criterion.MSPE_P, values), "mspe_p")
    assert result.c == 3


def test_minus_infinity_wins_and_nan_is_skipped(chain):
    values = [math.nan, 0.5, -math.inf, 0.1, math.inf, 0.3, 0.2]
    result = select(_with_values(chain, Criterion.MSPEB_D, values), Criterion.MSPEB_D)
    assert result.c == 6
    assert result.value == -math.inf


def test_all_infeasible_raises(chain):
    candidates = tuple(replace(candidate, criteria=infeasible_row(candidate.c)) for candidate in chain)
    with pytest.raises(SelectionError):
        select(CandidateChain(chain.method, candidates), Criterion.MSPE_Y)


def test_select_all_covers_every_criterion(chain):
    results = select_all(chain)
    assert set(results) == set(ALL_CRITERIA)
    for criterion, result in results.items():
        assert result.criterion is criterion
        assert 2 <= result.c <= 8


def test_penalty_free_mspeb_selects_like_mspe(chain):
    for plain, penalized in ((Criterion.MSPE_Y, Criterion.MSPEB_Y), (Criterion.MSPE_P, Criterion.MSPEB_P)):
        unpenalized = [math.log(row.value(plain)) for row in chain.rows]
        stripped = _with_values(chain, penalized, unpenalized)
        assert select(stripped, penalized).c == select(chain, plain).c


def test_candidate_order_does_not_matter(chain):
    order = np.random.default_rng(2).permutation(len(chain))
    shuffled = CandidateChain(chain.method, tuple(chain.candidates[i] for i in order))
    for criterion in ALL_CRITERIA:
        assert select(shuffled, criterion).c == select(chain, criterion).c
