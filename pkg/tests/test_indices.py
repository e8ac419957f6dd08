import itertools

import numpy as np
import pytest

from conftest import random_labels
from errors import ValidationError
from estimator.indices import (
    agreement_matrix,
    classify_strength,
    minr,
    minr_vs_truth,
    rank_correlation,
    rank_correlation_vs_truth,
)
from estimator.model_core import ClusterAssignment, ClusteredModel, EmpiricalCdf, fit_wmprc
from simulator.simulator import BaseScenario, make_scenario, synthetic_schedule


def _model(theta, labels):
    theta = np.asarray(theta, dtype=float)
    labels = np.asarray(labels)
    residuals = np.zeros(3)
    return ClusteredModel(
        assignment=ClusterAssignment(labels, theta.size),
        theta=theta,
        beta=theta[labels],
        residuals=residuals,
        cdf=EmpiricalCdf.from_values(residuals),
        rss=0.0,
    )


def _from_beta(beta):
    theta, labels = np.unique(np.asarray(beta, dtype=float), return_inverse=True)
    return _model(theta, labels)


def _minr_literal(a, b):
    """Robot-by-robot count, larger cluster count mapped into the smaller."""

    def share(fine, coarse):
        hits = 0
        for i in range(fine.k):
            gaps = [abs(fine.beta[i] - t) for t in coarse.theta]
            hits += int(gaps.index(min(gaps)) == coarse.assignment.labels[i])
        return hits / fine.k

    if a.c == b.c:
        return (share(a, b) + share(b, a)) / 2
    fine, coarse = (a, b) if a.c > b.c else (b, a)
    return share(fine, coarse)


def _rc_literal(a, b):
    k = a.size
    agree = 0
    for i, j in itertools.permutations(range(k), 2):
        da, db = a[i] - a[j], b[i] - b[j]
        agree += int(da * db > 0 or (da == 0 and db == 0))
    return agree / (k * (k - 1))


# ---------------------------------------------------------------------- #
#  MINR
# ---------------------------------------------------------------------- #
def test_minr_counts_robots_mapped_home():
    coarse = _from_beta([-1, -1, -1, 1, 1, 1])
    # robot 2 lands nearer the upper cluster
    fine = _from_beta([-3, -3, 2, 2, 2, 5])

    assert minr(fine, coarse) == pytest.approx(5 / 6)
    assert minr(coarse, fine) == pytest.approx(5 / 6)


def test_minr_of_collapsed_model_against_designed_truth():
    design = synthetic_schedule(67, 114, seed=0)
    truth = make_scenario(BaseScenario.M1, 1.0, design)
    collapsed = _from_beta(np.zeros(67))

    # every zero strength is nearest the second cluster of 25 robots
    assert minr_vs_truth(collapsed, truth) == pytest.approx(25 / 67)


def test_minr_matches_literal_count(design_factory):
    rng = np.random.default_rng(23)
    for _ in range(100):
        k = int(rng.integers(6, 15))
        design = design_factory(rng, k, 3 * k)
        c_a, c_b = (int(c) for c in rng.integers(1, k + 1, size=2))
        a = fit_wmprc(design, ClusterAssignment(random_labels(rng, k, c_a), c_a))
        b = fit_wmprc(design, ClusterAssignment(random_labels(rng, k, c_b), c_b))

        assert minr(a, b) == pytest.approx(_minr_literal(a, b))
        assert minr(a, b) == minr(b, a)


def test_minr_of_model_with_itself(design_factory, rng):
    design = design_factory(rng, 10, 30)
    model = fit_wmprc(design, ClusterAssignment(random_labels(rng, 10, 4), 4))
    assert minr(model, model) == 1.0


def test_minr_ignores_cluster_numbering():
    labels = np.array([0, 0, 1, 2, 2, 1, 3])
    theta = np.array([-4.0, -1.0, 2.0, 6.0])
    other = _from_beta([-5, -3, 0, 1, 4, 4, 7])
    permutation = np.array([3, 1, 0, 2])
    inverse = np.argsort(permutation)

    original = _model(theta, labels)
    renumbered = _model(theta[inverse], permutation[labels])
    np.testing.assert_allclose(original.beta, renumbered.beta)
    assert minr(original, other) == minr(renumbered, other)


def test_minr_needs_same_roster():
    with pytest.raises(ValidationError):
        minr(_from_beta([1, 2, 3]), _from_beta([1, 2, 3, 4]))


# ---------------------------------------------------------------------- #
#  Rank correlation
# ---------------------------------------------------------------------- #
def test_rank_correlation_matches_literal_count():
    rng = np.random.default_rng(29)
    for _ in range(100):
        k = int(rng.integers(2, 12))
        # rounded values produce ties
        a = np.round(rng.normal(size=k))
        b = np.round(rng.normal(size=k))
        assert rank_correlation(_from_beta(a), _from_beta(b)) == pytest.approx(_rc_literal(a, b))


def test_rank_correlation_extremes():
    beta = np.array([-3.0, -1.0, 0.5, 1.5, 2.0])
    assert rank_correlation(_from_beta(beta), _from_beta(beta)) == 1.0
    assert rank_correlation(_from_beta(beta), _from_beta(-beta)) == 0.0
    assert rank_correlation(_from_beta(beta), _from_beta(7.0 * beta)) == 1.0


def test_rank_correlation_counts_shared_ties():
    a = _from_beta([0, 0, 1])
    b = _from_beta([2, 2, 5])
    assert rank_correlation(a, b) == 1.0
    # tied in one model only
    assert rank_correlation(a, _from_beta([1, 2, 5])) == pytest.approx(4 / 6)


def test_indices_against_truth():
    design = synthetic_schedule(67, 114, seed=2)
    truth = make_scenario(BaseScenario.M1, 0.25, design)
    fitted = fit_wmprc(design.with_response(design.x @ truth.beta), truth.assignment)

    assert minr_vs_truth(fitted, truth) == 1.0
    assert rank_correlation_vs_truth(fitted, truth) == 1.0


# ---------------------------------------------------------------------- #
#  Labels
# ---------------------------------------------------------------------- #
@pytest.mark.parametrize(
    "value, label",
    [(1.0, "outstanding"), (0.9, "outstanding"), (0.85, "excellent"), (0.8, "excellent"),
     (0.7, "acceptable"), (0.69, "poor"), (0.0, "poor")],
)
def test_classify_strength(value, label):
    assert classify_strength(value) == label


def test_agreement_matrix_lists_pairs():
    models = {
        "tcl": _from_beta([-1, -1, 1, 1]),
        "lct": _from_beta([-2, -1, 1, 2]),
        "alt": _from_beta([-1, -1, 1, 1]),
    }
    table = agreement_matrix(models)

    assert set(table) == {("tcl", "lct"), ("tcl", "alt"), ("lct", "alt")}
    assert table[("tcl", "alt")]["minr"] == 1.0
    assert table[("tcl", "alt")]["rc_label"] == "outstanding"
    assert table[("tcl", "lct")]["c_b"] == 4
