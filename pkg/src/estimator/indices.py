#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Agreement between two fitted models of the same robots.

``minr`` asks how well one model's clusters explain the other's robot
strengths (1 means the smaller model is nested in the larger one).
``rank_correlation`` is the share of ordered robot pairs ranked the same way
by both models, counting pairs tied in both as agreeing.
"""

# --------------------------------------------------------------------------- #
#  Standard-library imports
# --------------------------------------------------------------------------- #
import itertools
import logging
from typing import TYPE_CHECKING, Dict, Mapping, Tuple

# --------------------------------------------------------------------------- #
#  Third-party imports
# --------------------------------------------------------------------------- #
import numpy as np

# --------------------------------------------------------------------------- #
#  Project imports
# --------------------------------------------------------------------------- #
from errors import ValidationError
from estimator.model_core import ClusteredModel

if TYPE_CHECKING:
    from simulator.simulator import TruthSpec

_logger = logging.getLogger(__name__)

STRENGTH_LABELS: Tuple[Tuple[float, str], ...] = (
    (0.9, "outstanding"),
    (0.8, "excellent"),
    (0.7, "acceptable"),
)


def _nearest_label(strengths: np.ndarray, reference_theta: np.ndarray) -> np.ndarray:
    # argmin returns the smallest cluster index on ties
    return np.argmin(np.abs(strengths[:, None] - reference_theta[None, :]), axis=1)


def _matching_share(model: ClusteredModel, reference_theta: np.ndarray, reference_labels: np.ndarray) -> float:
    mapped = _nearest_label(np.asarray(model.beta), np.asarray(reference_theta))
    return float(np.mean(mapped == np.asarray(reference_labels)))


def _check_same_robots(k_a: int, k_b: int) -> None:
    if k_a != k_b:
        raise ValidationError(f"models cover different rosters ({k_a} vs {k_b} robots)")


def minr(model_a: ClusteredModel, model_b: ClusteredModel) -> float:
    """
    Matching index of the nested relation between two models.

    Each robot's strength in the model with more clusters is mapped to the
    nearest cluster strength of the model with fewer clusters (the reference),
    and the share of robots landing in their own reference cluster is
    returned.  With equal cluster counts both models serve as reference and
    the two shares are averaged.
    """
    _check_same_robots(model_a.k, model_b.k)
    if model_a.c < model_b.c:
        model_a, model_b = model_b, model_a
    forward = _matching_share(model_a, model_b.theta, model_b.assignment.labels)
    if model_a.c > model_b.c:
        return forward
    backward = _matching_share(model_b, model_a.theta, model_a.assignment.labels)
    return 0.5 * (forward + backward)


def minr_vs_truth(model: ClusteredModel, truth: "TruthSpec") -> float:
    """Share of robots whose estimated strength is nearest their true cluster strength."""
    _check_same_robots(model.k, truth.k)
    return _matching_share(model, truth.strengths, truth.assignment.labels)


def _rank_agreement(a: np.ndarray, b: np.ndarray) -> float:
    k = a.size
    if k < 2:
        raise ValidationError("rank correlation needs at least two robots")
    da = a[:, None] - a[None, :]
    db = b[:, None] - b[None, :]
    agree = (da * db > 0) | ((da == 0) & (db == 0))
    np.fill_diagonal(agree, False)
    return float(agree.sum()) / (k * (k - 1))


def rank_correlation(model_a: ClusteredModel, model_b: ClusteredModel) -> float:
    _check_same_robots(model_a.k, model_b.k)
    return _rank_agreement(np.asarray(model_a.beta), np.asarray(model_b.beta))


def rank_correlation_vs_truth(model: ClusteredModel, truth: "TruthSpec") -> float:
    _check_same_robots(model.k, truth.k)
    return _rank_agreement(np.asarray(model.beta), np.asarray(truth.beta))


def classify_strength(value: float) -> str:
    """Verbal label for a MINR or RC value."""
    for threshold, label in STRENGTH_LABELS:
        if value >= threshold:
            return label
    return "poor"


def agreement_matrix(models: Mapping[str, ClusteredModel]) -> Dict[Tuple[str, str], Dict[str, object]]:
    """MINR and RC with labels for every unordered pair of named models."""
    result = {}
    for (name_a, a), (name_b, b) in itertools.combinations(models.items(), 2):
        m, r = minr(a, b), rank_correlation(a, b)
        result[(name_a, name_b)] = {
            "c_a": a.c,
            "c_b": b.c,
            "minr": m,
            "minr_label": classify_strength(m),
            "rc": r,
            "rc_label": classify_strength(r),
        }
    return result
