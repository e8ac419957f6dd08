#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Leave-one-match-out predictions and the prediction-error criteria built on them.

Deleting match s from a least-squares fit is a rank-one downdate, so none of
the M refits is actually carried out.  With H the hat matrix of the collapsed
design X Z and e the residuals of the full fit:

    Y_s - Yhat_s^(-s)  = e_s / (1 - h_ss)
    e_t^(-s)           = e_t + H_ts e_s / (1 - h_ss)        (t != s)

The second line gives the residuals of the other M - 1 matches under the fit
without s, which is all that the leave-one-out win probability needs.
"""

# --------------------------------------------------------------------------- #
#  Standard-library imports
# --------------------------------------------------------------------------- #
import logging
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Iterator, List, Tuple, Union

# --------------------------------------------------------------------------- #
#  Third-party imports
# --------------------------------------------------------------------------- #
import numpy as np

# --------------------------------------------------------------------------- #
#  Project imports
# --------------------------------------------------------------------------- #
import config
from errors import ValidationError
from estimator.model_core import (
    ClusterAssignment,
    ClusteredModel,
    DesignMatrix,
    outcome_from_probability,
    response_scale,
    snap_to_zero,
)

_logger = logging.getLogger(__name__)


class Criterion(str, Enum):
    """Model selection criteria; the value names the ``CriterionRow`` column."""

    MSPE_Y = "mspe_y"
    MSPE_P = "mspe_p"
    MSPE_D = "mspe_d"
    MSPEB_Y = "mspeb_y"
    MSPEB_P = "mspeb_p"
    MSPEB_D = "mspeb_d"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class LooRecord:
    """Leave-one-out prediction for a single match."""

    match_id: str
    leverage: float
    y_loo: float
    p_loo: float
    d_loo: float


@dataclass(frozen=True)
class LooPredictions:
    """Leave-one-out predictions for every match of one candidate model."""

    c: int
    match_ids: Tuple[str, ...]
    leverage: np.ndarray
    y_loo: np.ndarray
    p_loo: np.ndarray
    d_loo: np.ndarray
    feasible: bool

    def __len__(self) -> int:
        return len(self.match_ids)

    def __iter__(self) -> Iterator[LooRecord]:
        for s, match_id in enumerate(self.match_ids):
            yield LooRecord(
                match_id=match_id,
                leverage=float(self.leverage[s]),
                y_loo=float(self.y_loo[s]),
                p_loo=float(self.p_loo[s]),
                d_loo=float(self.d_loo[s]),
            )


@dataclass(frozen=True)
class CriterionRow:
    """Estimated prediction errors of one candidate; +inf marks an infeasible one."""

    c: int
    mspe_y_hat: float
    mspe_p_hat: float
    mspe_d_hat: float
    pcp_hat: float
    mspeb_y_hat: float
    mspeb_p_hat: float
    mspeb_d_hat: float
    feasible: bool

    def value(self, criterion: Union[Criterion, str]) -> float:
        return getattr(self, f"{Criterion(criterion).value}_hat")

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


# --------------------------------------------------------------------------- #
#  Hat matrix
# --------------------------------------------------------------------------- #
def _hat_matrix(design: DesignMatrix, assignment: ClusterAssignment) -> Tuple[np.ndarray, np.ndarray]:
    xr = design.x @ assignment.indicator()
    pinv = np.linalg.pinv(xr, rtol=config.RANK_TOLERANCE)
    return xr, xr @ pinv


def leverage(design: DesignMatrix, assignment: ClusterAssignment) -> np.ndarray:
    """Diagonal of the hat matrix of X Z, clipped to [0, 1]."""
    if assignment.k != design.k:
        raise ValidationError(f"assignment covers {assignment.k} robots, design has {design.k}")
    _, hat = _hat_matrix(design, assignment)
    return np.clip(np.diag(hat).copy(), 0.0, 1.0)


# --------------------------------------------------------------------------- #
#  Leave-one-out predictions
# --------------------------------------------------------------------------- #
def loo_predictions(model: ClusteredModel, design: DesignMatrix) -> LooPredictions:
    """
    Leave-one-out score, probability and outcome predictions of ``model``.

    Parameters
    ----------
    model : ClusteredModel
        Fit of ``design`` for some cluster assignment.
    design : DesignMatrix
        The data the model was fitted on.

    Returns
    -------
    LooPredictions
        ``feasible`` is False (and predictions are NaN) when a match cannot be
        predicted without itself, i.e. some leverage is within
        ``config.LEVERAGE_TOLERANCE`` of 1, or when there is only one match.
    """
    m = design.m
    _, hat = _hat_matrix(design, model.assignment)
    h = np.clip(np.diag(hat).copy(), 0.0, 1.0)

    feasible = m >= 2 and bool(np.all(h < 1.0 - config.LEVERAGE_TOLERANCE))
    if not feasible:
        _logger.debug(f"c={model.c}: leave-one-out infeasible (max leverage {h.max():.12f})")
        nan = np.full(m, np.nan)
        return LooPredictions(model.c, design.match_ids, h, nan, nan.copy(), nan.copy(), False)

    scale = response_scale(design)
    e = model.residuals
    deleted = e / (1.0 - h)
    y_loo = snap_to_zero(design.y - deleted, scale)

    # row s: residuals of every match under the fit without match s
    refit = snap_to_zero(e[np.newaxis, :] + hat * deleted[:, np.newaxis], scale)
    below = refit <= -y_loo[:, np.newaxis]
    np.fill_diagonal(below, False)
    p_loo = 1.0 - below.sum(axis=1) / (m - 1)
    d_loo = outcome_from_probability(p_loo)

    return LooPredictions(model.c, design.match_ids, h, y_loo, p_loo, np.asarray(d_loo), True)


def loo_strengths(model: ClusteredModel, design: DesignMatrix, s: int) -> np.ndarray:
    """Zero-sum robot strengths of the fit without match ``s``, same cluster labels."""
    if not 0 <= s < design.m:
        raise ValidationError(f"match index {s} outside 0..{design.m - 1}")
    xr, hat = _hat_matrix(design, model.assignment)
    h = float(np.clip(hat[s, s], 0.0, 1.0))
    if h >= 1.0 - config.LEVERAGE_TOLERANCE:
        raise ValidationError(f"match {design.match_ids[s]} has leverage 1 and cannot be left out")
    gram_pinv = np.linalg.pinv(xr.T @ xr, rtol=config.RANK_TOLERANCE, hermitian=True)
    theta = model.theta - gram_pinv @ xr[s] * (model.residuals[s] / (1.0 - h))
    sizes = model.assignment.sizes
    theta = theta - float(sizes @ theta) / float(sizes.sum())
    return theta[model.assignment.labels]


# --------------------------------------------------------------------------- #
#  Criteria
# --------------------------------------------------------------------------- #
def mspeb(mspe: float, c: int, m: int) -> float:
    """ln(MSPE) + c ln(M) / M."""
    if mspe <= 0.0:
        return -math.inf
    return math.log(mspe) + c * math.log(m) / m


def infeasible_row(c: int) -> CriterionRow:
    inf = math.inf
    return CriterionRow(c, inf, inf, inf, -inf, inf, inf, inf, False)


def mspe_hats(loo: LooPredictions, design: DesignMatrix) -> CriterionRow:
    """Estimated mean squared prediction errors and their penalized forms."""
    if not loo.feasible:
        return infeasible_row(loo.c)
    m = design.m
    mspe_y = float(np.mean((design.y - loo.y_loo) ** 2))
    mspe_p = float(np.mean((design.d - loo.p_loo) ** 2))
    mspe_d = float(np.mean((design.d - loo.d_loo) ** 2))
    return CriterionRow(
        c=loo.c,
        mspe_y_hat=mspe_y,
        mspe_p_hat=mspe_p,
        mspe_d_hat=mspe_d,
        pcp_hat=1.0 - mspe_d,
        mspeb_y_hat=mspeb(mspe_y, loo.c, m),
        mspeb_p_hat=mspeb(mspe_p, loo.c, m),
        mspeb_d_hat=mspeb(mspe_d, loo.c, m),
        feasible=True,
    )


def criterion_row(model: ClusteredModel, design: DesignMatrix) -> CriterionRow:
    return mspe_hats(loo_predictions(model, design), design)


CriterionTable = List[CriterionRow]
