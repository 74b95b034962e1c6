"""Asymptotic error of the Gaussian-filter weight estimate.

For a single spectral line the cut removes the part of the broadened peak
below ``omega_0 - C delta**2 t_max``; expanding the resulting error function
for large ``alpha = delta * t_max`` gives the predictor implemented here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erfc

__all__ = ["ErrorPredictorParams", "predict_gf_error", "exact_cut_error", "fit_predictor_constant", "single_line_series"]


@dataclass(frozen=True)
class ErrorPredictorParams:
    C: float = 1.0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")


def predict_gf_error(alpha, beta: float, t_max: float, params: ErrorPredictorParams = ErrorPredictorParams()):
    """Large-alpha relative error; saturates at 1 once ``beta / t_max >= C``."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= 0):
        raise ValueError("alpha must be positive")
    gap = params.C - beta / t_max
    if gap <= 0:
        return np.ones_like(alpha) if alpha.ndim else 1.0
    err = np.exp(-0.5 * (alpha * gap) ** 2) / (math.sqrt(2 * math.pi) * alpha * gap)
    return err if alpha.ndim else float(err)


def exact_cut_error(alpha, beta: float, t_max: float, params: ErrorPredictorParams = ErrorPredictorParams()):
    """Relative error before the large-alpha expansion (error-function form)."""
    alpha = np.asarray(alpha, dtype=float)
    z = alpha / math.sqrt(2) * (beta / t_max - params.C)
    return 0.5 * erfc(-z)


def fit_predictor_constant(alpha, errors, beta: float, t_max: float) -> ErrorPredictorParams:
    """Least-squares fit of ``C`` in log space to measured relative errors."""
    alpha = np.asarray(alpha, dtype=float)
    log_err = np.log(np.asarray(errors, dtype=float))
    lo = beta / t_max + 1e-6

    def loss(c):
        pred = predict_gf_error(alpha, beta, t_max, ErrorPredictorParams(c))
        # floor keeps the loss finite where the prediction underflows
        return float(np.sum((np.log(np.maximum(pred, np.finfo(float).tiny)) - log_err) ** 2))

    res = minimize_scalar(loss, bounds=(lo, lo + 10.0), method="bounded")
    return ErrorPredictorParams(float(res.x))


def single_line_series(omega0: float, grid):
    """Exact echo ``exp(-i omega0 t)`` of a single eigenstate on ``grid``."""
    from ..dynamics import TimeSeries

    return TimeSeries(grid, np.exp(-1j * omega0 * grid.times))
