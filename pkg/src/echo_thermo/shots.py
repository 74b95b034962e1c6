"""Shot-noise model for Hadamard-test estimates of Loschmidt echoes.

Real and imaginary parts are measured by separate circuits, each with its own
budget of ``n_shots``. A single outcome of the ancilla is ±1 with mean equal
to the estimated part, so the sample mean has variance ``(1 - x**2) / n_shots``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import TimeSeries

__all__ = ["ShotModel", "NoiseError", "shot_variances", "point_rng", "noisify"]


class NoiseError(ValueError):
    """Invalid input for the shot-noise model."""


@dataclass(frozen=True)
class ShotModel:
    n_shots: int
    mode: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if int(self.n_shots) < 1:
            raise ValueError("n_shots must be >= 1")
        if self.mode not in ("gaussian", "binomial"):
            raise ValueError(f"unknown noise mode {self.mode!r}")


def shot_variances(values: np.ndarray, n_shots: int) -> tuple[np.ndarray, np.ndarray]:
    values = np.asarray(values, dtype=complex)
    re_var = (1.0 - values.real**2) / n_shots
    im_var = (1.0 - values.imag**2) / n_shots
    return re_var, im_var


def point_rng(seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for one time point."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed) & (2**64 - 1), int(index)])))


def noisify(series: TimeSeries, model: ShotModel, tol: float = 1e-12) -> TimeSeries:
    """Replace an exact series by a shot-limited estimate of it.

    In ``gaussian`` mode each part receives zero-mean normal noise with the
    shot variance; in ``binomial`` mode ``n_shots`` ancilla outcomes are drawn
    per part and averaged. The returned series carries the variances of the
    input values, which are the ones a fit would use.
    """
    if not series.is_exact or np.any(series.re_var) or np.any(series.im_var):
        raise NoiseError("noisify expects an exact series")
    re_var, im_var = shot_variances(series.values, model.n_shots)
    if np.any(re_var < -tol / model.n_shots) or np.any(im_var < -tol / model.n_shots):
        raise NoiseError("echo values outside [-1, 1]; input is corrupted")
    re_var = np.clip(re_var, 0.0, None)
    im_var = np.clip(im_var, 0.0, None)

    n = int(model.n_shots)
    out = np.empty(series.grid.n_t, dtype=complex)
    for k, g in enumerate(series.values):
        rng = point_rng(model.seed, k + 1)
        if model.mode == "gaussian":
            dr, di = rng.standard_normal(2)
            out[k] = complex(g.real + dr * np.sqrt(re_var[k]), g.imag + di * np.sqrt(im_var[k]))
        else:
            p = np.clip((1.0 + np.array([g.real, g.imag])) / 2.0, 0.0, 1.0)
            zeros = rng.binomial(n, p)
            est = (2.0 * zeros - n) / n
            out[k] = complex(est[0], est[1])
    return TimeSeries(series.grid, out, re_var, im_var, n)
