"""Direct Fourier transform of echoes and the Gaussian-filter weight estimate."""
from __future__ import annotations

import math

import numpy as np

from ..dynamics import TimeSeries
from .spectral import FrequencyGrid, SpectralDensity, default_n_omega

__all__ = [
    "FilterCapError",
    "direct_fourier",
    "filter_cap",
    "filter_width",
    "gaussian_filter_weight",
]


class FilterCapError(ValueError):
    """The Gaussian filter is wider than the sampling window allows."""


def _default_grid(series: TimeSeries, grid):
    if grid is None:
        return FrequencyGrid.nyquist(series.grid.dt, default_n_omega(series.grid.n_t))
    return grid


def direct_fourier(series: TimeSeries, grid: FrequencyGrid | None = None, values=None) -> SpectralDensity:
    """Discrete Fourier transform of the conjugate-symmetric extension of a series.

    With ``G(-t) = conj(G(t))`` and ``G(0) = 1`` the transform is real; the bin
    masses are ``d_omega * dt / (2 pi) * sum_k exp(i omega t_k) G(t_k)`` over
    ``k = -n_t..n_t``. On a full Nyquist grid with ``n_omega > n_t`` the
    masses sum to ``G(0)`` exactly. ``values`` overrides the series values
    (used for filtered series).
    """
    grid = _default_grid(series, grid)
    g = series.values if values is None else np.asarray(values, dtype=complex)
    t = series.times
    phases = np.exp(1j * np.outer(grid.omega, t))
    spectrum = 1.0 + 2.0 * (phases @ g).real
    masses = grid.spacing * series.grid.dt / (2 * math.pi) * spectrum
    return SpectralDensity(grid, masses, method="direct")


def filter_cap(dt: float, max_abs_energy: float) -> float | None:
    """Largest filter width free of interference from periodic images.

    Only binding when the sampling window ``pi/dt`` is less than twice the
    spectral radius; returns ``None`` otherwise.
    """
    window = math.pi / dt
    if window >= 2 * max_abs_energy:
        return None
    cap = (window - max_abs_energy) / 2
    if cap <= 0:
        raise FilterCapError("sampling rate below the Nyquist rate for this spectrum")
    return cap


def filter_width(alpha: float, t_max: float, dt: float | None = None, max_abs_energy: float | None = None) -> float:
    """Filter width ``alpha / t_max``, capped at low sampling rates."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    delta = alpha / t_max
    if dt is not None and max_abs_energy is not None:
        cap = filter_cap(dt, max_abs_energy)
        if cap is not None:
            delta = min(delta, cap)
    return delta


def gaussian_filter_weight(
    series: TimeSeries,
    beta,
    delta: float,
    c_cut: float = 2.0,
    grid: FrequencyGrid | None = None,
    delta_cap: float | None = None,
):
    """Boltzmann weight from a Gaussian-filtered, cut Fourier density.

    The series is damped by ``exp(-delta**2 t**2 / 2)`` and transformed; every
    bin below ``c_cut`` times the largest negative magnitude is zeroed, the
    remainder is integrated against ``exp(-beta omega)`` and divided by the
    broadening factor ``exp(beta**2 delta**2 / 2)``.

    Returns
    -------
    weight : float or numpy.ndarray
        One weight per entry of ``beta``.
    density : SpectralDensity
        The filtered density after the cut.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if delta_cap is not None and delta > delta_cap:
        raise FilterCapError(f"delta={delta} exceeds the interference cap {delta_cap}")
    filt = np.exp(-0.5 * (delta * series.times) ** 2)
    dens = direct_fourier(series, grid, values=series.values * filt)
    m = dens.weights
    neg = m[m < 0]
    d_cut = c_cut * float(np.max(-neg)) if neg.size else 0.0
    cut = np.where(m < d_cut, 0.0, m)
    density = SpectralDensity(dens.grid, cut, broadening=delta, method="gaussian_filter", info={"cut": d_cut})
    betas = np.atleast_1d(np.asarray(beta, dtype=float))
    w = np.exp(-np.outer(betas, density.omega)) @ cut / np.exp(0.5 * (betas * delta) ** 2)
    return (float(w[0]) if np.ndim(beta) == 0 else w), density
