"""Non-negative reconstruction of local densities and its regularisation."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..dynamics import TimeSeries
from .lawson_hanson import nnls
from .spectral import FrequencyGrid, SpectralDensity, default_n_omega

__all__ = [
    "QuantileChoice",
    "fit_sigmas",
    "chi2",
    "nnls_density",
    "quantile_truncate",
    "select_quantile",
    "adjust_moments",
    "weight_from_density",
]

T0_SIGMA_FACTOR = 1e-4


def _grid(series, grid):
    if grid is None:
        return FrequencyGrid.nyquist(series.grid.dt, default_n_omega(series.grid.n_t))
    return grid


def _filter(series: TimeSeries, broadening: float) -> np.ndarray:
    return np.exp(-0.5 * (broadening * series.times) ** 2)


def fit_sigmas(series: TimeSeries, broadening: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Standard deviations of the real and imaginary rows of the fit.

    Exact series get unit weights. For noisy series the shot variances are
    floored at one shot's resolution so points with ``|Re G| = 1`` stay finite,
    and scaled by the filter applied to the series.
    """
    if series.is_exact:
        ones = np.ones(series.grid.n_t)
        return ones, ones.copy()
    floor = 1.0 / float(series.n_shots) ** 2
    f = _filter(series, broadening)
    return f * np.sqrt(np.maximum(series.re_var, floor)), f * np.sqrt(np.maximum(series.im_var, floor))


def _forward(series: TimeSeries, grid: FrequencyGrid) -> np.ndarray:
    return np.exp(-1j * np.outer(series.times, grid.omega))


def _misfit(series: TimeSeries, grid: FrequencyGrid, broadening: float):
    # chi^2 as a function of the bin masses, with the forward matrix built once
    f = _filter(series, broadening)
    target = series.values * f
    fwd = _forward(series, grid)
    s_re, s_im = fit_sigmas(series, broadening)

    def evaluate(weights):
        resid = target - fwd @ weights
        return float(np.sum((resid.real / s_re) ** 2) + np.sum((resid.imag / s_im) ** 2))

    return evaluate


def chi2(density: SpectralDensity, series: TimeSeries) -> float:
    """Variance-weighted misfit of a density to the ``t > 0`` samples.

    The comparison uses the series filtered with the density's broadening,
    the same data the density was fitted to. The density is not renormalised.
    """
    return _misfit(series, density.grid, density.broadening)(density.weights)


def nnls_density(
    series: TimeSeries,
    grid: FrequencyGrid | None = None,
    broadening: float = 0.0,
    t0_sigma_factor: float = T0_SIGMA_FACTOR,
    maxiter: int | None = None,
) -> SpectralDensity:
    """Non-negative density whose transform best fits the series.

    Each sample contributes a real and an imaginary row weighted by its
    inverse standard deviation. ``G(0) = 1`` enters as an extra row holding
    the normalisation, with a standard deviation ``t0_sigma_factor`` times the
    median of the others. A non-zero ``broadening`` damps the series by
    ``exp(-broadening**2 t**2 / 2)`` before the fit, so the reconstructed
    density is the Gaussian-broadened one.
    """
    grid = _grid(series, grid)
    f = _filter(series, broadening)
    g = series.values * f
    s_re, s_im = fit_sigmas(series, broadening)
    s0 = t0_sigma_factor * float(np.median(np.concatenate([s_re, s_im])))
    m = _forward(series, grid)
    A = np.vstack([m.real / s_re[:, None], m.imag / s_im[:, None], np.full((1, grid.n_omega), 1.0 / s0)])
    b = np.concatenate([g.real / s_re, g.imag / s_im, [1.0 / s0]])
    x, _ = nnls(A, b, maxiter=maxiter)
    density = SpectralDensity(grid, x, broadening=broadening, method="nnls")
    density.info["chi2"] = chi2(density, series)
    return density


def _cut_indices(p: np.ndarray, q: float) -> tuple[int, int]:
    # lowest kept bin: first index whose CDF reaches q; highest kept: mirror image
    lower = np.cumsum(p)
    upper = np.cumsum(p[::-1])[::-1]
    lo = int(np.argmax(lower >= q)) if q > 0 else 0
    hi_candidates = np.nonzero(upper >= q)[0] if q > 0 else np.array([len(p) - 1])
    hi = int(hi_candidates[-1]) if hi_candidates.size else len(p) - 1
    return lo, hi


def quantile_truncate(density: SpectralDensity, q: float) -> SpectralDensity:
    """Zero every bin outside the ``[q, 1 - q]`` quantile range (no renormalisation)."""
    if not 0 <= q < 0.5:
        raise ValueError("q must lie in [0, 0.5)")
    w = density.weights
    if np.any(w < 0):
        raise ValueError("quantile filter needs a non-negative density")
    if q == 0 or w.sum() <= 0:
        return density.replace(w.copy(), q=float(q))
    lo, hi = _cut_indices(w / w.sum(), q)
    out = np.zeros_like(w)
    out[lo : hi + 1] = w[lo : hi + 1]
    return density.replace(out, q=float(q))


@dataclass(frozen=True)
class QuantileChoice:
    q: float
    chi2: float
    best_effort: bool = False


def select_quantile(density: SpectralDensity, series: TimeSeries, chi2_target: float) -> QuantileChoice:
    """Strongest quantile truncation that still fits the data to ``chi2_target``.

    The misfit only changes where ``q`` crosses a cumulative mass of the
    density, so every such breakpoint below 1/2 is evaluated. Scanning upward
    from ``q = 0``, the last breakpoint before the misfit first exceeds the
    target is returned. Exact series carry no noise to absorb and give
    ``q = 0``. If the untruncated density already misses the target the result
    is ``q = 0`` flagged ``best_effort``.
    """
    misfit = _misfit(series, density.grid, density.broadening)
    base = misfit(density.weights)
    if series.is_exact:
        return QuantileChoice(0.0, base)
    if base > chi2_target:
        return QuantileChoice(0.0, base, best_effort=True)
    w = density.weights
    p = w / w.sum()
    breaks = np.unique(np.concatenate([np.cumsum(p), np.cumsum(p[::-1])]))
    breaks = breaks[(breaks > 0) & (breaks < 0.5)]
    best = QuantileChoice(0.0, base)
    for q in breaks:
        c = misfit(quantile_truncate(density, float(q)).weights)
        if c > chi2_target:
            break
        best = QuantileChoice(float(q), c)
    return best


def _rebin(grid: FrequencyGrid, positions: np.ndarray, masses: np.ndarray) -> np.ndarray:
    # linear (cloud-in-cell) split between the two neighbouring grid points;
    # keeps mass and mean exactly for points inside the grid
    u = (positions - grid.omega_min) / grid.spacing
    u = np.clip(u, 0.0, grid.n_omega - 1)
    left = np.floor(u).astype(int)
    left = np.minimum(left, grid.n_omega - 2)
    frac = u - left
    out = np.zeros(grid.n_omega)
    np.add.at(out, left, masses * (1 - frac))
    np.add.at(out, left + 1, masses * frac)
    return out


def adjust_moments(density: SpectralDensity, mean_energy: float, std_energy: float) -> SpectralDensity:
    """Shift and rescale a density so its mean and spread match given values.

    The density is normalised, its support mapped by
    ``omega -> mean + (std / std_hat) * (omega - mean_hat)`` and re-binned
    onto the original grid. For a density reconstructed from a broadened
    series the target spread is ``sqrt(std**2 + broadening**2)``, the spread
    of the broadened exact density.
    """
    std_energy = math.hypot(std_energy, density.broadening)
    w = density.weights
    total = w.sum()
    if not total > 0:
        raise ValueError("density has no mass")
    p = w / total
    omega = density.omega
    mu = float(p @ omega)
    sd = math.sqrt(max(float(p @ (omega - mu) ** 2), 0.0))
    nz = p > 0
    if sd == 0.0:
        if std_energy > 0:
            warnings.warn("single-bin density cannot be stretched; placing it at the target mean", stacklevel=2)
        new = _rebin(density.grid, np.array([mean_energy]), np.array([1.0]))
    else:
        pos = mean_energy + (std_energy / sd) * (omega[nz] - mu)
        new = _rebin(density.grid, pos, p[nz])
    return density.replace(new, adjusted=True)


def weight_from_density(density: SpectralDensity, beta, unsafe: bool = False):
    """``sum_j m_j exp(-beta omega_j)`` divided by the broadening factor.

    Signed densities (from a plain Fourier transform) are refused unless
    ``unsafe`` is set.
    """
    w = density.weights
    if not unsafe and np.any(w < 0):
        raise ValueError("signed density; pass unsafe=True to integrate it anyway")
    betas = np.atleast_1d(np.asarray(beta, dtype=float))
    if np.any(betas < 0):
        raise ValueError("beta must be non-negative")
    vals = np.exp(-np.outer(betas, density.omega)) @ w / np.exp(0.5 * (betas * density.broadening) ** 2)
    return float(vals[0]) if np.ndim(beta) == 0 else vals
