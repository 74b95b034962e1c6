"""Time series to Boltzmann weight, end to end."""
from __future__ import annotations

import math

import numpy as np

from ..dynamics import TimeSeries
from .density import adjust_moments, nnls_density, quantile_truncate, select_quantile, weight_from_density
from .fourier import direct_fourier, filter_width, gaussian_filter_weight
from .spectral import FrequencyGrid, SpectralDensity, WickConfig, default_n_omega

__all__ = ["wick_weight"]


def wick_weight(
    series: TimeSeries,
    beta,
    config: WickConfig = WickConfig(),
    energy_moments: tuple[float, float] | None = None,
    max_abs_energy: float | None = None,
    grid: FrequencyGrid | None = None,
) -> tuple[np.ndarray | float, SpectralDensity]:
    """Boltzmann weight(s) of one state from its echo series.

    ``energy_moments`` (mean, std) are required when ``config.adjust_moments``
    is set. ``max_abs_energy`` enables the interference cap of the Gaussian
    filter.
    """
    if grid is None:
        n_omega = config.n_omega or default_n_omega(series.grid.n_t)
        if config.omega_bound is not None:
            bound = min(config.omega_bound, math.pi / series.grid.dt)
            grid = FrequencyGrid.bounded(series.grid.dt, bound, n_omega)
        else:
            grid = FrequencyGrid.nyquist(series.grid.dt, n_omega)

    if config.method == "direct":
        density = direct_fourier(series, grid)
        return weight_from_density(density, beta, unsafe=True), density

    if config.method == "gaussian_filter":
        if config.delta is not None:
            delta = config.delta
        else:
            delta = filter_width(
                config.alpha,
                series.grid.t_max,
                series.grid.dt if config.cap_delta else None,
                max_abs_energy,
            )
        return gaussian_filter_weight(series, beta, delta, config.c_cut, grid)

    density = nnls_density(series, grid, broadening=config.mild_broadening_factor * grid.spacing)
    if config.quantile and not series.is_exact:
        choice = select_quantile(density, series, config.chi2_factor * series.grid.n_t)
        density = quantile_truncate(density, choice.q)
        density.info.update(chi2=choice.chi2, best_effort=choice.best_effort)
    if config.adjust_moments:
        if energy_moments is None:
            raise ValueError("adjust_moments needs the exact energy mean and spread")
        density = adjust_moments(density, *energy_moments)
    return weight_from_density(density, beta), density
