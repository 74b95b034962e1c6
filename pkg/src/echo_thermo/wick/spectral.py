"""Frequency grids and discretised local densities of states."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["FrequencyGrid", "SpectralDensity", "WickConfig", "default_n_omega"]


def default_n_omega(n_t: int) -> int:
    return max(256, 8 * n_t)


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid ``omega_j = omega_min + j * d_omega`` on ``[omega_min, omega_max)``."""

    omega_min: float
    omega_max: float
    n_omega: int

    def __post_init__(self):
        if self.n_omega < 2 or not self.omega_max > self.omega_min:
            raise ValueError("need n_omega >= 2 and omega_max > omega_min")

    @classmethod
    def nyquist(cls, dt: float, n_omega: int) -> "FrequencyGrid":
        """Grid covering the full window ``[-pi/dt, pi/dt)``."""
        return cls(-math.pi / dt, math.pi / dt, int(n_omega))

    @classmethod
    def bounded(cls, dt: float, bound: float, n_omega: int) -> "FrequencyGrid":
        """Grid on ``[-bound, bound)``, for a known bound on the spectrum.

        The bound may not exceed the Nyquist frequency ``pi/dt``.
        """
        if not 0 < bound <= math.pi / dt * (1 + 1e-12):
            raise ValueError(f"bound {bound} outside (0, pi/dt = {math.pi / dt}]")
        return cls(-bound, bound, int(n_omega))

    @property
    def spacing(self) -> float:
        return (self.omega_max - self.omega_min) / self.n_omega

    @property
    def omega(self) -> np.ndarray:
        return self.omega_min + self.spacing * np.arange(self.n_omega)


@dataclass
class SpectralDensity:
    """Bin masses (density times ``d_omega``) on a frequency grid.

    ``broadening`` is the width of a Gaussian filter that was applied to the
    time series before the density was reconstructed; Boltzmann weights
    computed from the density are divided by the matching scale factor.
    """

    grid: FrequencyGrid
    weights: np.ndarray
    broadening: float = 0.0
    method: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.grid.n_omega,):
            raise ValueError("weights must have one entry per grid point")

    @property
    def omega(self) -> np.ndarray:
        return self.grid.omega

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def mean_std(self) -> tuple[float, float]:
        p = self.weights / self.weights.sum()
        mu = float(p @ self.omega)
        var = float(p @ (self.omega - mu) ** 2)
        return mu, math.sqrt(max(var, 0.0))

    def replace(self, weights, **info) -> "SpectralDensity":
        return SpectralDensity(self.grid, weights, self.broadening, self.method, {**self.info, **info})

    def to_json(self, dt: float | None = None) -> dict:
        return {
            "omega": self.omega.tolist(),
            "weights": self.weights.tolist(),
            "dt": dt,
            "method": self.method,
            "q": self.info.get("q"),
            "chi2": self.info.get("chi2"),
            "broadening": self.broadening,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SpectralDensity":
        omega = np.asarray(doc["omega"], dtype=float)
        d = omega[1] - omega[0]
        grid = FrequencyGrid(float(omega[0]), float(omega[0] + d * len(omega)), len(omega))
        info = {k: doc.get(k) for k in ("q", "chi2") if doc.get(k) is not None}
        return cls(grid, doc["weights"], float(doc.get("broadening") or 0.0), doc.get("method", ""), info)

    def save(self, path, dt=None) -> None:
        Path(path).write_text(json.dumps(self.to_json(dt), indent=1))


@dataclass(frozen=True)
class WickConfig:
    """Settings for turning a time series into Boltzmann weights.

    ``alpha`` sets the Gaussian-filter width as ``alpha / t_max`` unless
    ``delta`` is given. ``chi2_factor`` scales the discrepancy target
    ``chi2_factor * n_t``; ``quantile`` switches the quantile filter off
    (``False``) or on. ``mild_broadening_factor`` is in units of the grid
    spacing. ``omega_bound`` restricts the frequency grid to
    ``[-omega_bound, omega_bound)`` instead of the full Nyquist window; a
    bound beyond the Nyquist frequency falls back to the full window.
    """

    method: str = "nnls"
    delta: float | None = None
    alpha: float = 8.0
    c_cut: float = 2.0
    chi2_factor: float = 2.0
    quantile: bool = True
    mild_broadening_factor: float = 1.0
    adjust_moments: bool = False
    n_omega: int | None = None
    cap_delta: bool = True
    omega_bound: float | None = None

    def __post_init__(self):
        if self.method not in ("direct", "gaussian_filter", "nnls"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.c_cut > 0:
            raise ValueError("c_cut must be positive")
        if self.chi2_factor < 1:
            raise ValueError("chi2_factor must be >= 1")
        if self.mild_broadening_factor < 0:
            raise ValueError("mild_broadening_factor must be >= 0")
