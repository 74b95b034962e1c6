"""Finite-temperature sampling of the transverse-field Ising model from
real-time Loschmidt echoes."""

__version__ = "0.1.0"

from .dynamics import SpinConfig, TimeGrid, TimeSeries, exact_boltzmann, exact_echoes, trotter_echoes
from .lattice import Lattice, TfimParams, build_lattice, critical_beta
from .metrics import distribution_distance, relative_weight_error
from .sampler import ChainConfig, WeightProvider, aggregate_chains, run_chain
from .shots import ShotModel, noisify
from .wick import WickConfig, wick_weight

__all__ = [
    "SpinConfig",
    "TimeGrid",
    "TimeSeries",
    "exact_boltzmann",
    "exact_echoes",
    "trotter_echoes",
    "Lattice",
    "TfimParams",
    "build_lattice",
    "critical_beta",
    "distribution_distance",
    "relative_weight_error",
    "ChainConfig",
    "WeightProvider",
    "aggregate_chains",
    "run_chain",
    "ShotModel",
    "noisify",
    "WickConfig",
    "wick_weight",
]
