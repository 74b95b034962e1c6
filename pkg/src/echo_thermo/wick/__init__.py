"""Wick rotation: from real-time echoes to imaginary-time Boltzmann weights."""
from .density import (
    QuantileChoice,
    adjust_moments,
    chi2,
    nnls_density,
    quantile_truncate,
    select_quantile,
    weight_from_density,
)
from .fourier import FilterCapError, direct_fourier, filter_cap, filter_width, gaussian_filter_weight
from .lawson_hanson import NNLSError, nnls
from .pipeline import wick_weight
from .predictor import ErrorPredictorParams, exact_cut_error, fit_predictor_constant, predict_gf_error, single_line_series
from .spectral import FrequencyGrid, SpectralDensity, WickConfig, default_n_omega

__all__ = [
    "ErrorPredictorParams",
    "FilterCapError",
    "FrequencyGrid",
    "NNLSError",
    "QuantileChoice",
    "SpectralDensity",
    "WickConfig",
    "adjust_moments",
    "chi2",
    "default_n_omega",
    "direct_fourier",
    "exact_cut_error",
    "filter_cap",
    "filter_width",
    "fit_predictor_constant",
    "gaussian_filter_weight",
    "nnls",
    "nnls_density",
    "predict_gf_error",
    "quantile_truncate",
    "select_quantile",
    "single_line_series",
    "weight_from_density",
    "wick_weight",
]
