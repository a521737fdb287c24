"""Chaos expansions, asymptotic variances and Monte Carlo checks for
Breuer-Major limits of functionals of stationary Gaussian vector fields."""

__version__ = "0.1.0"

from .covariance import CovarianceModel, check_c1, eval_r, from_spectral, psi, whiten
from .hermite import (
    ChaosExpansion,
    Functional,
    MultiIndex,
    chaos_coefficients,
    evaluate_G_q,
    hermite_eval,
    hermite_rank,
    multi_hermite_eval,
)
from .second_chaos import c_matrix, v2_spectral, v2_trace
from .simulate import FieldSample, GridSpec, empirical_covariance, simulate
from .spectral import SpectralModel
from .variance import c_G, pair_expectation, v_limit, v_s

__all__ = [
    "ChaosExpansion", "CovarianceModel", "FieldSample", "Functional", "GridSpec", "MultiIndex",
    "SpectralModel", "c_G", "c_matrix", "chaos_coefficients", "check_c1", "empirical_covariance",
    "eval_r", "evaluate_G_q", "from_spectral", "hermite_eval", "hermite_rank",
    "multi_hermite_eval", "pair_expectation", "psi", "simulate", "v2_spectral", "v2_trace",
    "v_limit", "v_s", "whiten",
]
