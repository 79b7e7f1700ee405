"""Bayesian optimization with inverse parameter estimation: run the
search forward, or fit its parameters to an observed trajectory and
continue from there."""

from ._kernels import BACKEND as kernel_backend
from .acquisition import BoRunRecord, expected_improvement, maximize_ei, run_bo
from .core import (
    BoParams,
    IboEstimate,
    SearchSpace,
    Trajectory,
    load_trajectory,
    normalize_trajectory,
    save_trajectory,
)
from .gp import GpModel, fit, mle_lambda, predict
from .ibo import IboConfig, estimate_continuous, estimate_grid, l_bo_term, l_ini_term, total_cost
from .sampling import ProposalConfig, lhs, max_min_distance, z_bo_hat, z_ini_hat

__version__ = "0.1.0"

__all__ = [
    "BoParams",
    "BoRunRecord",
    "GpModel",
    "IboConfig",
    "IboEstimate",
    "ProposalConfig",
    "SearchSpace",
    "Trajectory",
    "estimate_continuous",
    "estimate_grid",
    "expected_improvement",
    "fit",
    "kernel_backend",
    "l_bo_term",
    "l_ini_term",
    "lhs",
    "load_trajectory",
    "max_min_distance",
    "maximize_ei",
    "mle_lambda",
    "normalize_trajectory",
    "predict",
    "run_bo",
    "save_trajectory",
    "total_cost",
    "z_bo_hat",
    "z_ini_hat",
]
