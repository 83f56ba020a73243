"""Boundary-adaptive density estimation by local orthogonal polynomial expansion."""

from .core import (
    DensityEstimate,
    LorpeConfig,
    Taper,
    coefficients,
    effective_kernel,
    estimate_on_grid,
    evaluate_raw,
    taper_from_degree,
)
from .errors import LorpeError
from .kernels import KernelSpec, gaussian, get_kernel, symmetric_beta, uniform
from .orthopoly import build_system, closed_form_gegenbauer, eval_poly

__all__ = [
    "DensityEstimate",
    "KernelSpec",
    "LorpeConfig",
    "LorpeError",
    "Taper",
    "build_system",
    "closed_form_gegenbauer",
    "coefficients",
    "effective_kernel",
    "estimate_on_grid",
    "eval_poly",
    "evaluate_raw",
    "gaussian",
    "get_kernel",
    "symmetric_beta",
    "taper_from_degree",
    "uniform",
]

__version__ = "0.1.0"
