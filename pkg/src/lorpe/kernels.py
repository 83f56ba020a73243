"""Weight kernels for orthogonalization and for the KDE baseline.

Conventions
-----------
* Kernels live in the scaled coordinate y = (x - x_fit)/h and integrate
  to one over their support.
* ``half_width`` is the support half-width a_K: 1 for the compact
  families, infinity for the Gaussian.
* All quadrature against the Gaussian is restricted to [-12, 12]; the
  tail mass beyond that is below 1e-31, under double rounding.  The
  ``quad_half_width`` property exposes that finite window.

The symmetric Beta family has density c_a * (1 - y^2)^(a - 1/2) on
[-1, 1] with c_a = Gamma(a+1) / [sqrt(pi) * Gamma(a+1/2)], so alpha =
3/2, 5/2, 7/2, 9/2 give the Epanechnikov, biweight, triweight and
quadweight kernels.  The uniform kernel is the alpha = 1/2 member kept
as its own family.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._quad import integrate_adaptive

__all__ = [
    "KernelSpec",
    "GAUSS_QUAD_HALF_WIDTH",
    "gaussian",
    "symmetric_beta",
    "uniform",
    "KERNELS",
    "get_kernel",
    "eval_kernel",
    "kernel_norm_check",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)

GAUSS_QUAD_HALF_WIDTH = 12.0


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric weight function K with support [-half_width, half_width].

    Fields
    ------
    family:
        One of "gaussian", "symmetric_beta", "uniform".
    alpha:
        Beta exponent parameter (>= 1/2); 0.0 for the other families.
    half_width:
        Support half-width a_K in y coordinates (inf for the Gaussian).
    """

    family: str
    alpha: float
    half_width: float

    def __post_init__(self) -> None:
        if self.family not in ("gaussian", "symmetric_beta", "uniform"):
            raise ValueError(f"unknown kernel family: {self.family!r}")
        if self.family == "symmetric_beta" and self.alpha < 0.5:
            raise ValueError("symmetric beta kernel needs alpha >= 1/2")

    @property
    def quad_half_width(self) -> float:
        """Finite half-width used for every quadrature against K."""
        if self.family == "gaussian":
            return GAUSS_QUAD_HALF_WIDTH
        return self.half_width

    @property
    def beta_norm(self) -> float:
        """Normalizing constant c_a of the symmetric Beta density."""
        a = self.alpha
        return math.gamma(a + 1.0) / (math.sqrt(math.pi) * math.gamma(a + 0.5))

    def __call__(self, y):
        return eval_kernel(self, y)


def gaussian() -> KernelSpec:
    return KernelSpec("gaussian", 0.0, math.inf)


def symmetric_beta(alpha: float) -> KernelSpec:
    return KernelSpec("symmetric_beta", float(alpha), 1.0)


def uniform() -> KernelSpec:
    return KernelSpec("uniform", 0.0, 1.0)


#: CLI spellings of the supported kernels.
KERNELS: dict[str, KernelSpec] = {
    "gauss": gaussian(),
    "epan": symmetric_beta(1.5),
    "biweight": symmetric_beta(2.5),
    "triweight": symmetric_beta(3.5),
    "quadweight": symmetric_beta(4.5),
    "uniform": uniform(),
}


def get_kernel(name: str) -> KernelSpec:
    """Resolve a CLI kernel name to its KernelSpec."""
    try:
        return KERNELS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel {name!r}; choose from {sorted(KERNELS)}"
        ) from None


def eval_kernel(kernel: KernelSpec, y):
    """Evaluate K(y).  Accepts scalars or arrays; exactly 0 off support."""
    y = np.asarray(y, dtype=float)
    if kernel.family == "gaussian":
        out = np.exp(-0.5 * y * y) / _SQRT_2PI
    elif kernel.family == "uniform":
        out = np.where(np.abs(y) <= 1.0, 0.5, 0.0)
    else:
        inside = np.abs(y) <= 1.0
        base = np.where(inside, 1.0 - y * y, 0.0)
        out = kernel.beta_norm * base ** (kernel.alpha - 0.5)
        out = np.where(inside, out, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def kernel_norm_check(kernel: KernelSpec, rtol: float = 1e-13) -> float:
    """Numerical integral of K over its (quadrature) support.

    Returns the adaptive Gauss-Legendre value; raises QuadratureError if
    order doubling never converges.  Used by tests and sanity checks.
    """
    hw = kernel.quad_half_width
    return integrate_adaptive(lambda y: eval_kernel(kernel, y), -hw, hw, rtol=rtol)
