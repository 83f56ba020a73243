"""Exception hierarchy for estimator failures.

Precondition violations (bad argument values, out-of-range degrees) raise
plain ``ValueError``.  Runtime failures of the numerical machinery raise
``LorpeError`` subclasses so callers (and the CLI) can tell user errors
from estimator errors.
"""

__all__ = [
    "LorpeError",
    "QuadratureError",
    "DegenerateIntervalError",
    "IllConditionedError",
    "DegenerateSampleError",
    "AllZeroDensityError",
    "AllRejectedError",
]


class LorpeError(Exception):
    """Base class for estimator failures."""


class QuadratureError(LorpeError):
    """Adaptive quadrature failed to converge."""


class DegenerateIntervalError(LorpeError):
    """Effective orthogonalization interval is (numerically) empty."""


class IllConditionedError(LorpeError):
    """Orthonormal system failed its self-consistency residual check."""


class DegenerateSampleError(LorpeError):
    """Sample carries no usable scale (e.g. zero standard deviation)."""


class AllZeroDensityError(LorpeError):
    """Clipped density is identically zero; renormalization impossible."""


class AllRejectedError(LorpeError):
    """Every candidate configuration was rejected by the criterion."""
