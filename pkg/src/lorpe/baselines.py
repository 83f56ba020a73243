"""Reference estimators: kernel density estimates and series estimates.

The KDE family covers the plain estimator, boundary correction by data
reflection (each point also contributes its mirror image about a given
boundary, and the estimate is kept on the data's side), and high-order
variants that swap the base kernel for the interior effective kernel of
even order r.  Order r = 2 reproduces the plain KDE exactly; interior
tapered expansions and high-order KDEs agree pointwise, so the two code
paths cross-check each other.

The series baseline maps the sample onto [0,1] by sending the extreme
order statistics to the 1/(2n) and 1 - 1/(2n) quantiles, expands in
polynomials orthonormal under the uniform weight on a 2048-point
midpoint grid (a discrete stand-in for Legendre polynomials), and maps
back with the linear-map Jacobian.  Term count comes either from the
caller or from a risk-threshold scan: keep term j while n theta_j^2
exceeds four times the sample variance of phi_j, stopping after two
consecutive failures.  The threshold scan is a stated stand-in for the
classical order-selection rule, not a reconstruction of it.

``legendre_osde_raw`` is the continuous-Legendre series on an explicit
interval; the huge-bandwidth limit of the tapered expansion must agree
with it, which the test suite exercises directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

from .core import DensityEstimate, GridEngine, LorpeConfig, default_grid, taper_from_degree
from .errors import AllZeroDensityError, DegenerateSampleError
from .kernels import KernelSpec, eval_kernel, gaussian
from .orthopoly import _stieltjes_z, recurrence_apply

__all__ = [
    "OsdeConfig",
    "kde_estimate",
    "kde_highorder_estimate",
    "osde_estimate",
    "select_osde_terms",
    "legendre_osde_raw",
]

#: Largest series order the automatic term scan will consider.
J_MAX_DEFAULT = 48

#: Threshold factor and failure window of the term scan.
_TERM_FACTOR = 4.0
_TERM_PATIENCE = 2


def _mirror_support(sample, mirror: float) -> tuple[float, float]:
    """Support side implied by a reflection boundary: the data's side."""
    if float(np.median(sample)) >= mirror:
        return (mirror, math.inf)
    return (-math.inf, mirror)


def _finalize(grid: np.ndarray, raw: np.ndarray) -> DensityEstimate:
    clipped = np.maximum(raw, 0.0)
    norm = float(np.trapezoid(clipped, grid))
    if not norm > 0.0:
        raise AllZeroDensityError("clipped density integrates to zero on the grid")
    return DensityEstimate(grid=grid, raw=raw, value=clipped / norm, norm_constant=norm)


def kde_estimate(
    sample,
    h: float,
    kernel: KernelSpec = gaussian(),
    mirror: float | None = None,
    support: tuple[float, float] | None = None,
    grid=None,
) -> DensityEstimate:
    """Kernel density estimate, optionally boundary-corrected by reflection.

    With ``mirror`` at boundary c every point also contributes its
    reflection 2c - x_i and the grid is restricted to the data's side
    of c.  The raw curve keeps the 1/(nh) scaling of the original
    sample size; mass falling off the grid is recovered by the final
    renormalization.
    """
    if not h > 0.0:
        raise ValueError("h must be > 0")
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("sample must be nonempty")
    if support is None:
        support = _mirror_support(x, mirror) if mirror is not None else (-math.inf, math.inf)
    if grid is None:
        grid = default_grid(x, LorpeConfig(h=h, m=0.0, kernel=kernel, support=support))
    grid = np.asarray(grid, dtype=float)
    pts = x if mirror is None else np.concatenate([x, 2.0 * mirror - x])
    raw = np.zeros(grid.size)
    chunk = max(1, (1 << 21) // pts.size)
    for start in range(0, grid.size, chunk):
        stop = min(start + chunk, grid.size)
        y = (grid[start:stop, None] - pts[None, :]) / h
        raw[start:stop] = eval_kernel(kernel, y).sum(axis=1)
    raw /= x.size * h
    return _finalize(grid, raw)


def kde_highorder_estimate(
    sample,
    h: float,
    kernel: KernelSpec = gaussian(),
    r: int = 2,
    mirror: float | None = None,
    support: tuple[float, float] | None = None,
    grid=None,
) -> DensityEstimate:
    """KDE with the interior effective kernel of even order r.

    The order-r kernel is the step-taper expansion at degree r - 1
    applied with interior polynomials everywhere, so no boundary
    adaptation happens beyond the optional reflection.
    """
    if not (r >= 2 and r % 2 == 0):
        raise ValueError("r must be an even integer >= 2")
    if not h > 0.0:
        raise ValueError("h must be > 0")
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("sample must be nonempty")
    if support is None:
        support = _mirror_support(x, mirror) if mirror is not None else (-math.inf, math.inf)
    if grid is None:
        grid = default_grid(x, LorpeConfig(h=h, m=0.0, kernel=kernel, support=support))
    grid = np.asarray(grid, dtype=float)
    pts = x if mirror is None else np.concatenate([x, 2.0 * mirror - x])
    interior = LorpeConfig(h=h, m=float(r - 1), kernel=kernel)
    engine = GridEngine(pts, interior, grid)
    raw = engine.raw_for(taper_from_degree(float(r - 1))) * (pts.size / x.size)
    return _finalize(grid, raw)


@dataclass(frozen=True)
class OsdeConfig:
    """Series-estimate settings: term count, grid size, support map."""

    j: int
    grid_size: int = 2048
    support_map: tuple[float, float] | None = None

    def __post_init__(self):
        if self.j < 0:
            raise ValueError("j must be >= 0")
        if self.j > self.grid_size - 1:
            raise ValueError("j must be at most grid_size - 1")


@lru_cache(maxsize=8)
def _discrete_legendre(grid_size: int, j_max: int):
    """Recurrence for polynomials orthonormal under the discrete uniform
    measure (weight 1/G) on the midpoint grid of [0,1]."""
    g = (np.arange(grid_size) + 0.5) / grid_size
    z = 2.0 * g - 1.0
    w = np.full(grid_size, 1.0 / grid_size)
    alpha, beta = _stieltjes_z(z, w, j_max)
    return alpha, np.sqrt(beta)


def _discrete_phi(u: np.ndarray, grid_size: int, j_max: int) -> np.ndarray:
    """phi_0..phi_jmax at u (in [0,1] coordinates), stacked on axis 0."""
    alpha, sqb = _discrete_legendre(grid_size, j_max)
    z = np.atleast_1d(2.0 * np.asarray(u, dtype=float) - 1.0)
    out = np.empty((j_max + 1, z.size))

    def take(k, p):
        out[k] = p

    recurrence_apply(alpha, sqb, z, take)
    return out


def _support_map(x: np.ndarray) -> tuple[float, float]:
    """Estimation interval from the extreme order statistics.

    The smallest and largest points sit at the 1/(2n) and 1 - 1/(2n)
    quantiles of the mapped coordinate; the interval is the preimage of
    [0, 1] under that linear map.
    """
    n = x.size
    x_min, x_max = float(x.min()), float(x.max())
    if not x_max > x_min:
        raise DegenerateSampleError("all sample points are equal")
    q_lo = 1.0 / (2.0 * n)
    q_hi = 1.0 - q_lo
    width = (x_max - x_min) / (q_hi - q_lo)
    lo = x_min - q_lo * width
    return lo, lo + width


def osde_estimate(sample, cfg: OsdeConfig) -> DensityEstimate:
    """Series estimate with discrete orthonormal polynomials on [0,1]."""
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise ValueError("series estimation needs at least 2 points")
    lo, hi = cfg.support_map if cfg.support_map is not None else _support_map(x)
    width = hi - lo
    u = (x - lo) / width
    phi_data = _discrete_phi(u, cfg.grid_size, cfg.j)
    theta = phi_data.mean(axis=1)
    g = (np.arange(cfg.grid_size) + 0.5) / cfg.grid_size
    phi_grid = _discrete_phi(g, cfg.grid_size, cfg.j)
    raw = (theta[:, None] * phi_grid).sum(axis=0) / width
    return _finalize(lo + g * width, raw)


def select_osde_terms(sample, j_max: int = J_MAX_DEFAULT) -> int:
    """Term count by the risk-threshold scan.

    Term j stays while n theta_j^2 > 4 var(phi_j); scanning stops after
    two consecutive failures, and the result is the last kept j.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise ValueError("term selection needs at least 2 points")
    lo, hi = _support_map(x)
    u = (x - lo) / (hi - lo)
    phi_data = _discrete_phi(u, 2048, j_max)
    n = x.size
    kept = 0
    failures = 0
    for j in range(1, j_max + 1):
        vals = phi_data[j]
        theta = vals.mean()
        var = vals.var(ddof=1)
        if n * theta * theta > _TERM_FACTOR * var:
            kept = j
            failures = 0
        else:
            failures += 1
            if failures >= _TERM_PATIENCE:
                break
    return kept


def legendre_osde_raw(sample, j_max: int, lo: float, hi: float, x_eval) -> np.ndarray:
    """Continuous-Legendre series on [lo, hi], evaluated raw (unclipped).

    phi_j(x) = sqrt((2j+1)/(hi-lo)) L_j(2(x-lo)/(hi-lo) - 1), with
    theta_j the sample mean of phi_j.  The huge-bandwidth limit of the
    tapered expansion converges to exactly this series.
    """
    if not hi > lo:
        raise ValueError("need hi > lo")
    x = np.asarray(sample, dtype=float)
    pts = np.asarray(x_eval, dtype=float)
    width = hi - lo

    def phi(j, arr):
        c = np.zeros(j + 1)
        c[j] = 1.0
        z = 2.0 * (arr - lo) / width - 1.0
        return npleg.legval(z, c) * math.sqrt((2.0 * j + 1.0) / width)

    out = np.zeros(pts.shape, dtype=float)
    for j in range(j_max + 1):
        out += phi(j, x).mean() * phi(j, pts)
    return out
