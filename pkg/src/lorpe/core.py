"""Local orthogonal polynomial expansion (LOrPE) density estimation.

At a fit point x the data are mapped to scaled offsets y_i =
(x_i - x)/h and expanded in the polynomials of ``orthopoly`` that are
orthonormal under the kernel weight on the scaled support.  The raw
estimate is the tapered series

    f_raw(x) = sum_k t(k) c_k P_k(0),
    c_k = (1/(n h)) sum_i P_k(y_i) K(y_i),

where the taper t is a step of height one through degree floor(M) with
a sqrt(M - floor(M)) fractional tail, so that sum t(k)^2 = M + 1 and M
acts as a continuous degrees-of-freedom knob.  Raw values may be
negative; grid estimates are clipped at zero and renormalized once by
the trapezoid rule.

Away from boundaries the same series is a kernel density estimate with
the effective kernel K_eff(u) = sum_k t(k) P_k(0) P_k(-u) K(-u), which
has vanishing moments up to the order implied by M; near a boundary
the polynomials reshape K_eff to remove boundary bias.

``GridEngine`` is the batched evaluation path: it builds each distinct
boundary system once, accumulates per-degree data sums over the whole
grid, and then serves raw estimates for any taper as cheap reductions.
Cross-validation reuses one engine per bandwidth across every taper.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroDensityError
from .kernels import KernelSpec, eval_kernel, gaussian
from .orthopoly import (
    PolySystem,
    build_batch,
    build_system,
    interval_from_key,
    interval_key,
    poly_values,
    recurrence_apply,
)

__all__ = [
    "LorpeConfig",
    "Taper",
    "DensityEstimate",
    "taper_from_degree",
    "coefficients",
    "evaluate_raw",
    "estimate_on_grid",
    "effective_kernel",
    "default_grid",
    "GridEngine",
]

#: Default number of uniform grid points for density evaluation.
GRID_SIZE = 1024

BOUNDARY_MODES = ("clip_polys", "kernel_mirror")


@dataclass(frozen=True)
class Taper:
    """Step taper with a fractional tail: sum of t(k)^2 equals m + 1."""

    t: np.ndarray
    m: float

    @property
    def m_max(self) -> int:
        """Largest degree carried by the expansion."""
        return self.t.size - 1

    def __call__(self, k: int) -> float:
        return float(self.t[k]) if 0 <= k < self.t.size else 0.0


def taper_from_degree(m: float) -> Taper:
    """Taper for a real degree m >= 0.

    t(k) = 1 for k <= floor(m), t(floor(m)+1) = sqrt(m - floor(m)),
    zero beyond; the squared weights sum to m + 1 exactly.
    """
    if not (m >= 0.0 and math.isfinite(m)):
        raise ValueError("m must be finite and >= 0")
    whole = math.floor(m)
    t = np.ones(whole + 2)
    t[-1] = math.sqrt(m - whole)
    return Taper(t=t, m=float(m))


@dataclass(frozen=True)
class LorpeConfig:
    """Estimator settings: bandwidth, degree, kernel, support, boundary."""

    h: float
    m: float
    kernel: KernelSpec = gaussian()
    support: tuple[float, float] = (-math.inf, math.inf)
    boundary_mode: str = "clip_polys"

    def __post_init__(self):
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise ValueError("h must be finite and > 0")
        if not (self.m >= 0.0 and math.isfinite(self.m)):
            raise ValueError("m must be finite and >= 0")
        a, b = self.support
        if not a < b:
            raise ValueError("support must satisfy a < b")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValueError(f"boundary_mode must be one of {BOUNDARY_MODES}")

    @property
    def taper(self) -> Taper:
        return taper_from_degree(self.m)

    @property
    def m_max(self) -> int:
        return math.floor(self.m) + 1

    @property
    def mirror(self) -> bool:
        return self.boundary_mode == "kernel_mirror"


@dataclass(frozen=True)
class DensityEstimate:
    """Grid density: raw expansion values and the clipped, normalized curve."""

    grid: np.ndarray
    raw: np.ndarray
    value: np.ndarray
    norm_constant: float


def _scaled_bounds(cfg: LorpeConfig, x_fit: float) -> tuple[float, float]:
    a, b = cfg.support
    return (a - x_fit) / cfg.h, (b - x_fit) / cfg.h


def system_for(cfg: LorpeConfig, x_fit: float, m_max: int | None = None) -> PolySystem:
    """Orthonormal system at a fit point, via the memoized scalar builder."""
    a_tilde, b_tilde = _scaled_bounds(cfg, x_fit)
    return build_system(
        cfg.kernel,
        a_tilde,
        b_tilde,
        cfg.m_max if m_max is None else m_max,
        mirror=cfg.mirror,
    )


def _weight_values(cfg: LorpeConfig, sys: PolySystem, y: np.ndarray) -> np.ndarray:
    w = eval_kernel(cfg.kernel, y)
    if sys.mirror_about is not None:
        w = w + eval_kernel(cfg.kernel, 2.0 * sys.mirror_about - y)
    return w


def coefficients(sample, x_fit: float, cfg: LorpeConfig, sys: PolySystem | None = None) -> np.ndarray:
    """Expansion coefficients c_0..c_Mmax at the fit point.

    c_k = (1/(n h)) sum_i P_k(y_i) K(y_i); points outside the kernel
    support contribute zero through K.
    """
    x = np.asarray(sample, dtype=float)
    if x.size == 0:
        raise ValueError("sample must be nonempty")
    if sys is None:
        sys = system_for(cfg, x_fit)
    y = (x - x_fit) / cfg.h
    w = _weight_values(cfg, sys, y)
    vals = poly_values(sys, y)
    return (vals * w).sum(axis=-1) / (x.size * cfg.h)


def evaluate_raw(sample, x_fit: float, cfg: LorpeConfig) -> float:
    """Tapered expansion at x_fit; may be negative."""
    a, b = cfg.support
    if not a <= x_fit <= b:
        raise ValueError("x_fit must lie inside the support")
    sys = system_for(cfg, x_fit)
    c = coefficients(sample, x_fit, cfg, sys)
    p0 = poly_values(sys, 0.0)
    t = cfg.taper.t
    return float((t * c * p0).sum())


def effective_support(sample, cfg: LorpeConfig) -> tuple[float, float]:
    """Support with infinite ends pulled in to the data plus the kernel reach.

    The pad is quad_half_width bandwidths: 12h for the Gaussian (whose
    quadrature window is [-12, 12]) and exactly h for the compact kernels,
    past which the estimate is identically zero anyway.
    """
    x = np.asarray(sample, dtype=float)
    a, b = cfg.support
    pad = cfg.kernel.quad_half_width * cfg.h
    a_eff = a if math.isfinite(a) else float(x.min()) - pad
    b_eff = b if math.isfinite(b) else float(x.max()) + pad
    return a_eff, b_eff


def default_grid(sample, cfg: LorpeConfig, size: int = GRID_SIZE) -> np.ndarray:
    """Uniform evaluation grid over the effective support."""
    a_eff, b_eff = effective_support(sample, cfg)
    return np.linspace(a_eff, b_eff, size)


def estimate_on_grid(sample, cfg: LorpeConfig, grid=None) -> DensityEstimate:
    """Raw expansion on a grid, then clip at zero and renormalize once."""
    x = np.asarray(sample, dtype=float)
    if grid is None:
        grid = default_grid(x, cfg)
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or np.any(np.diff(grid) <= 0.0):
        raise ValueError("grid must be strictly increasing with >= 2 points")
    a, b = cfg.support
    if grid[0] < a or grid[-1] > b:
        raise ValueError("grid must lie inside the support")
    engine = GridEngine(x, cfg, grid)
    raw = engine.raw_for(cfg.taper)
    clipped = np.maximum(raw, 0.0)
    norm = float(np.trapezoid(clipped, grid))
    if not norm > 0.0:
        raise AllZeroDensityError("clipped density integrates to zero on the grid")
    return DensityEstimate(grid=grid, raw=raw, value=clipped / norm, norm_constant=norm)


def effective_kernel(cfg: LorpeConfig, x_fit: float, u_grid) -> np.ndarray:
    """K_eff(u) = sum_k t(k) P_k(0) P_k(-u) K(-u) at the fit point.

    u is the offset (x_fit - x_i)/h, so the data coordinate is y = -u;
    the kernel is zeroed where y falls outside the scaled support.
    """
    u = np.asarray(u_grid, dtype=float)
    sys = system_for(cfg, x_fit)
    y = -u
    w = _weight_values(cfg, sys, y)
    a_tilde, b_tilde = _scaled_bounds(cfg, x_fit)
    w = np.where((y >= a_tilde) & (y <= b_tilde), w, 0.0)
    t = cfg.taper.t
    p0 = poly_values(sys, 0.0)
    vals = poly_values(sys, y)
    return ((t * p0)[:, None] * vals * w).sum(axis=0)


class GridEngine:
    """Per-degree data sums over a grid, reusable across tapers.

    Systems are deduplicated on quantized scaled intervals, so all
    interior grid points share a single recurrence; evaluation runs in
    grid chunks sized to keep the (grid x sample) work arrays small.

    fit_index, when given, maps each data point to its fit row, and the
    engine additionally records every point's own contribution there,
    which is all leave-one-out cross-validation needs.
    """

    def __init__(
        self,
        sample,
        cfg: LorpeConfig,
        grid: np.ndarray,
        m_cap: int | None = None,
        fit_index: np.ndarray | None = None,
        chunk_elems: int = 1 << 21,
    ):
        x = np.asarray(sample, dtype=float)
        if x.size == 0:
            raise ValueError("sample must be nonempty")
        grid = np.asarray(grid, dtype=float)
        self.sample = x
        self.cfg = cfg
        self.grid = grid
        self.n = x.size
        self.m_cap = cfg.m_max if m_cap is None else int(m_cap)

        h = cfg.h
        a, b = cfg.support
        hw = cfg.kernel.quad_half_width
        lo = np.maximum((a - grid) / h, -hw)
        hi = np.minimum((b - grid) / h, hw)
        # snap before dedup so interior points collapse to one system,
        # on the same key grid as the scalar build cache
        qlo, qhi, fine = interval_key(lo, hi)
        keys, inv = np.unique(
            np.stack([qlo, qhi, fine.astype(np.int64)], axis=1), axis=0, return_inverse=True
        )
        lo_u, hi_u = interval_from_key(keys[:, 0], keys[:, 1], keys[:, 2].astype(bool))
        batch = build_batch(self.cfg.kernel, lo_u, hi_u, self.m_cap, mirror=cfg.mirror)
        self.batch = batch
        self.row = inv

        # P_k(0) per unique system, expanded to the grid
        p0_u = np.empty((self.m_cap + 1, lo_u.size))

        def take0(k, p):
            p0_u[k] = p[:, 0]

        recurrence_apply(batch.alpha, batch.sqb, np.zeros((lo_u.size, 1)), take0)
        self.p0 = p0_u[:, inv]

        self.s = np.empty((self.m_cap + 1, grid.size))
        self.fit_index = None if fit_index is None else np.asarray(fit_index)
        self.d = None if fit_index is None else np.empty((self.m_cap + 1, self.n))

        mab = batch.mirror_about[inv] if batch.mirror_about is not None else None
        chunk = max(1, chunk_elems // self.n)
        for start in range(0, grid.size, chunk):
            stop = min(start + chunk, grid.size)
            y = (x[None, :] - grid[start:stop, None]) / h
            w = eval_kernel(cfg.kernel, y)
            if mab is not None:
                w = w + eval_kernel(cfg.kernel, 2.0 * mab[start:stop, None] - y)
            alpha_c = batch.alpha[inv[start:stop]]
            sqb_c = batch.sqb[inv[start:stop]]
            if self.fit_index is not None:
                sel = np.nonzero((self.fit_index >= start) & (self.fit_index < stop))[0]
                local = self.fit_index[sel] - start
                w_sel = w[local, sel]

            def take(k, p):
                self.s[k, start:stop] = (p * w).sum(axis=1)
                if self.fit_index is not None:
                    self.d[k, sel] = p[local, sel] * w_sel

            recurrence_apply(alpha_c, sqb_c, y, take)

    def _check_taper(self, taper: Taper) -> np.ndarray:
        t = taper.t
        if t.size - 1 > self.m_cap:
            raise ValueError("taper degree exceeds the engine's degree cap")
        return t

    def raw_for(self, taper: Taper) -> np.ndarray:
        """Raw expansion values at every grid point."""
        t = self._check_taper(taper)
        k = t.size
        return np.einsum("k,kg,kg->g", t, self.p0[:k], self.s[:k]) / (self.n * self.cfg.h)

    def self_terms(self, taper: Taper) -> np.ndarray:
        """Each point's own contribution to the estimate at its fit row."""
        if self.d is None:
            raise ValueError("engine was built without fit_index")
        t = self._check_taper(taper)
        k = t.size
        p0_fit = self.p0[:k, self.fit_index]
        return np.einsum("k,ki,ki->i", t, p0_fit, self.d[:k]) / (self.n * self.cfg.h)

    def loo_values(self, taper: Taper) -> np.ndarray:
        """Leave-one-out estimates at each point's fit row.

        Uses the exact split of the full estimate into the point's own
        term plus (n-1)/n times the leave-one-out value.
        """
        raw_fit = self.raw_for(taper)[self.fit_index]
        return (raw_fit - self.self_terms(taper)) * (self.n / (self.n - 1.0))
