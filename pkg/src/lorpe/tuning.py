"""Bandwidth and degree selection: AMISE plug-in, LSCV, and RLCV.

The plug-in rule treats the tapered expansion as a kernel estimate with
an effective kernel of even order r, plugs the normal-reference value
of the integrated squared r-th density derivative into the AMISE
formula, minimizes over candidate orders, and returns

    h_hat = 2 sigma [ (r!)^3 sqrt(pi) R / (2 r (2r)! n mu^2) ]^(1/(2r+1)),

with mu the r-th moment and R the squared-integral of the order-r
effective kernel.  For r = 2 with a Gaussian kernel this is Silverman's
rule, h = 1.0593 sigma n^(-1/5).  The selected degree is M = r + 1 for
even r (r + 2 for odd), with the alternative kernel-order-consistent
mapping M = r - 1 available behind ``m_mapping``.

Cross-validation scores both criteria from leave-one-out estimates:

    LSCV  = integral of f_raw^2 - (2/n) sum_i f_loo(x_i),   minimized;
    RLCV  = sum_i log max{f_loo(x_i), f_self(x_i)/n^alpha}, maximized,

where f_self is the point's own contribution to the full estimate and
the regularizer guards against the unbounded-likelihood degeneracy.
Criterion terms are scored on the unit-mass clipped curve the estimator
actually returns.  This matters near a support boundary, where the raw
expansion's integral can drift well away from one; a likelihood
criterion would otherwise reward the drift itself (a curve with 20%
spurious mass collects n log 1.2 of free log-likelihood regardless of
its shape).  ``normalize=False`` recovers the literal raw-expansion
scoring.  Leave-one-out values are
evaluated with the fit point at the grid point nearest each datum,
matching the grid-based estimator users receive; ``exact_fitpoint``
switches to fitting at the datum itself.  One ``GridEngine`` per
bandwidth serves every degree in the search, so the (h, M) sweep costs
little more than the bandwidth sweep alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quad import integrate_adaptive
from .core import (
    GridEngine,
    LorpeConfig,
    Taper,
    _weight_values,
    default_grid,
    effective_kernel,
    evaluate_raw,
    system_for,
    taper_from_degree,
)
from .errors import AllRejectedError, DegenerateSampleError
from .kernels import KernelSpec, gaussian
from .orthopoly import poly_values

__all__ = [
    "PluginResult",
    "CvResult",
    "plug_in",
    "loo_value",
    "plus_i_value",
    "lscv_score",
    "rlcv_score",
    "select_by_cv",
    "cv_score_tables",
    "default_h_grid",
    "default_m_grid",
]

#: Candidate effective-kernel orders for the plug-in rule.
DEFAULT_R_RANGE = (2, 4, 6, 8)

#: Largest degree any search will consider.
M_CAP = 20.0

DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class PluginResult:
    """Plug-in selection: winning order, bandwidth, degree, AMISE curve."""

    r_hat: int
    h_hat: float
    m_hat: int
    amise_curve: dict[int, float]
    sigma: float


@lru_cache(maxsize=64)
def _interior_kernel_moments(kernel: KernelSpec, r: int) -> tuple[float, float]:
    """(mu_r, R) of the interior order-r effective kernel, by quadrature.

    The order-r kernel is the step-taper expansion at M = r - 1 (odd M,
    so the kernel order is M + 1 = r).
    """
    cfg = LorpeConfig(h=1.0, m=float(r - 1), kernel=kernel)
    hw = kernel.quad_half_width

    def keff(u):
        return effective_kernel(cfg, 0.0, np.atleast_1d(u))

    mu = integrate_adaptive(lambda u: np.atleast_1d(u) ** r * keff(u), -hw, hw, rtol=1e-12)
    rk = integrate_adaptive(lambda u: keff(u) ** 2, -hw, hw, rtol=1e-12)
    return mu, rk


def _amise_min(r: int, sigma: float, n: int, mu: float, rk: float) -> float:
    """Normal-reference AMISE at the optimal bandwidth for order r."""
    inner = (
        2.0 * r * math.factorial(2 * r) * mu * mu
        / (math.factorial(r) ** 3 * math.sqrt(math.pi))
        * (rk / n) ** (2 * r)
    )
    return (2.0 * r + 1.0) / (4.0 * r * sigma) * inner ** (1.0 / (2.0 * r + 1.0))


def _h_opt(r: int, sigma: float, n: int, mu: float, rk: float) -> float:
    inner = (
        math.factorial(r) ** 3 * math.sqrt(math.pi) * rk
        / (2.0 * r * math.factorial(2 * r) * n * mu * mu)
    )
    return 2.0 * sigma * inner ** (1.0 / (2.0 * r + 1.0))


def plug_in(
    sample,
    kernel: KernelSpec = gaussian(),
    r_range=DEFAULT_R_RANGE,
    m_mapping: str = "expansion",
) -> PluginResult:
    """AMISE plug-in selection of (h, M) under the normal reference.

    m_mapping "expansion" maps the winning order to M = r + 1 (even r)
    or r + 2 (odd r); "kernel_order" uses M = r - 1, the degree whose
    effective kernel has order exactly r.
    """
    x = np.asarray(sample, dtype=float)
    if x.size < 3:
        raise DegenerateSampleError("plug-in tuning needs at least 3 points")
    if m_mapping not in ("expansion", "kernel_order"):
        raise ValueError("m_mapping must be 'expansion' or 'kernel_order'")
    rs = sorted(set(int(r) for r in r_range))
    for r in rs:
        if r < 2 or r % 2 != 0 or r > 18:
            raise ValueError("r_range entries must be even, between 2 and 18")
    sigma = float(np.std(x, ddof=1))
    if not sigma > 0.0:
        raise DegenerateSampleError("sample standard deviation is zero")
    n = x.size
    curve: dict[int, float] = {}
    for r in rs:
        mu, rk = _interior_kernel_moments(kernel, r)
        curve[r] = _amise_min(r, sigma, n, mu, rk)
    r_hat = min(rs, key=lambda r: curve[r])
    mu, rk = _interior_kernel_moments(kernel, r_hat)
    h_hat = _h_opt(r_hat, sigma, n, mu, rk)
    if m_mapping == "expansion":
        m_hat = r_hat + 1 if r_hat % 2 == 0 else r_hat + 2
    else:
        m_hat = r_hat - 1
    m_hat = int(min(m_hat, M_CAP))
    return PluginResult(r_hat=r_hat, h_hat=h_hat, m_hat=m_hat, amise_curve=curve, sigma=sigma)


def _cfg(h: float, m: float, kernel, support, boundary_mode) -> LorpeConfig:
    return LorpeConfig(h=h, m=m, kernel=kernel, support=support, boundary_mode=boundary_mode)


def plus_i_value(
    sample,
    i: int,
    x: float,
    h: float,
    m: float,
    kernel: KernelSpec = gaussian(),
    support=(-math.inf, math.inf),
    boundary_mode: str = "clip_polys",
) -> float:
    """Contribution of point i to the estimate at x, prefactor 1/(nh)."""
    xs = np.asarray(sample, dtype=float)
    cfg = _cfg(h, m, kernel, support, boundary_mode)
    sys = system_for(cfg, x)
    y = (xs[i] - x) / h
    w = _weight_values(cfg, sys, np.asarray(y))
    vals = poly_values(sys, y)
    p0 = poly_values(sys, 0.0)
    t = cfg.taper.t
    return float((t * vals * p0).sum() * w / (xs.size * h))


def loo_value(
    sample,
    i: int,
    x: float,
    h: float,
    m: float,
    kernel: KernelSpec = gaussian(),
    support=(-math.inf, math.inf),
    boundary_mode: str = "clip_polys",
) -> float:
    """Leave-one-out estimate at x: point i removed, prefactor 1/((n-1)h).

    Computed by subtracting point i's own contribution from the full
    estimate, which is exact:  f = f_plus_i + ((n-1)/n) f_loo.
    """
    xs = np.asarray(sample, dtype=float)
    if xs.size < 2:
        raise ValueError("leave-one-out needs at least 2 points")
    cfg = _cfg(h, m, kernel, support, boundary_mode)
    full = evaluate_raw(xs, x, cfg)
    own = plus_i_value(xs, i, x, h, m, kernel, support, boundary_mode)
    return (full - own) * xs.size / (xs.size - 1.0)


def _nearest_index(grid: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Index of the grid point nearest each x (grid sorted ascending)."""
    idx = np.clip(np.searchsorted(grid, x), 1, grid.size - 1)
    left_closer = np.abs(x - grid[idx - 1]) <= np.abs(grid[idx] - x)
    return np.where(left_closer, idx - 1, idx)


class CvWorkspace:
    """Per-bandwidth state for cross-validation over many degrees."""

    def __init__(self, sample, h, m_cap, kernel, support, boundary_mode, exact_fitpoint, grid_size):
        x = np.asarray(sample, dtype=float)
        if x.size < 2:
            raise ValueError("cross-validation needs at least 2 points")
        cfg = _cfg(h, 0.0, kernel, support, boundary_mode)
        self.cfg = cfg
        self.n = x.size
        self.grid = default_grid(x, cfg, grid_size)
        if exact_fitpoint:
            self.engine = GridEngine(x, cfg, self.grid, m_cap=m_cap)
            # fit each point at itself: a second engine whose rows are the data
            self.fit_engine = GridEngine(x, cfg, x, m_cap=m_cap, fit_index=np.arange(x.size))
        else:
            fit_index = _nearest_index(self.grid, x)
            self.engine = GridEngine(x, cfg, self.grid, m_cap=m_cap, fit_index=fit_index)
            self.fit_engine = self.engine

    def stats(self, taper: Taper) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(raw grid estimate, leave-one-out values, own contributions)."""
        raw = self.engine.raw_for(taper)
        loo = self.fit_engine.loo_values(taper)
        own = self.fit_engine.self_terms(taper)
        return raw, loo, own

    def scores(self, taper: Taper, alpha: float, normalize: bool = True) -> tuple[float, float]:
        """(LSCV, RLCV) for one taper; RLCV is -inf if any term is <= 0."""
        raw, loo, own = self.stats(taper)
        mass = clipped_mass(raw, self.grid) if normalize else 1.0
        return (
            lscv_from_stats(raw, loo, self.grid, self.n, normalize),
            rlcv_from_stats(loo, own, self.n, alpha, mass),
        )


def clipped_mass(raw, grid) -> float:
    """Integral of the positive part, the normalizer of the returned curve."""
    return float(np.trapezoid(np.maximum(raw, 0.0), grid))


def lscv_from_stats(raw, loo, grid, n, normalize: bool = True) -> float:
    """Squared-integral term minus twice the mean leave-one-out value.

    With ``normalize`` both terms use the clipped unit-mass curve; the
    leave-one-out mass is approximated by the full-curve mass, an O(1/n)
    shortcut shared by every cell.  +inf when the curve has no positive
    part, so minimization can never pick such a cell.
    """
    if not normalize:
        return float(np.trapezoid(raw * raw, grid) - 2.0 / n * loo.sum())
    clipped = np.maximum(raw, 0.0)
    mass = float(np.trapezoid(clipped, grid))
    if not mass > 0.0:
        return math.inf
    sq = float(np.trapezoid(clipped * clipped, grid))
    return sq / mass**2 - 2.0 / (n * mass) * float(np.maximum(loo, 0.0).sum())


def rlcv_from_stats(loo, own, n, alpha, mass: float = 1.0) -> float:
    """Log-domain regularized likelihood; -inf when a term is nonpositive.

    ``mass`` rescales the estimate to unit integral before scoring, so a
    cell whose raw expansion carries spurious mass gets no likelihood
    bonus for it.
    """
    if not mass > 0.0:
        return -math.inf
    terms = np.maximum(loo, own / n**alpha)
    if np.any(terms <= 0.0):
        return -math.inf
    return float(np.log(terms).sum()) - n * math.log(mass)


def lscv_score(
    sample,
    h: float,
    m: float,
    kernel: KernelSpec = gaussian(),
    support=(-math.inf, math.inf),
    boundary_mode: str = "clip_polys",
    exact_fitpoint: bool = False,
    grid_size: int = 1024,
    normalize: bool = True,
) -> float:
    """Least-squares CV score (lower is better) for one (h, M) cell."""
    taper = taper_from_degree(m)
    ws = CvWorkspace(sample, h, taper.m_max, kernel, support, boundary_mode, exact_fitpoint, grid_size)
    return ws.scores(taper, DEFAULT_ALPHA, normalize)[0]


def rlcv_score(
    sample,
    h: float,
    m: float,
    alpha: float = DEFAULT_ALPHA,
    kernel: KernelSpec = gaussian(),
    support=(-math.inf, math.inf),
    boundary_mode: str = "clip_polys",
    exact_fitpoint: bool = False,
    grid_size: int = 1024,
    normalize: bool = True,
) -> float:
    """Regularized likelihood CV score in the log domain (higher is better)."""
    if not alpha > 0.0:
        raise ValueError("alpha must be > 0")
    taper = taper_from_degree(m)
    ws = CvWorkspace(sample, h, taper.m_max, kernel, support, boundary_mode, exact_fitpoint, grid_size)
    return ws.scores(taper, alpha, normalize)[1]


def cv_score_tables(
    sample,
    h_grid,
    m_grid,
    alpha: float = DEFAULT_ALPHA,
    kernel: KernelSpec = gaussian(),
    support=(-math.inf, math.inf),
    boundary_mode: str = "clip_polys",
    exact_fitpoint: bool = False,
    grid_size: int = 1024,
    normalize: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """LSCV and RLCV score matrices, shape (len(h_grid), len(m_grid)).

    Both criteria come from the same leave-one-out sweep, so asking for
    the pair costs the same as asking for either.
    """
    h_grid = np.asarray(h_grid, dtype=float)
    m_grid = np.asarray(m_grid, dtype=float)
    if h_grid.size == 0 or m_grid.size == 0:
        raise ValueError("h_grid and m_grid must be nonempty")
    if float(m_grid.max()) > M_CAP:
        raise ValueError(f"m_grid values must not exceed {M_CAP}")
    tapers = [taper_from_degree(float(m)) for m in m_grid]
    m_cap = max(t.m_max for t in tapers)
    lscv = np.empty((h_grid.size, m_grid.size))
    rlcv = np.empty((h_grid.size, m_grid.size))
    for a, h in enumerate(h_grid):
        ws = CvWorkspace(sample, float(h), m_cap, kernel, support, boundary_mode, exact_fitpoint, grid_size)
        for b, taper in enumerate(tapers):
            lscv[a, b], rlcv[a, b] = ws.scores(taper, alpha, normalize)
    return lscv, rlcv


@dataclass(frozen=True)
class CvResult:
    """Scores over the (h, M) grid and the selected cell."""

    h_grid: np.ndarray
    m_grid: np.ndarray
    scores: np.ndarray
    best: tuple[float, float]
    criterion: str
    alpha: float

    @property
    def best_h(self) -> float:
        return self.best[0]

    @property
    def best_m(self) -> float:
        return self.best[1]


def _select_best(h_grid, m_grid, scores, maximize: bool) -> tuple[float, float]:
    """Optimum cell; ties go to larger h, then smaller M."""
    vals = scores if maximize else -scores
    best = None
    best_val = -math.inf
    for a in range(len(h_grid)):
        for b in range(len(m_grid)):
            v = vals[a, b]
            if v > best_val or (v == best_val and best is not None and h_grid[a] > best[0]):
                best_val = v
                best = (float(h_grid[a]), float(m_grid[b]))
    if best is None or best_val == -math.inf:
        raise AllRejectedError("every grid cell was rejected by the criterion")
    return best


def select_by_cv(
    sample,
    h_grid,
    m_grid,
    criterion: str = "rlcv",
    alpha: float = DEFAULT_ALPHA,
    kernel: KernelSpec = gaussian(),
    support=(-math.inf, math.inf),
    boundary_mode: str = "clip_polys",
    exact_fitpoint: bool = False,
    grid_size: int = 1024,
    normalize: bool = True,
) -> CvResult:
    """Full-grid CV search returning every score and the optimum."""
    if criterion not in ("lscv", "rlcv"):
        raise ValueError("criterion must be 'lscv' or 'rlcv'")
    if not alpha > 0.0:
        raise ValueError("alpha must be > 0")
    lscv, rlcv = cv_score_tables(
        sample, h_grid, m_grid, alpha, kernel, support, boundary_mode, exact_fitpoint, grid_size, normalize
    )
    h_arr = np.asarray(h_grid, dtype=float)
    m_arr = np.asarray(m_grid, dtype=float)
    scores = lscv if criterion == "lscv" else rlcv
    best = _select_best(h_arr, m_arr, scores, maximize=(criterion == "rlcv"))
    return CvResult(
        h_grid=h_arr, m_grid=m_arr, scores=scores, best=best, criterion=criterion, alpha=alpha
    )


def default_h_grid(sample, kernel: KernelSpec = gaussian(), count: int = 25, span: float = 8.0) -> np.ndarray:
    """Log-spaced bandwidths around the plug-in value: [h/span, span*h]."""
    h_ref = plug_in(sample, kernel).h_hat
    return np.geomspace(h_ref / span, h_ref * span, count)


def default_m_grid() -> np.ndarray:
    """Degrees 0, 0.5, ..., 12: integers plus fractional midpoints."""
    return np.arange(0.0, 12.5, 0.5)
