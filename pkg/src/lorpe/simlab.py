"""Simulation laboratory: target distributions and MISE studies.

This module provides the benchmark suite used to measure estimator
accuracy.  Each target distribution carries an analytic density,
distribution function, quantile function, and a sampler, so both the
error integrals and the draws are exact up to floating point.  On top
of the suite sit Monte-Carlo drivers:

* ``mise_study`` repeats sample -> fit -> ISE and aggregates,
* ``oracle_search`` maps the MISE surface over an (h, M) grid with
  common random numbers across cells,
* ``cv_study`` measures cross-validation selectors end to end,
* ``alpha_sweep`` probes the sensitivity of the regularized
  likelihood criterion to its floor exponent.

Randomness is counter-based: ``rng_stream(seed, *path)`` opens an
independent Philox stream for any small integer path, so replication r
always sees the same sample no matter which estimators consume it or
how work is spread over processes.  All aggregation happens in
replication order, which keeps results bit-identical for a fixed seed.

Studies default to the quadweight weight function.  Its compact
support gives the bandwidth a direct reading (h is the half-width of
the smoothing window), which is the convention all reference results
in this module are quoted in.  Pass ``kernel=`` to study other weights.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Mapping

import numpy as np
from scipy.special import betainc, betaincinv, ndtr, ndtri, stdtr, stdtrit

from .baselines import OsdeConfig, kde_highorder_estimate, osde_estimate, select_osde_terms
from .core import (
    GRID_SIZE,
    DensityEstimate,
    GridEngine,
    LorpeConfig,
    default_grid,
    estimate_on_grid,
    taper_from_degree,
)
from .errors import AllRejectedError, LorpeError
from .kernels import KernelSpec, symmetric_beta
from .tuning import (
    DEFAULT_ALPHA,
    CvWorkspace,
    default_h_grid,
    default_m_grid,
    plug_in,
    select_by_cv,
)

__all__ = [
    "DISTRIBUTIONS",
    "DistributionSpec",
    "EstimatorConfig",
    "MiseResult",
    "OracleResult",
    "alpha_sweep",
    "cdf",
    "cv_study",
    "default_ise_grid",
    "fit_estimator",
    "get_distribution",
    "ise",
    "ise_domain",
    "mise_study",
    "oracle_search",
    "pdf",
    "rng_stream",
    "sample_dist",
    "study_kernel",
    "trunc_t",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)

#: Tail quantiles replacing infinite support ends in the ISE domain.
_ISE_TAIL_LO = 1e-4
_ISE_TAIL_HI = 0.9999
_ISE_PAD = 1.0

#: Points of the default ISE quadrature grid.
ISE_GRID_SIZE = 1024


def rng_stream(seed: int, *path: int) -> np.random.Generator:
    """Independent Philox stream addressed by (seed, path).

    The path components land in the upper words of the 256-bit Philox
    counter, so distinct paths yield non-overlapping streams of 2^64
    draws each.  At most three components are accepted.
    """
    if len(path) > 3:
        raise ValueError("rng_stream accepts at most 3 path components")
    counter = [0, 0, 0, 0]
    for k, part in enumerate(path):
        part = int(part)
        if part < 0:
            raise ValueError("path components must be >= 0")
        counter[k + 1] = part
    return np.random.Generator(np.random.Philox(seed=int(seed), counter=counter))


# ---------------------------------------------------------------------------
# Target distributions.  Every density, cdf, quantile, and sampler is a
# module-level function (parametrized ones via functools.partial) so the
# resulting spec objects can cross process boundaries.


def _phi(x):
    return np.exp(-0.5 * np.square(x)) / _SQRT_2PI


def _beta44_pdf(x):
    x = np.asarray(x, dtype=float)
    base = np.where((x > -1.0) & (x < 1.0), 1.0 - x * x, 0.0)
    return 35.0 / 32.0 * base**3


def _beta44_cdf(x):
    x = np.asarray(x, dtype=float)
    return betainc(4.0, 4.0, np.clip((x + 1.0) / 2.0, 0.0, 1.0))


def _beta44_ppf(q):
    q = np.asarray(q, dtype=float)
    return 2.0 * betaincinv(4.0, 4.0, q) - 1.0


def _beta44_sample(n, rng):
    return 2.0 * rng.beta(4.0, 4.0, n) - 1.0


def _normal_pdf(x):
    return _phi(np.asarray(x, dtype=float))


def _normal_cdf(x):
    return ndtr(np.asarray(x, dtype=float))


def _normal_ppf(q):
    return ndtri(np.asarray(q, dtype=float))


def _normal_sample(n, rng):
    return rng.standard_normal(n)


def _mix_pdf(x, w, mu1, s1, mu2, s2):
    x = np.asarray(x, dtype=float)
    return w * _phi((x - mu1) / s1) / s1 + (1.0 - w) * _phi((x - mu2) / s2) / s2


def _mix_cdf(x, w, mu1, s1, mu2, s2):
    x = np.asarray(x, dtype=float)
    return w * ndtr((x - mu1) / s1) + (1.0 - w) * ndtr((x - mu2) / s2)


def _mix_ppf(q, w, mu1, s1, mu2, s2):
    cdf_fn = partial(_mix_cdf, w=w, mu1=mu1, s1=s1, mu2=mu2, s2=s2)
    return _invert_cdf(cdf_fn, q, -40.0, 40.0)


def _mix_sample(n, rng, w, mu1, s1, mu2, s2):
    first = rng.random(n) < w
    z = rng.standard_normal(n)
    return np.where(first, mu1 + s1 * z, mu2 + s2 * z)


def _exp1_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, np.exp(-np.clip(x, 0.0, None)), 0.0)


def _exp1_cdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, -np.expm1(-np.clip(x, 0.0, None)), 0.0)


def _exp1_ppf(q):
    q = np.asarray(q, dtype=float)
    return -np.log1p(-q)


def _exp1_sample(n, rng):
    return rng.exponential(1.0, n)


def _halfnormal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, 2.0 * _phi(x), 0.0)


def _halfnormal_cdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0.0, 2.0 * ndtr(x) - 1.0, 0.0)


def _halfnormal_ppf(q):
    q = np.asarray(q, dtype=float)
    return ndtri((1.0 + q) / 2.0)


def _halfnormal_sample(n, rng):
    return np.abs(rng.standard_normal(n))


#: Normal mass below -1 and within [-1, 1]; the left-truncated normal
#: on [-1, inf) has total mass ndtr(1).
_PHI_M1 = float(ndtr(-1.0))
_PHI_P1 = float(ndtr(1.0))


def _lefttrunc_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= -1.0, _phi(x) / _PHI_P1, 0.0)


def _lefttrunc_cdf(x):
    x = np.asarray(x, dtype=float)
    return np.clip((ndtr(x) - _PHI_M1) / _PHI_P1, 0.0, 1.0)


def _lefttrunc_ppf(q):
    q = np.asarray(q, dtype=float)
    return ndtri(_PHI_M1 + q * _PHI_P1)


def _lefttrunc_sample(n, rng):
    return _lefttrunc_ppf(rng.random(n))


def _t_norm(df: float) -> float:
    """Normalization of the Student-t density with df degrees of freedom."""
    return math.gamma((df + 1.0) / 2.0) / (math.sqrt(df * math.pi) * math.gamma(df / 2.0))


def _trunct_pdf(x, df, lo, hi, scale):
    x = np.asarray(x, dtype=float)
    dens = scale * (1.0 + np.square(x) / df) ** (-(df + 1.0) / 2.0)
    return np.where((x >= lo) & (x <= hi), dens, 0.0)


def _trunct_cdf(x, df, lo, hi, mass):
    x = np.asarray(x, dtype=float)
    u = (stdtr(df, np.clip(x, lo, hi)) - stdtr(df, lo)) / mass
    return np.clip(u, 0.0, 1.0)


def _trunct_ppf(q, df, lo, hi, mass):
    q = np.asarray(q, dtype=float)
    return np.clip(stdtrit(df, stdtr(df, lo) + q * mass), lo, hi)


def _trunct_sample(n, rng, df, lo, hi, mass):
    return _trunct_ppf(rng.random(n), df=df, lo=lo, hi=hi, mass=mass)


def _invert_cdf(cdf_fn, q, lo: float, hi: float):
    """Quantiles by bisection; 120 halvings exhaust double precision."""
    q = np.asarray(q, dtype=float)
    low = np.full(q.shape, lo)
    high = np.full(q.shape, hi)
    for _ in range(120):
        mid = 0.5 * (low + high)
        go_right = cdf_fn(mid) < q
        low = np.where(go_right, mid, low)
        high = np.where(go_right, high, mid)
    return 0.5 * (low + high)


@dataclass(frozen=True)
class DistributionSpec:
    """Analytic description of one benchmark target.

    All callables are picklable so specs may be shipped to worker
    processes.  ``sampler(n, rng)`` must draw from exactly the law of
    ``pdf`` restricted to ``support``.
    """

    name: str
    support: tuple[float, float]
    pdf: Callable
    cdf: Callable
    ppf: Callable
    sampler: Callable


def trunc_t(df: float, lo: float = -1.0, hi: float = 2.0) -> DistributionSpec:
    """Student-t with df degrees of freedom restricted to [lo, hi]."""
    if not df > 0.0:
        raise ValueError("df must be > 0")
    if not lo < hi:
        raise ValueError("need lo < hi")
    mass = float(stdtr(df, hi) - stdtr(df, lo))
    name = f"t{df:g}" if (lo, hi) == (-1.0, 2.0) else f"t{df:g}on[{lo:g},{hi:g}]"
    return DistributionSpec(
        name=name,
        support=(float(lo), float(hi)),
        pdf=partial(_trunct_pdf, df=float(df), lo=float(lo), hi=float(hi), scale=_t_norm(df) / mass),
        cdf=partial(_trunct_cdf, df=float(df), lo=float(lo), hi=float(hi), mass=mass),
        ppf=partial(_trunct_ppf, df=float(df), lo=float(lo), hi=float(hi), mass=mass),
        sampler=partial(_trunct_sample, df=float(df), lo=float(lo), hi=float(hi), mass=mass),
    )


def _mix_spec(name, w, mu1, s1, mu2, s2) -> DistributionSpec:
    kw = dict(w=w, mu1=mu1, s1=s1, mu2=mu2, s2=s2)
    return DistributionSpec(
        name=name,
        support=(-math.inf, math.inf),
        pdf=partial(_mix_pdf, **kw),
        cdf=partial(_mix_cdf, **kw),
        ppf=partial(_mix_ppf, **kw),
        sampler=partial(_mix_sample, **kw),
    )


def _registry() -> dict[str, DistributionSpec]:
    inf = math.inf
    specs = [
        DistributionSpec("beta44", (-1.0, 1.0), _beta44_pdf, _beta44_cdf, _beta44_ppf, _beta44_sample),
        DistributionSpec("stdnormal", (-inf, inf), _normal_pdf, _normal_cdf, _normal_ppf, _normal_sample),
        _mix_spec("normalmix1", 0.75, 0.0, 1.0, 1.5, 1.0 / 3.0),
        DistributionSpec("exp1", (0.0, inf), _exp1_pdf, _exp1_cdf, _exp1_ppf, _exp1_sample),
        DistributionSpec(
            "truncnorm0", (0.0, inf), _halfnormal_pdf, _halfnormal_cdf, _halfnormal_ppf, _halfnormal_sample
        ),
        DistributionSpec(
            "truncnormm1", (-1.0, inf), _lefttrunc_pdf, _lefttrunc_cdf, _lefttrunc_ppf, _lefttrunc_sample
        ),
        _mix_spec("normalmix2", 2.0 / 3.0, 0.0, 1.0, 0.0, 0.1),
        trunc_t(1.0),
        trunc_t(2.0),
        trunc_t(3.0),
    ]
    return {s.name: s for s in specs}


#: Benchmark registry; truncated-t entries use the default window [-1, 2].
DISTRIBUTIONS: Mapping[str, DistributionSpec] = _registry()


def get_distribution(name: str) -> DistributionSpec:
    try:
        return DISTRIBUTIONS[name]
    except KeyError:
        known = ", ".join(sorted(DISTRIBUTIONS))
        raise ValueError(f"unknown distribution {name!r}; known: {known}") from None


def pdf(spec: DistributionSpec, x) -> np.ndarray:
    """Density of the target, zero outside its support."""
    return np.asarray(spec.pdf(np.asarray(x, dtype=float)), dtype=float)


def cdf(spec: DistributionSpec, x) -> np.ndarray:
    return np.asarray(spec.cdf(np.asarray(x, dtype=float)), dtype=float)


def sample_dist(spec: DistributionSpec, n: int, seed=0) -> np.ndarray:
    """Draw n points; ``seed`` is an integer or a ready Generator."""
    if not n >= 1:
        raise ValueError("n must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else rng_stream(int(seed))
    return np.asarray(spec.sampler(int(n), rng), dtype=float)


def ise_domain(spec: DistributionSpec) -> tuple[float, float]:
    """Finite integration window: support ends, tails cut at quantiles."""
    lo, hi = spec.support
    if not math.isfinite(lo):
        lo = float(spec.ppf(_ISE_TAIL_LO)) - _ISE_PAD
    if not math.isfinite(hi):
        hi = float(spec.ppf(_ISE_TAIL_HI)) + _ISE_PAD
    return lo, hi


def default_ise_grid(spec: DistributionSpec, size: int = ISE_GRID_SIZE) -> np.ndarray:
    lo, hi = ise_domain(spec)
    return np.linspace(lo, hi, size)


def ise(est: DensityEstimate, spec: DistributionSpec, grid) -> float:
    """Trapezoid integral of (estimate - truth)^2 over the given grid.

    The estimate is linearly interpolated onto the grid and treated as
    zero beyond its own support.
    """
    grid = np.asarray(grid, dtype=float)
    vals = np.interp(grid, est.grid, est.value, left=0.0, right=0.0)
    diff = vals - pdf(spec, grid)
    return float(np.trapezoid(diff * diff, grid))


# ---------------------------------------------------------------------------
# Estimator descriptors and the single-sample fit dispatch.

_KINDS = ("lorpe", "kde", "osde")
_METHODS = {
    "lorpe": ("fixed", "plugin", "lscv", "rlcv"),
    "kde": ("fixed", "plugin"),
    "osde": ("fixed", "auto"),
}


def study_kernel() -> KernelSpec:
    """Default study weight: quadweight, so h is the window half-width."""
    return symmetric_beta(4.5)


@dataclass(frozen=True)
class EstimatorConfig:
    """What to fit and how its free parameters are chosen.

    ``support=None`` defers to the target distribution's support for
    the expansion estimator and to the whole line for the kernel
    baseline.  ``m`` for the kernel baseline names the degree whose
    interior accuracy order the kernel should match.
    """

    kind: str = "lorpe"
    method: str = "fixed"
    h: float | None = None
    m: float | None = None
    kernel: KernelSpec = field(default_factory=study_kernel)
    support: tuple[float, float] | None = None
    boundary_mode: str = "clip_polys"
    alpha: float = DEFAULT_ALPHA
    mirror: bool = False
    exact_fitpoint: bool = False
    j: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}")
        if self.method not in _METHODS[self.kind]:
            raise ValueError(f"method {self.method!r} not valid for kind {self.kind!r}")
        if self.method == "fixed":
            if self.kind == "osde":
                if self.j is None:
                    raise ValueError("fixed OSDE needs j")
            elif self.h is None or self.m is None:
                raise ValueError("fixed estimators need h and m")

    @property
    def label(self) -> str:
        return f"{self.kind}:{self.method}"


def _m_to_r(m: float) -> int:
    """Interior accuracy order of the degree-m expansion (always even)."""
    k = int(round(m))
    if k <= 0:
        return 2
    return k + 1 if k % 2 else k + 2


def _finite_edge(support: tuple[float, float]) -> float:
    lo, hi = support
    if math.isfinite(lo):
        return float(lo)
    if math.isfinite(hi):
        return float(hi)
    raise ValueError("mirroring needs a finite support edge")


def _lorpe_support(cfg: EstimatorConfig, spec: DistributionSpec | None) -> tuple[float, float]:
    if cfg.support is not None:
        return cfg.support
    if spec is not None:
        return spec.support
    return (-math.inf, math.inf)


def fit_estimator(
    sample, cfg: EstimatorConfig, spec: DistributionSpec | None = None, grid_size: int = GRID_SIZE
) -> DensityEstimate:
    """Fit one sample under the given descriptor."""
    x = np.asarray(sample, dtype=float)
    if cfg.kind == "lorpe":
        support = _lorpe_support(cfg, spec)
        if cfg.method == "fixed":
            h, m = float(cfg.h), float(cfg.m)
        elif cfg.method == "plugin":
            res = plug_in(x, cfg.kernel)
            h, m = res.h_hat, res.m_hat
        else:
            sel = select_by_cv(
                x,
                default_h_grid(x, cfg.kernel),
                default_m_grid(),
                criterion=cfg.method,
                alpha=cfg.alpha,
                kernel=cfg.kernel,
                support=support,
                boundary_mode=cfg.boundary_mode,
                exact_fitpoint=cfg.exact_fitpoint,
                grid_size=grid_size,
            )
            h, m = sel.best_h, sel.best_m
        lc = LorpeConfig(h=h, m=m, kernel=cfg.kernel, support=support, boundary_mode=cfg.boundary_mode)
        return estimate_on_grid(x, lc, default_grid(x, lc, grid_size))
    if cfg.kind == "kde":
        mirror = None
        if cfg.mirror:
            mirror = _finite_edge(cfg.support if cfg.support is not None else spec.support)
        if cfg.method == "plugin":
            h, r = plug_in(x, cfg.kernel, r_range=(2,)).h_hat, 2
        else:
            h, r = float(cfg.h), _m_to_r(cfg.m)
        return kde_highorder_estimate(x, h, kernel=cfg.kernel, r=r, mirror=mirror)
    j = int(cfg.j) if cfg.method == "fixed" else select_osde_terms(x)
    return osde_estimate(x, OsdeConfig(j=j))


# ---------------------------------------------------------------------------
# Monte-Carlo aggregation.


@dataclass(frozen=True)
class MiseResult:
    """ISE sample of the successful replications of one study cell."""

    reps: int
    ise_values: np.ndarray
    log10_mise: float
    config: EstimatorConfig
    seed: int
    dropped: int = 0

    @property
    def se(self) -> float:
        """Standard error of log10 MISE by the delta method."""
        k = self.ise_values.size
        if k < 2:
            return math.inf
        mean = float(self.ise_values.mean())
        return float(self.ise_values.std(ddof=1)) / (mean * math.sqrt(k) * math.log(10.0))

    @property
    def robust_se(self) -> float:
        """Central 68.26% spread of log10 ISE over 2 sqrt(reps)."""
        k = self.ise_values.size
        if k < 2:
            return math.inf
        lo, hi = np.percentile(np.log10(self.ise_values), [15.87, 84.13])
        return float(hi - lo) / (2.0 * math.sqrt(k))


def _make_result(values, requested, config, seed) -> MiseResult:
    vals = np.asarray([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    if vals.size == 0:
        raise AllRejectedError("every replication failed")
    return MiseResult(
        reps=int(vals.size),
        ise_values=vals,
        log10_mise=float(np.log10(vals.mean())),
        config=config,
        seed=int(seed),
        dropped=int(requested - vals.size),
    )


def _run_reps(fn, reps: int, threads: int) -> list:
    """Evaluate fn(0..reps-1), in order, optionally on worker processes."""
    if threads <= 1:
        return [fn(r) for r in range(reps)]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        chunk = max(1, reps // (threads * 8))
        return list(pool.map(fn, range(reps), chunksize=chunk))


def _study_rep(spec, config, n, seed, ise_grid, grid_size, rep) -> float | None:
    x = sample_dist(spec, n, rng_stream(seed, 0, rep))
    try:
        est = fit_estimator(x, config, spec, grid_size)
    except LorpeError:
        return None
    return ise(est, spec, ise_grid)


def mise_study(
    spec: DistributionSpec,
    config: EstimatorConfig,
    n: int,
    reps: int,
    seed: int = 0,
    threads: int = 1,
    grid_size: int = GRID_SIZE,
) -> MiseResult:
    """MISE of one estimator over independent replications.

    Replication r draws its sample from ``rng_stream(seed, 0, r)``, so
    different configs studied under the same seed see identical data.
    Replications whose fit fails are dropped and counted.
    """
    if not reps >= 1:
        raise ValueError("reps must be >= 1")
    if config.kind == "lorpe" and config.method in ("lscv", "rlcv"):
        res = cv_study(
            spec,
            n,
            reps,
            seed=seed,
            criteria=(config.method,),
            alpha=config.alpha,
            kernel=config.kernel,
            support=config.support,
            boundary_mode=config.boundary_mode,
            exact_fitpoint=config.exact_fitpoint,
            threads=threads,
            grid_size=grid_size,
        )[config.method]
        return replace(res, config=config)
    fn = partial(_study_rep, spec, config, n, seed, default_ise_grid(spec), grid_size)
    return _make_result(_run_reps(fn, reps, threads), reps, config, seed)


def _ise_from_raw(grid, raw, ise_grid, f_true) -> float:
    """Clip, renormalize, and score one raw curve; nan if degenerate."""
    clipped = np.maximum(raw, 0.0)
    norm = float(np.trapezoid(clipped, grid))
    if not (math.isfinite(norm) and norm > 0.0):
        return math.nan
    vals = np.interp(ise_grid, grid, clipped / norm, left=0.0, right=0.0)
    diff = vals - f_true
    return float(np.trapezoid(diff * diff, ise_grid))


def _best_cell(scores: np.ndarray, maximize: bool) -> tuple[int, int] | None:
    """Optimal finite cell; ties go to larger h (row), then smaller M (col)."""
    vals = scores if maximize else -scores
    best = None
    best_val = -math.inf
    for a in range(vals.shape[0]):
        for b in range(vals.shape[1]):
            v = vals[a, b]
            if not np.isfinite(v):
                continue
            if v > best_val or (v == best_val and best is not None and a > best[0]):
                best_val = v
                best = (a, b)
    return best


# ---------------------------------------------------------------------------
# Oracle grid search.


@dataclass(frozen=True)
class OracleResult:
    """log10 MISE surface over (h, M) with per-cell success counts."""

    h_grid: np.ndarray
    m_grid: np.ndarray
    surface: np.ndarray
    counts: np.ndarray
    best: tuple[int, int]
    kind: str
    n: int
    reps: int
    seed: int
    mirror: bool

    @property
    def best_h(self) -> float:
        return float(self.h_grid[self.best[0]])

    @property
    def best_m(self) -> float:
        return float(self.m_grid[self.best[1]])

    @property
    def best_log10_mise(self) -> float:
        return float(self.surface[self.best])


def _oracle_rep(
    spec, n, seed, h_grid, m_grid, kind, mirror, kernel, support, boundary_mode, ise_grid, grid_size, rep
) -> np.ndarray:
    x = sample_dist(spec, n, rng_stream(seed, 0, rep))
    f_true = pdf(spec, ise_grid)
    out = np.full((h_grid.size, m_grid.size), np.nan)
    if kind == "kde":
        orders = [_m_to_r(m) for m in m_grid]
        # taper_from_degree(r - 1) carries a zeroed fractional slot at r
        m_cap = max(orders)
        mpoint = _finite_edge(support) if mirror else None
        pts = x if mpoint is None else np.concatenate([x, 2.0 * mpoint - x])
        factor = pts.size / x.size
        side = support if mirror else (-math.inf, math.inf)
        for ih, h in enumerate(h_grid):
            gcfg = LorpeConfig(h=float(h), m=0.0, kernel=kernel, support=side)
            grid = default_grid(x, gcfg, grid_size)
            try:
                eng = GridEngine(pts, LorpeConfig(h=float(h), m=0.0, kernel=kernel), grid, m_cap=m_cap)
            except LorpeError:
                continue
            for im, r in enumerate(orders):
                raw = eng.raw_for(taper_from_degree(float(r - 1))) * factor
                out[ih, im] = _ise_from_raw(grid, raw, ise_grid, f_true)
        return out
    tapers = [taper_from_degree(float(m)) for m in m_grid]
    m_cap = max(t.m_max for t in tapers)
    for ih, h in enumerate(h_grid):
        cfg = LorpeConfig(h=float(h), m=0.0, kernel=kernel, support=support, boundary_mode=boundary_mode)
        grid = default_grid(x, cfg, grid_size)
        try:
            eng = GridEngine(x, cfg, grid, m_cap=m_cap)
        except LorpeError:
            continue
        for im, taper in enumerate(tapers):
            out[ih, im] = _ise_from_raw(grid, eng.raw_for(taper), ise_grid, f_true)
    return out


def oracle_search(
    spec: DistributionSpec,
    n: int,
    h_grid,
    m_grid,
    reps: int,
    kind: str = "lorpe",
    seed: int = 0,
    mirror: bool = False,
    kernel: KernelSpec | None = None,
    support: tuple[float, float] | None = None,
    boundary_mode: str = "clip_polys",
    threads: int = 1,
    grid_size: int = GRID_SIZE,
) -> OracleResult:
    """Map the MISE surface over an (h, M) grid with shared samples.

    Every grid cell of a replication reuses one engine per bandwidth,
    and all cells see the same draws (common random numbers), so the
    surface is directly comparable cell to cell and bit-reproducible
    for a fixed seed.  ``kind="kde"`` scores interior kernels of the
    accuracy order matching each degree, optionally reflected at the
    finite support edge.
    """
    h_arr = np.asarray(h_grid, dtype=float)
    m_arr = np.asarray(m_grid, dtype=float)
    if h_arr.size == 0 or m_arr.size == 0:
        raise ValueError("h_grid and m_grid must be nonempty")
    if np.any(~np.isfinite(h_arr)) or np.any(h_arr <= 0.0):
        raise ValueError("bandwidths must be finite and > 0")
    if np.any(~np.isfinite(m_arr)) or np.any(m_arr < 0.0):
        raise ValueError("degrees must be finite and >= 0")
    if kind not in ("lorpe", "kde"):
        raise ValueError("kind must be 'lorpe' or 'kde'")
    if not reps >= 1:
        raise ValueError("reps must be >= 1")
    if kernel is None:
        kernel = study_kernel()
    eff_support = support if support is not None else spec.support
    fn = partial(
        _oracle_rep,
        spec,
        n,
        seed,
        h_arr,
        m_arr,
        kind,
        bool(mirror),
        kernel,
        eff_support,
        boundary_mode,
        default_ise_grid(spec),
        grid_size,
    )
    mats = _run_reps(fn, reps, threads)
    sums = np.zeros((h_arr.size, m_arr.size))
    counts = np.zeros((h_arr.size, m_arr.size), dtype=int)
    for mat in mats:  # replication order fixes the float summation order
        ok = np.isfinite(mat)
        sums[ok] += mat[ok]
        counts[ok] += 1
    surface = np.full(sums.shape, np.nan)
    filled = counts > 0
    surface[filled] = np.log10(sums[filled] / counts[filled])
    cell = _best_cell(surface, maximize=False)
    if cell is None:
        raise AllRejectedError("no oracle cell produced a finite MISE")
    return OracleResult(
        h_grid=h_arr,
        m_grid=m_arr,
        surface=surface,
        counts=counts,
        best=cell,
        kind=kind,
        n=int(n),
        reps=int(reps),
        seed=int(seed),
        mirror=bool(mirror),
    )


# ---------------------------------------------------------------------------
# Cross-validation studies.  One sweep over (h, M) per replication feeds
# every criterion and every alpha, so the expensive engine work is not
# repeated per selector variant.


def _sweep_tables(x, h_grid, tapers, kernel, support, boundary_mode, exact_fitpoint, grid_size):
    """Raw curves and leave-one-out statistics for each (h, M) cell."""
    n = x.size
    H, M = h_grid.size, len(tapers)
    m_cap = max(t.m_max for t in tapers)
    grids = np.zeros((H, grid_size))
    raws = np.zeros((H, M, grid_size))
    loos = np.zeros((H, M, n))
    owns = np.zeros((H, M, n))
    valid = np.zeros((H, M), dtype=bool)
    for ih, h in enumerate(h_grid):
        try:
            ws = CvWorkspace(x, float(h), m_cap, kernel, support, boundary_mode, exact_fitpoint, grid_size)
        except LorpeError:
            continue
        grids[ih] = ws.grid
        for im, taper in enumerate(tapers):
            raw, loo, own = ws.stats(taper)
            raws[ih, im] = raw
            loos[ih, im] = loo
            owns[ih, im] = own
            valid[ih, im] = True
    return grids, raws, loos, owns, valid


def _cell_masses(grids, raws) -> np.ndarray:
    """Clipped-curve mass per (h, M) cell, the unit-mass normalizer."""
    return np.trapezoid(np.maximum(raws, 0.0), grids[:, None, :], axis=2)


def _lscv_table(grids, raws, loos, valid, n) -> np.ndarray:
    clipped = np.maximum(raws, 0.0)
    mass = np.trapezoid(clipped, grids[:, None, :], axis=2)
    sq = np.trapezoid(clipped * clipped, grids[:, None, :], axis=2)
    cross = np.maximum(loos, 0.0).sum(axis=2)
    ok = valid & (mass > 0.0)
    safe = np.where(ok, mass, 1.0)
    table = sq / safe**2 - (2.0 / n) * cross / safe
    return np.where(ok, table, np.nan)


def _rlcv_table(grids, raws, loos, owns, valid, n, alpha) -> np.ndarray:
    mass = _cell_masses(grids, raws)
    terms = np.maximum(loos, owns / n**alpha)
    positive = np.all(terms > 0.0, axis=2) & (mass > 0.0)
    safe = np.where(terms > 0.0, terms, 1.0)
    table = np.log(safe).sum(axis=2) - n * np.log(np.where(mass > 0.0, mass, 1.0))
    return np.where(valid & positive, table, -math.inf)


def _cv_rep(
    spec, n, seed, criteria, alpha, kernel, support, boundary_mode, exact_fitpoint, h_count, m_grid, ise_grid, grid_size, rep
) -> dict:
    x = sample_dist(spec, n, rng_stream(seed, 0, rep))
    out = {crit: None for crit in criteria}
    try:
        h_grid = default_h_grid(x, kernel, count=h_count)
    except LorpeError:
        return out
    tapers = [taper_from_degree(float(m)) for m in m_grid]
    grids, raws, loos, owns, valid = _sweep_tables(
        x, h_grid, tapers, kernel, support, boundary_mode, exact_fitpoint, grid_size
    )
    f_true = pdf(spec, ise_grid)
    for crit in criteria:
        if crit == "lscv":
            cell = _best_cell(_lscv_table(grids, raws, loos, valid, x.size), maximize=False)
        else:
            cell = _best_cell(_rlcv_table(grids, raws, loos, owns, valid, x.size, alpha), maximize=True)
        if cell is None:
            continue
        value = _ise_from_raw(grids[cell[0]], raws[cell], ise_grid, f_true)
        out[crit] = None if math.isnan(value) else value
    return out


def cv_study(
    spec: DistributionSpec,
    n: int,
    reps: int,
    seed: int = 0,
    criteria: tuple[str, ...] = ("lscv", "rlcv"),
    alpha: float = DEFAULT_ALPHA,
    kernel: KernelSpec | None = None,
    support: tuple[float, float] | None = None,
    boundary_mode: str = "clip_polys",
    exact_fitpoint: bool = False,
    h_count: int = 25,
    m_grid=None,
    threads: int = 1,
    grid_size: int = GRID_SIZE,
) -> dict[str, MiseResult]:
    """MISE of cross-validation selectors, sharing one sweep per sample.

    Each replication scores the whole (h, M) grid once; every requested
    criterion then picks its own cell from those tables, and the chosen
    fit is scored against the truth.  Replications where a criterion
    rejects every cell are dropped for that criterion only.
    """
    for crit in criteria:
        if crit not in ("lscv", "rlcv"):
            raise ValueError("criteria entries must be 'lscv' or 'rlcv'")
    if not reps >= 1:
        raise ValueError("reps must be >= 1")
    if kernel is None:
        kernel = study_kernel()
    eff_support = support if support is not None else spec.support
    m_arr = default_m_grid() if m_grid is None else np.asarray(m_grid, dtype=float)
    fn = partial(
        _cv_rep,
        spec,
        n,
        seed,
        tuple(criteria),
        alpha,
        kernel,
        eff_support,
        boundary_mode,
        exact_fitpoint,
        h_count,
        m_arr,
        default_ise_grid(spec),
        grid_size,
    )
    rows = _run_reps(fn, reps, threads)
    results = {}
    for crit in criteria:
        config = EstimatorConfig(
            kind="lorpe",
            method=crit,
            kernel=kernel,
            support=support,
            boundary_mode=boundary_mode,
            alpha=alpha,
            exact_fitpoint=exact_fitpoint,
        )
        results[crit] = _make_result([row[crit] for row in rows], reps, config, seed)
    return results


def _alpha_rep(
    spec, n, seed, alphas, kernel, support, boundary_mode, exact_fitpoint, h_count, m_grid, ise_grid, grid_size, rep
) -> list:
    x = sample_dist(spec, n, rng_stream(seed, 0, rep))
    try:
        h_grid = default_h_grid(x, kernel, count=h_count)
    except LorpeError:
        return [None] * len(alphas)
    tapers = [taper_from_degree(float(m)) for m in m_grid]
    grids, raws, loos, owns, valid = _sweep_tables(
        x, h_grid, tapers, kernel, support, boundary_mode, exact_fitpoint, grid_size
    )
    f_true = pdf(spec, ise_grid)
    out = []
    cache: dict[tuple[int, int], float] = {}
    for alpha in alphas:
        cell = _best_cell(_rlcv_table(grids, raws, loos, owns, valid, x.size, alpha), maximize=True)
        if cell is None:
            out.append(None)
            continue
        if cell not in cache:
            cache[cell] = _ise_from_raw(grids[cell[0]], raws[cell], ise_grid, f_true)
        value = cache[cell]
        out.append(None if math.isnan(value) else value)
    return out


def alpha_sweep(
    spec: DistributionSpec,
    n: int,
    alpha_grid,
    reps: int,
    seed: int = 0,
    kernel: KernelSpec | None = None,
    support: tuple[float, float] | None = None,
    boundary_mode: str = "clip_polys",
    exact_fitpoint: bool = False,
    h_count: int = 25,
    m_grid=None,
    threads: int = 1,
    grid_size: int = GRID_SIZE,
) -> dict[float, tuple[float, float]]:
    """Sensitivity of the regularized-likelihood floor exponent.

    Returns ``{alpha: (log10 MISE, robust se)}``.  All alphas share the
    per-replication sweep tables and the same draws, so differences
    between columns reflect the criterion alone.
    """
    alphas = tuple(float(a) for a in np.atleast_1d(np.asarray(alpha_grid, dtype=float)))
    if len(alphas) == 0:
        raise ValueError("alpha_grid must be nonempty")
    for a in alphas:
        if not 0.0 < a <= 1.0:
            raise ValueError("alpha values must lie in (0, 1]")
    if not reps >= 1:
        raise ValueError("reps must be >= 1")
    if kernel is None:
        kernel = study_kernel()
    eff_support = support if support is not None else spec.support
    m_arr = default_m_grid() if m_grid is None else np.asarray(m_grid, dtype=float)
    fn = partial(
        _alpha_rep,
        spec,
        n,
        seed,
        alphas,
        kernel,
        eff_support,
        boundary_mode,
        exact_fitpoint,
        h_count,
        m_arr,
        default_ise_grid(spec),
        grid_size,
    )
    rows = _run_reps(fn, reps, threads)
    out: dict[float, tuple[float, float]] = {}
    for k, alpha in enumerate(alphas):
        config = EstimatorConfig(
            kind="lorpe",
            method="rlcv",
            kernel=kernel,
            support=support,
            boundary_mode=boundary_mode,
            alpha=alpha,
            exact_fitpoint=exact_fitpoint,
        )
        res = _make_result([row[k] for row in rows], reps, config, seed)
        out[alpha] = (res.log10_mise, res.robust_se)
    return out
