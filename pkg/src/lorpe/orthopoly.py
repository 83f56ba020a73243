"""Orthonormal polynomial systems on kernel-weighted intervals.

For a fit point with scaled boundary offsets a~ = (a - x_fit)/h and
b~ = (b - x_fit)/h, this module constructs polynomials {P_k} with

    integral over [a~, b~] of P_j(y) P_k(y) K(y) dy = delta_jk,

where the integration interval is the intersection of [a~, b~] with the
kernel's (quadrature) support.  Away from boundaries the system reduces
to the classical family attached to K (Gegenbauer for symmetric Beta
kernels, probabilists' Hermite for the Gaussian, Legendre for uniform).

Construction uses the discretized Stieltjes procedure: the three-term
recurrence coefficients are computed against a Gauss-Legendre
discretization of the weighted interval, starting at 512 nodes and
doubling until the coefficients stabilize to 1e-12.  The recurrence is
run in the affinely normalized variable z = (y - mid)/halfwidth so that
arbitrarily small or off-center intervals remain well conditioned, then
mapped back to y.

Systems are immutable.  ``build_system`` memoizes on the quantized
effective interval (1e-9 resolution) so interior grid points share one
system; the memo table is thread-safe.  ``build_batch`` constructs many
systems at once with vectorized recurrences and is the workhorse behind
grid estimation and cross-validation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quad import gauss_legendre
from .errors import DegenerateIntervalError, IllConditionedError, QuadratureError
from .kernels import KernelSpec, eval_kernel

__all__ = [
    "PolySystem",
    "BatchSystems",
    "build_system",
    "interior_system",
    "eval_poly",
    "poly_coefficients",
    "closed_form_gegenbauer",
    "build_batch",
    "recurrence_apply",
]

#: Minimum usable width of the effective integration interval.
MIN_INTERVAL = 1e-12

#: Stabilization tolerance for the recurrence coefficients.
STAB_TOL = 1e-12

#: Residual above which a system is rejected as ill-conditioned.
RESIDUAL_LIMIT = 1e-6

_QUANTUM = 1e-9
# Intervals this short get a finer snap: a 1e-9 shift would visibly
# perturb the polynomials in the huge-bandwidth (flat-weight) regime.
_FINE_WIDTH = 1e-3
_FINE_QUANTUM = 1e-15


def interval_key(lo, hi):
    """Cache key for an interval: endpoints snapped to the shared grid.

    Resolution is 1e-9, refined to 1e-15 for intervals shorter than
    1e-3 so the snap always stays far below the interval width.
    Accepts scalars or arrays; returns (qlo, qhi, fine) integer keys.
    """
    fine = (np.asarray(hi) - np.asarray(lo)) < _FINE_WIDTH
    q = np.where(fine, _FINE_QUANTUM, _QUANTUM)
    qlo = np.round(np.asarray(lo) / q).astype(np.int64)
    qhi = np.round(np.asarray(hi) / q).astype(np.int64)
    return qlo, qhi, fine


def interval_from_key(qlo, qhi, fine):
    """Snapped endpoints back from an ``interval_key`` triple."""
    q = np.where(fine, _FINE_QUANTUM, _QUANTUM)
    return qlo * q, qhi * q


def _weight(kernel: KernelSpec, y, mirror_about=None):
    """Orthogonalization weight: K(y), plus its reflection when mirroring."""
    w = eval_kernel(kernel, y)
    if mirror_about is not None:
        w = w + eval_kernel(kernel, 2.0 * mirror_about - y)
    return w


def _stieltjes_z(z: np.ndarray, w: np.ndarray, m_max: int):
    """Three-term coefficients of monic orthogonal polynomials.

    z: (N,) nodes in the normalized variable; w: (..., N) nonnegative
    weights (kernel times quadrature weight, carrying the y-measure
    scale).  Returns (alpha, beta) with shapes (..., max(m_max, 1)) and
    (..., m_max + 1); beta[..., 0] is the total mass.
    """
    lead = w.shape[:-1]
    n_alpha = max(m_max, 1)
    alpha = np.zeros(lead + (n_alpha,))
    beta = np.zeros(lead + (m_max + 1,))
    pi_prev = np.zeros_like(w)
    pi = np.ones_like(w)
    nu = w.sum(axis=-1)
    beta[..., 0] = nu
    for k in range(m_max):
        wpi2 = w * pi * pi
        nu_k = wpi2.sum(axis=-1)
        a_k = (wpi2 * z).sum(axis=-1) / nu_k
        alpha[..., k] = a_k
        if k == 0:
            pi_next = (z - a_k[..., None]) * pi
        else:
            b_k = beta[..., k]
            pi_next = (z - a_k[..., None]) * pi - b_k[..., None] * pi_prev
        nu_next = (w * pi_next * pi_next).sum(axis=-1)
        beta[..., k + 1] = nu_next / nu_k
        pi_prev, pi = pi, pi_next
    return alpha, beta


def _coef_close(a1, b1, a2, b2) -> float:
    """Largest mixed abs/rel discrepancy between two coefficient sets."""
    da = np.abs(a1 - a2) / np.maximum(1.0, np.abs(a2))
    db = np.abs(b1 - b2) / np.maximum(np.abs(b2), np.abs(b1))
    db = np.where((b1 == 0.0) & (b2 == 0.0), 0.0, db)
    return float(max(da.max(initial=0.0), db.max(initial=0.0)))


def _build_coeffs(kernel, lo, hi, m_max, mirror_about, n_start=512, n_cap=8192):
    """Stieltjes coefficients in y-space with adaptive node doubling.

    lo/hi/mirror_about are arrays of shape (S,) (or scalars promoted by
    the caller).  Returns (alpha_y, sqb_y, stab) where sqb_y[..., 0] is
    sqrt of the total weight mass.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)

    def coeffs_at(n):
        z, gw = gauss_legendre(n)
        y = mid[..., None] + half[..., None] * z
        w = _weight(kernel, y, mirror_about[..., None] if mirror_about is not None else None)
        w = w * (gw * half[..., None])
        return _stieltjes_z(z, w, m_max)

    n = n_start
    a_prev, b_prev = coeffs_at(n)
    while True:
        a_cur, b_cur = coeffs_at(2 * n)
        stab = _coef_close(a_prev, b_prev, a_cur, b_cur)
        if stab <= STAB_TOL:
            break
        n *= 2
        if 2 * n > n_cap:
            raise QuadratureError(
                f"recurrence coefficients did not stabilize below {STAB_TOL} "
                f"at {n_cap} quadrature nodes"
            )
        a_prev, b_prev = a_cur, b_cur
    # map the normalized-variable coefficients back to y
    alpha_y = mid[..., None] + half[..., None] * a_cur
    sqb = np.sqrt(b_cur)
    sqb_y = np.concatenate([sqb[..., :1], half[..., None] * sqb[..., 1:]], axis=-1)
    return alpha_y, sqb_y, stab, 2 * n


def recurrence_apply(alpha: np.ndarray, sqb: np.ndarray, y: np.ndarray, consume) -> None:
    """Run the orthonormal recurrence at y, calling consume(k, values).

    alpha, sqb follow the shapes produced by the builders; y must
    broadcast against their leading axes with one trailing evaluation
    axis.  values has the broadcast shape of y and is only valid during
    the call (buffers are reused).
    """
    m_max = sqb.shape[-1] - 1
    p_prev = np.zeros(np.broadcast_shapes(y.shape, alpha[..., :1].shape))
    p = np.full_like(p_prev, 1.0) / sqb[..., 0, None]
    consume(0, p)
    for k in range(m_max):
        p_next = ((y - alpha[..., k, None]) * p - sqb[..., k, None] * p_prev) / sqb[..., k + 1, None]
        p_prev, p = p, p_next
        consume(k + 1, p)


@dataclass(frozen=True, eq=False)
class PolySystem:
    """Orthonormal polynomials on [a_tilde, b_tilde] under weight K.

    ``lo``/``hi`` give the effective (kernel-clipped, quantized)
    integration interval; ``alpha``/``sqb`` the three-term recurrence;
    ``nodes``/``weights`` the discrete measure the system was built on;
    ``norm_residual`` the orthonormality defect measured on an
    independent quadrature rule.
    """

    kernel: KernelSpec
    a_tilde: float
    b_tilde: float
    degree_max: int
    lo: float
    hi: float
    mirror_about: float | None
    alpha: np.ndarray
    sqb: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    norm_residual: float

    @property
    def interval(self) -> tuple[float, float]:
        return (self.a_tilde, self.b_tilde)


def _clip_interval(kernel: KernelSpec, a_tilde: float, b_tilde: float):
    hw = kernel.quad_half_width
    lo = max(a_tilde, -hw)
    hi = min(b_tilde, hw)
    if not (hi - lo >= MIN_INTERVAL):
        raise DegenerateIntervalError(
            f"effective interval [{lo}, {hi}] is shorter than {MIN_INTERVAL}"
        )
    return lo, hi


@lru_cache(maxsize=512)
def _build_cached(kernel: KernelSpec, qlo: int, qhi: int, fine: bool, m_max: int, mirrored: bool):
    lo, hi = interval_from_key(qlo, qhi, fine)
    lo, hi = float(lo), float(hi)
    mirror_about = lo if mirrored else None
    marr = np.asarray(mirror_about, dtype=float) if mirrored else None
    alpha, sqb, stab, n_final = _build_coeffs(
        kernel, np.asarray(lo), np.asarray(hi), m_max, marr
    )
    # final discrete measure, kept on the system per contract
    z, gw = gauss_legendre(n_final)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = mid + half * z
    weights = _weight(kernel, nodes, mirror_about) * gw * half
    residual = _orthonormality_residual(kernel, lo, hi, mirror_about, alpha, sqb, n_final + 257)
    if residual > RESIDUAL_LIMIT:
        raise IllConditionedError(
            f"orthonormality residual {residual:.3e} exceeds {RESIDUAL_LIMIT}"
        )
    return alpha, sqb, nodes, weights, residual, lo, hi


def _orthonormality_residual(kernel, lo, hi, mirror_about, alpha, sqb, n_check) -> float:
    """max |<P_j, P_k> - delta_jk| on a quadrature rule the build never saw."""
    z, gw = gauss_legendre(n_check)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    y = mid + half * z
    w = _weight(kernel, y, mirror_about) * gw * half
    m_max = sqb.shape[-1] - 1
    vals = np.empty((m_max + 1, n_check))

    def take(k, p):
        vals[k] = p

    recurrence_apply(alpha, sqb, y, take)
    gram = (vals * w) @ vals.T
    return float(np.abs(gram - np.eye(m_max + 1)).max())


def build_system(
    kernel: KernelSpec,
    a_tilde: float,
    b_tilde: float,
    m_max: int,
    mirror: bool = False,
) -> PolySystem:
    """Construct (or fetch from cache) the orthonormal system.

    With ``mirror`` the weight becomes K(y) + K(2*a~ - y), reflecting
    the kernel about the left boundary offset; a~ must then be inside
    the kernel support for the reflection to matter.
    """
    if not a_tilde < b_tilde:
        raise ValueError("a_tilde must be strictly below b_tilde")
    if m_max < 0:
        raise ValueError("m_max must be nonnegative")
    lo, hi = _clip_interval(kernel, a_tilde, b_tilde)
    mirrored = bool(mirror) and lo > -kernel.quad_half_width
    qlo, qhi, fine = interval_key(lo, hi)
    alpha, sqb, nodes, weights, residual, qlo_f, qhi_f = _build_cached(
        kernel, int(qlo), int(qhi), bool(fine), int(m_max), mirrored
    )
    return PolySystem(
        kernel=kernel,
        a_tilde=float(a_tilde),
        b_tilde=float(b_tilde),
        degree_max=int(m_max),
        lo=qlo_f,
        hi=qhi_f,
        mirror_about=qlo_f if mirrored else None,
        alpha=alpha,
        sqb=sqb,
        nodes=nodes,
        weights=weights,
        norm_residual=residual,
    )


def interior_system(kernel: KernelSpec, m_max: int) -> PolySystem:
    """System for a fit point far from any support boundary."""
    return build_system(kernel, -math.inf, math.inf, m_max)


def eval_poly(sys: PolySystem, k: int, y):
    """P_k(y) by the three-term recurrence; extends outside [a~, b~]."""
    if not 0 <= k <= sys.degree_max:
        raise ValueError(f"degree {k} outside [0, {sys.degree_max}]")
    arr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty((k + 1, arr.size))

    def take(j, p):
        if j <= k:
            out[j] = p

    recurrence_apply(sys.alpha, sys.sqb, arr, take)
    res = out[k]
    if np.isscalar(y) or np.asarray(y).ndim == 0:
        return float(res[0])
    return res.reshape(np.asarray(y).shape)


def poly_values(sys: PolySystem, y) -> np.ndarray:
    """All P_0..P_degree_max at y, stacked on the first axis."""
    arr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty((sys.degree_max + 1, arr.size))

    def take(j, p):
        out[j] = p

    recurrence_apply(sys.alpha, sys.sqb, arr, take)
    return out.reshape((sys.degree_max + 1,) + np.asarray(y).shape) if np.asarray(y).ndim else out[:, 0]


def poly_coefficients(sys: PolySystem, k: int) -> np.ndarray:
    """Monomial coefficients (ascending) of P_k via the recurrence."""
    if not 0 <= k <= sys.degree_max:
        raise ValueError(f"degree {k} outside [0, {sys.degree_max}]")
    prev = np.zeros(k + 1)
    cur = np.zeros(k + 1)
    cur[0] = 1.0 / sys.sqb[0]
    for j in range(k):
        nxt = np.zeros(k + 1)
        nxt[1 : j + 2] = cur[: j + 1]
        nxt[: j + 1] -= sys.alpha[j] * cur[: j + 1]
        nxt[: j + 1] -= sys.sqb[j] * prev[: j + 1]
        nxt /= sys.sqb[j + 1]
        prev, cur = cur, nxt
    return cur


def closed_form_gegenbauer(alpha: float, k: int) -> np.ndarray:
    """Monomial coefficients of the K-orthonormalized Gegenbauer P_k.

    Normalized so the symmetric Beta *density* (not the bare weight) is
    the orthonormalizing measure; alpha = 1/2 gives the uniform-kernel
    system, i.e. sqrt(2) times the unit-weight orthonormal Legendre.
    """
    if alpha < 0.5:
        raise ValueError("alpha must be >= 1/2")
    if k < 0:
        raise ValueError("k must be nonnegative")
    coef = np.zeros(k + 1)
    for i in range(k // 2 + 1):
        term = (
            (-1.0) ** i
            * math.gamma(k - i + alpha)
            / (math.gamma(alpha) * math.factorial(i) * math.factorial(k - 2 * i))
        )
        coef[k - 2 * i] = term * 2.0 ** (k - 2 * i)
    # squared norm of the classical polynomial under the bare weight
    h_k = (
        math.pi
        * 2.0 ** (1.0 - 2.0 * alpha)
        * math.gamma(k + 2.0 * alpha)
        / (math.factorial(k) * (k + alpha) * math.gamma(alpha) ** 2)
    )
    c_a = math.gamma(alpha + 1.0) / (math.sqrt(math.pi) * math.gamma(alpha + 0.5))
    return coef / math.sqrt(h_k * c_a)


@dataclass(frozen=True, eq=False)
class BatchSystems:
    """Recurrence coefficients for many fit points built in one sweep."""

    kernel: KernelSpec
    m_max: int
    lo: np.ndarray
    hi: np.ndarray
    mirror_about: np.ndarray | None
    alpha: np.ndarray
    sqb: np.ndarray
    stab: float


def build_batch(
    kernel: KernelSpec,
    lo: np.ndarray,
    hi: np.ndarray,
    m_max: int,
    mirror: bool = False,
    chunk: int = 256,
) -> BatchSystems:
    """Vectorized Stieltjes build over (already clipped) intervals.

    Validation here is the node-doubling stabilization check applied to
    every system; the scalar ``build_system`` path additionally carries
    an independent-quadrature Gram residual.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(hi - lo < MIN_INTERVAL):
        raise DegenerateIntervalError("a batch interval is numerically empty")
    mirror_about = None
    if mirror:
        active = lo > -kernel.quad_half_width
        mirror_about = np.where(active, lo, -np.inf)
    n_alpha = max(m_max, 1)
    alpha = np.empty((lo.size, n_alpha))
    sqb = np.empty((lo.size, m_max + 1))
    stab = 0.0
    for start in range(0, lo.size, chunk):
        sl = slice(start, min(start + chunk, lo.size))
        marr = mirror_about[sl] if mirror_about is not None else None
        a, b, s, _ = _build_coeffs(kernel, lo[sl], hi[sl], m_max, marr)
        alpha[sl] = a
        sqb[sl] = b
        stab = max(stab, s)
    return BatchSystems(
        kernel=kernel,
        m_max=m_max,
        lo=lo,
        hi=hi,
        mirror_about=mirror_about,
        alpha=alpha,
        sqb=sqb,
        stab=stab,
    )
