"""Tapered local expansion: estimates, effective kernels, grid engine.

The independent anchors here are closed forms: the degree-1 and degree-3
Gaussian interior effective kernels are phi(y) and (3 - y^2)/2 phi(y), the
degree-1 uniform kernel at a left boundary is the line 4 + 6u, and in the
huge-bandwidth limit the raw expansion collapses to a Legendre series.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lorpe._quad import integrate
from lorpe.baselines import legendre_osde_raw
from lorpe.core import (
    GridEngine,
    LorpeConfig,
    Taper,
    default_grid,
    effective_kernel,
    effective_support,
    estimate_on_grid,
    evaluate_raw,
    taper_from_degree,
)
from lorpe.errors import AllZeroDensityError
from lorpe.kernels import eval_kernel, gaussian, symmetric_beta, uniform


def _phi(y):
    return np.exp(-0.5 * np.asarray(y) ** 2) / math.sqrt(2.0 * math.pi)


# --- taper ----------------------------------------------------------------


def test_taper_integer_degree():
    t = taper_from_degree(3.0)
    assert np.allclose(t.t, [1.0, 1.0, 1.0, 1.0, 0.0])
    assert t.m_max == 4


def test_taper_fractional_degree():
    t = taper_from_degree(2.5)
    assert np.allclose(t.t, [1.0, 1.0, 1.0, math.sqrt(0.5)])


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 12.0, allow_nan=False))
def test_taper_effective_degree_identity(m):
    t = taper_from_degree(m)
    assert abs(float(np.sum(t.t**2)) - 1.0 - m) <= 1e-12


def test_taper_rejects_negative():
    with pytest.raises(ValueError):
        taper_from_degree(-0.5)


# --- effective kernels against closed forms --------------------------------


def test_interior_gaussian_degree1_is_gaussian():
    cfg = LorpeConfig(h=1.0, m=1.0, kernel=gaussian())
    u = np.linspace(-6.0, 6.0, 241)
    assert np.max(np.abs(effective_kernel(cfg, 0.0, u) - _phi(u))) <= 1e-12


def test_interior_gaussian_degree3_closed_form():
    # Fourth-order kernel: (3 - y^2)/2 phi(y).
    cfg = LorpeConfig(h=1.0, m=3.0, kernel=gaussian())
    u = np.linspace(-6.0, 6.0, 241)
    ref = (3.0 - u * u) / 2.0 * _phi(u)
    assert np.max(np.abs(effective_kernel(cfg, 0.0, u) - ref)) <= 1e-12


def test_boundary_uniform_degree1_closed_form():
    # At the support edge the degree-1 uniform system gives K_eff = 4 + 6u
    # on [-1, 0] and zero to the right.
    cfg = LorpeConfig(h=1.0, m=1.0, kernel=uniform(), support=(0.0, math.inf))
    u = np.linspace(-1.0, 0.0, 11)
    assert np.allclose(effective_kernel(cfg, 0.0, u), 4.0 + 6.0 * u, atol=1e-9)
    assert np.all(effective_kernel(cfg, 0.0, np.array([0.1, 0.7])) == 0.0)


def test_effective_kernel_unit_mass_and_even_interior():
    cfg = LorpeConfig(h=1.0, m=4.0, kernel=symmetric_beta(1.5))
    u = np.linspace(-1.0, 1.0, 101)
    vals = effective_kernel(cfg, 0.0, u)
    assert np.allclose(vals, vals[::-1], atol=1e-10)
    total = integrate(lambda t: effective_kernel(cfg, 0.0, t), -1.0, 1.0, n=512)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_boundary_kernel_integrates_to_one():
    # Unit mass holds at a boundary too; moment-vanishing does not.  The
    # kernel is cut off at u = 0 there, so integrate only where it lives.
    cfg = LorpeConfig(h=1.0, m=2.0, kernel=symmetric_beta(4.5), support=(0.0, math.inf))
    total = integrate(lambda t: effective_kernel(cfg, 0.0, t), -1.0, 0.0, n=512)
    assert total == pytest.approx(1.0, abs=1e-9)


# --- raw expansion against an independent construction ---------------------


def test_raw_matches_direct_projection_interior():
    # Independent route: orthonormalize monomials under the kernel weight
    # with dense quadrature, then assemble sum_k t_k c_k P_k(0) by hand.
    rng = np.random.default_rng(7)
    x = rng.normal(0.0, 1.0, 40)
    h, m = 0.8, 2.0
    x_fit = 0.31
    kernel = symmetric_beta(2.5)

    z, gw = np.polynomial.legendre.leggauss(400)
    w = eval_kernel(kernel, z) * gw
    basis = np.vstack([z**k for k in range(4)])
    polys = []
    for k in range(4):
        p = basis[k].copy()
        coefs = np.zeros((k + 1, k + 1))  # rows: monomial mix per ortho step
        vec = np.zeros(4)
        vec[k] = 1.0
        for q in polys:
            vec -= np.sum(p * q[0] * w) * q[1]
            p = basis[:4].T @ vec
        nrm = math.sqrt(np.sum(p * p * w))
        polys.append((p / nrm, vec / nrm))

    y = (x - x_fit) / h
    inside = np.abs(y) <= 1.0
    t = taper_from_degree(m).t
    total = 0.0
    for k in range(4):
        pk = np.poly1d(list(reversed(polys[k][1])))
        ck = np.sum(pk(y[inside]) * eval_kernel(kernel, y[inside])) / (x.size * h)
        total += t[k] * ck * pk(0.0)
    mine = evaluate_raw(x, x_fit, LorpeConfig(h=h, m=m, kernel=kernel))
    assert mine == pytest.approx(total, abs=1e-10)


def test_huge_bandwidth_collapses_to_legendre_series():
    rng = np.random.default_rng(5)
    x = rng.beta(2.0, 3.0, 200)
    grid = np.linspace(0.0, 1.0, 201)
    for m in (0, 2, 5):
        cfg = LorpeConfig(h=1e6, m=float(m), kernel=gaussian(), support=(0.0, 1.0))
        est = estimate_on_grid(x, cfg, grid)
        ref = legendre_osde_raw(x, m, 0.0, 1.0, grid)
        assert np.max(np.abs(est.raw - ref)) <= 1e-9


# --- grid estimates ---------------------------------------------------------


def test_estimate_normalized_and_nonnegative():
    rng = np.random.default_rng(1)
    x = rng.exponential(1.0, 80)
    cfg = LorpeConfig(h=3.0, m=2.0, kernel=symmetric_beta(4.5), support=(0.0, math.inf))
    est = estimate_on_grid(x, cfg)
    assert np.all(est.value >= 0.0)
    assert np.trapezoid(est.value, est.grid) == pytest.approx(1.0, abs=1e-9)
    assert est.norm_constant > 0.0
    # the returned curve is exactly the clipped raw over its mass
    assert np.allclose(est.value, np.maximum(est.raw, 0.0) / est.norm_constant)


def test_grid_engine_matches_pointwise_evaluation():
    rng = np.random.default_rng(3)
    x = rng.exponential(1.0, 25)
    cfg = LorpeConfig(h=2.0, m=2.5, kernel=symmetric_beta(4.5), support=(0.0, math.inf))
    grid = np.linspace(0.0, 8.0, 17)
    eng = GridEngine(x, cfg, grid)
    raw = eng.raw_for(cfg.taper)
    for i in (0, 3, 8, 16):
        assert raw[i] == pytest.approx(evaluate_raw(x, float(grid[i]), cfg), abs=1e-12)


def test_scale_equivariance():
    # Scaling data and bandwidth together scales the density by 1/c.
    rng = np.random.default_rng(11)
    x = rng.normal(2.0, 1.0, 60)
    c = 3.7
    cfg1 = LorpeConfig(h=0.9, m=2.0, kernel=symmetric_beta(4.5))
    cfg2 = LorpeConfig(h=0.9 * c, m=2.0, kernel=symmetric_beta(4.5))
    pts = np.array([1.0, 2.0, 2.5])
    for p in pts:
        a = evaluate_raw(x, float(p), cfg1)
        b = evaluate_raw(c * x, float(c * p), cfg2)
        assert b == pytest.approx(a / c, rel=1e-12)


def test_default_grid_spans_effective_support():
    x = np.array([0.5, 1.0, 4.0])
    cfg = LorpeConfig(h=2.0, m=1.0, kernel=symmetric_beta(4.5), support=(0.0, math.inf))
    lo, hi = effective_support(x, cfg)
    assert lo == 0.0
    assert hi == pytest.approx(6.0)  # max + one bandwidth for compact kernels
    grid = default_grid(x, cfg, 64)
    assert grid[0] == lo and grid[-1] == hi and grid.size == 64


def test_config_validation():
    with pytest.raises(ValueError):
        LorpeConfig(h=0.0, m=1.0)
    with pytest.raises(ValueError):
        LorpeConfig(h=1.0, m=-1.0)
    with pytest.raises(ValueError):
        LorpeConfig(h=1.0, m=1.0, support=(2.0, 1.0))
    with pytest.raises(ValueError):
        LorpeConfig(h=1.0, m=1.0, boundary_mode="reflect")


def test_grid_must_stay_inside_support():
    x = np.array([0.5, 1.5, 2.0])
    cfg = LorpeConfig(h=1.0, m=1.0, support=(0.0, 4.0))
    with pytest.raises(ValueError, match="inside the support"):
        estimate_on_grid(x, cfg, np.linspace(-1.0, 4.0, 11))


def test_all_zero_density_rejected():
    # A window with no data inside yields an identically zero estimate.
    x = np.array([10.0, 10.5, 11.0])
    cfg = LorpeConfig(h=0.25, m=0.0, kernel=uniform())
    with pytest.raises(AllZeroDensityError):
        estimate_on_grid(x, cfg, np.linspace(0.0, 2.0, 33))


def test_boundary_modes_both_normalize():
    rng = np.random.default_rng(9)
    x = rng.exponential(1.0, 50)
    for mode in ("clip_polys", "kernel_mirror"):
        cfg = LorpeConfig(h=1.5, m=1.0, kernel=symmetric_beta(4.5), support=(0.0, math.inf), boundary_mode=mode)
        est = estimate_on_grid(x, cfg)
        assert np.trapezoid(est.value, est.grid) == pytest.approx(1.0, abs=1e-9)


def test_taper_weights_are_applied():
    # Degree 1.5 must sit strictly between the degree-1 and degree-2 fits
    # at a point where those differ.
    rng = np.random.default_rng(21)
    x = rng.normal(0.0, 1.0, 30)
    cfg = lambda m: LorpeConfig(h=1.2, m=m, kernel=symmetric_beta(4.5))
    p = 0.4
    lo, mid, hi = (evaluate_raw(x, p, cfg(m)) for m in (1.0, 1.5, 2.0))
    assert min(lo, hi) < mid < max(lo, hi)
