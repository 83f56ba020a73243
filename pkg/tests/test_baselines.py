"""Reference estimators: kernel density variants and the series estimate."""

import math

import numpy as np
import pytest
from scipy.stats import gaussian_kde

from lorpe.baselines import (
    OsdeConfig,
    _discrete_legendre,
    kde_estimate,
    kde_highorder_estimate,
    legendre_osde_raw,
    osde_estimate,
    select_osde_terms,
)
from lorpe.errors import DegenerateSampleError
from lorpe.kernels import eval_kernel, gaussian, symmetric_beta


def test_gaussian_kde_matches_scipy():
    rng = np.random.default_rng(3)
    x = rng.normal(0.0, 1.0, 150)
    h = 0.4
    est = kde_estimate(x, h)
    ref = gaussian_kde(x, bw_method=h / float(np.std(x, ddof=1)))(est.grid)
    assert np.max(np.abs(est.raw - ref)) <= 1e-12
    assert est.norm_constant == pytest.approx(1.0, abs=1e-8)


def test_kde_direct_formula_compact_kernel():
    x = np.array([0.0, 1.0, 1.5])
    h = 0.8
    kern = symmetric_beta(4.5)
    grid = np.linspace(-1.0, 3.0, 41)
    est = kde_estimate(x, h, kernel=kern, grid=grid)
    ref = eval_kernel(kern, (grid[:, None] - x[None, :]) / h).sum(axis=1) / (3 * h)
    assert np.allclose(est.raw, ref, atol=1e-14)


def test_high_order_two_equals_plain_kde():
    rng = np.random.default_rng(8)
    x = rng.normal(0.0, 1.0, 60)
    h = 0.5
    grid = np.linspace(-4.0, 4.0, 101)
    plain = kde_estimate(x, h, grid=grid)
    high = kde_highorder_estimate(x, h, r=2, grid=grid)
    assert np.max(np.abs(plain.raw - high.raw)) <= 1e-12


def test_high_order_four_matches_closed_form_kernel():
    # Order-4 Gaussian estimate is the (3 - y^2)/2 phi(y) kernel sum.
    rng = np.random.default_rng(12)
    x = rng.normal(0.0, 1.0, 40)
    h = 0.6
    grid = np.linspace(-3.0, 3.0, 61)
    est = kde_highorder_estimate(x, h, r=4, grid=grid)
    y = (grid[:, None] - x[None, :]) / h
    ref = ((3.0 - y * y) / 2.0 * np.exp(-0.5 * y * y) / math.sqrt(2 * math.pi)).sum(axis=1) / (40 * h)
    assert np.max(np.abs(est.raw - ref)) <= 1e-10


def test_mirror_reflection_identity():
    rng = np.random.default_rng(5)
    x = np.abs(rng.normal(0.0, 1.0, 50))
    h = 0.45
    grid = np.linspace(0.0, 3.0, 31)
    est = kde_estimate(x, h, mirror=0.0, grid=grid)
    both = np.concatenate([x, -x])
    ref = eval_kernel(gaussian(), (grid[:, None] - both[None, :]) / h).sum(axis=1) / (50 * h)
    assert np.allclose(est.raw, ref, atol=1e-13)


def test_mirror_restricts_grid_to_data_side():
    x = np.array([0.2, 0.5, 1.0])
    est = kde_estimate(x, 0.3, kernel=symmetric_beta(4.5), mirror=0.0)
    assert est.grid[0] >= 0.0
    assert np.trapezoid(est.value, est.grid) == pytest.approx(1.0, abs=1e-9)


def test_high_order_mirror_far_edge_is_neutral():
    # Reflecting a compact kernel about a faraway edge must not change the
    # estimate; this pins the sample-size bookkeeping of the reflection.
    rng = np.random.default_rng(9)
    x = rng.normal(0.0, 1.0, 30)
    h = 0.7
    grid = np.linspace(-3.0, 3.0, 41)
    kern = symmetric_beta(4.5)
    plain = kde_highorder_estimate(x, h, kernel=kern, r=4, grid=grid)
    mirrored = kde_highorder_estimate(x, h, kernel=kern, r=4, mirror=-50.0, grid=grid)
    assert np.max(np.abs(plain.raw - mirrored.raw)) <= 1e-12


def test_kde_validates_inputs():
    with pytest.raises(ValueError):
        kde_estimate(np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        kde_estimate(np.array([]), 1.0)
    with pytest.raises(ValueError):
        kde_highorder_estimate(np.array([1.0]), 1.0, r=3)


# --- series estimate ---------------------------------------------------------


def test_discrete_recurrence_close_to_legendre():
    # Midpoint-grid orthonormal polynomials approach continuous Legendre;
    # at 2048 points the recurrence coefficients agree to a few 1e-6.
    alpha, sqb = _discrete_legendre(2048, 8)
    k = np.arange(1, 9)
    ref = k / np.sqrt(4.0 * k * k - 1.0)
    assert np.max(np.abs(alpha)) <= 1e-12
    assert np.max(np.abs(sqb[1:9] - ref)) <= 1e-5


def test_series_hand_case():
    # Two points at 0.25 and 0.75 on [0,1]: theta_1 = 0 by symmetry and
    # theta_2 = -0.125 sqrt(5), so f = 1 - (5/16)(3 (2u-1)^2 - 1).
    x = np.array([0.25, 0.75])
    est = osde_estimate(x, OsdeConfig(j=2, support_map=(0.0, 1.0)))
    u = est.grid
    ref = 1.0 - 0.125 * 5.0 * (3.0 * (2.0 * u - 1.0) ** 2 - 1.0) / 2.0
    assert np.max(np.abs(est.raw - ref)) <= 1e-5
    cont = legendre_osde_raw(x, 2, 0.0, 1.0, u)
    assert np.max(np.abs(cont - ref)) <= 1e-12


def test_zero_terms_is_uniform_on_mapped_interval():
    # Order statistics 0..9 map to the interval (-0.5, 9.5), width 10.
    est = osde_estimate(np.arange(10.0), OsdeConfig(j=0))
    half = 0.5 * (est.grid[1] - est.grid[0])
    assert est.grid[0] - half == pytest.approx(-0.5, abs=1e-12)
    assert est.grid[-1] + half == pytest.approx(9.5, abs=1e-12)
    assert np.allclose(est.raw, 0.1, atol=1e-12)


def test_series_estimate_normalized():
    rng = np.random.default_rng(2)
    x = rng.beta(2.0, 5.0, 200)
    est = osde_estimate(x, OsdeConfig(j=6))
    assert np.all(est.value >= 0.0)
    assert np.trapezoid(est.value, est.grid) == pytest.approx(1.0, abs=1e-9)


def test_term_scan_frozen():
    rng = np.random.default_rng(14)
    x = rng.normal(0.0, 1.0, 400)
    assert select_osde_terms(x) == 4
    xb = rng.beta(2.0, 4.0, 300)
    assert select_osde_terms(xb) == 3


def test_term_scan_keeps_uniform_short():
    # For near-uniform data on the mapped interval no term passes the
    # threshold, so the scan returns a very small count.
    u = (np.arange(1, 200) - 0.5) / 199.0
    assert select_osde_terms(u) <= 1


def test_series_rejects_degenerate():
    with pytest.raises(DegenerateSampleError):
        osde_estimate(np.array([2.0, 2.0, 2.0]), OsdeConfig(j=2))
    with pytest.raises(ValueError):
        OsdeConfig(j=-1)
    with pytest.raises(ValueError):
        OsdeConfig(j=64, grid_size=64)
