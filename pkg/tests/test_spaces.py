"""Norm estimator tests, each pinned against an independent brute-force oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levylab.grid import Grid, SampledField, smooth_random_field
from levylab.spaces import (
    MorreyParams,
    besov_seminorm,
    dyadic_oscillation_check,
    dyadic_radius_ladder,
    holder_norm,
    holder_seminorm,
    morrey_norm,
    sobolev_norm,
)


def brute_force_morrey(values, grid, q, a, local=False):
    """Nested-loop oracle: every center, every ladder radius, direct masks."""
    L, h, dA = grid.side_length, grid.spacing, grid.cell_volume
    pts = grid.point_stack
    best_osc_small = best_osc_all = best_plain = 0.0
    for r in dyadic_radius_ladder(grid):
        for idx in np.ndindex(grid.shape):
            center = pts[idx]
            mask = grid.torus_distance(pts, center) <= r + 1e-12
            ball = values[mask]
            osc = (r ** (-a) * (np.abs(ball - ball.mean()) ** q).sum() * dA) ** (1 / q)
            plain = (r ** (-a) * (np.abs(ball) ** q).sum() * dA) ** (1 / q)
            best_osc_all = max(best_osc_all, osc)
            if r < 1.0:
                best_osc_small = max(best_osc_small, osc)
            else:
                best_plain = max(best_plain, plain)
    return best_osc_small + best_plain if local else best_osc_all


@pytest.fixture(scope="module")
def grid16():
    return Grid(points_per_dim=16)


def test_morrey_constant_field_homogeneous_is_zero(grid16):
    f = SampledField(grid16, np.full(grid16.shape, 4.2))
    assert morrey_norm(f, MorreyParams(q=2, a=1.0)) == pytest.approx(0.0, abs=1e-12)


def test_morrey_local_constant_matches_max_ball_volume(grid16):
    c = 1.5
    f = SampledField(grid16, np.full(grid16.shape, c))
    val = morrey_norm(f, MorreyParams(q=1, a=0.0, local=True))
    oracle = brute_force_morrey(f.values, grid16, q=1, a=0.0, local=True)
    assert val == pytest.approx(oracle, rel=1e-12)
    # the plain branch realizes |c| * (largest wrapped-ball measure)
    biggest = dyadic_radius_ladder(grid16)[-1]
    mask = grid16.distance_from([0, 0]) <= biggest + 1e-12
    assert val == pytest.approx(c * mask.sum() * grid16.cell_volume, rel=1e-12)


@pytest.mark.parametrize("q,a,local", [(2, 1.0, False), (1, 0.5, False), (2, 2.5, True)])
def test_morrey_matches_exhaustive_oracle(grid16, q, a, local):
    rng = np.random.default_rng(42)
    f = SampledField(grid16, rng.standard_normal(grid16.shape))
    val = morrey_norm(f, MorreyParams(q=q, a=a, local=local))
    oracle = brute_force_morrey(f.values, grid16, q=q, a=a, local=local)
    assert val == pytest.approx(oracle, rel=1e-12)


def test_morrey_rejects_degenerate_scaling(grid16):
    f = SampledField(grid16, np.zeros(grid16.shape))
    with pytest.raises(ValueError):
        morrey_norm(f, MorreyParams(q=1.0, a=3.5))  # a >= n + q


def test_morrey_zero_scaling_dominated_by_lp(grid16):
    # a = 0, q = p: the windowed integrals never exceed a fixed multiple of
    # the plain L^p norm (oscillation <= 2x windowed mass <= 2x total mass)
    rng = np.random.default_rng(77)
    f = SampledField(grid16, rng.standard_normal(grid16.shape))
    for q in (1.0, 2.0):
        val = morrey_norm(f, MorreyParams(q=q, a=0.0, local=True))
        assert val <= 3.0 * f.lp_norm(q)


# --- besov -------------------------------------------------------------------


def test_besov_constant_is_zero():
    grid = Grid(points_per_dim=32)
    f = SampledField(grid, np.full(grid.shape, 2.0))
    assert besov_seminorm(f, s=0.4, p=2.0) == 0.0


def test_besov_mode_doubling_scales_like_two_to_s():
    # k = 4 -> 8 keeps both discretization cutoffs (|y| >= h, |y| <= L/2)
    # out of the scaling window; smaller k is biased by the half-period cap
    grid = Grid(points_per_dim=64)
    s = 0.4
    x, _ = grid.coords
    f1 = SampledField(grid, np.sin(4 * x))
    f2 = SampledField(grid, np.sin(8 * x))
    fitted = np.log2(besov_seminorm(f2, s, 2.0) / besov_seminorm(f1, s, 2.0))
    assert abs(fitted - s) < 0.05


def test_besov_triangle_inequality_on_orthogonal_modes():
    grid = Grid(points_per_dim=32)
    x, y = grid.coords
    f = SampledField(grid, np.sin(x))
    g = SampledField(grid, np.sin(3 * y))
    both = SampledField(grid, f.values + g.values)
    s, p = 0.3, 2.0
    assert besov_seminorm(both, s, p) <= besov_seminorm(f, s, p) + besov_seminorm(g, s, p) + 1e-12


def test_besov_guard_rejects_nonsummable_exponents():
    grid = Grid(points_per_dim=16)
    f = SampledField(grid, np.zeros(grid.shape))
    with pytest.raises(ValueError):
        besov_seminorm(f, s=1.5, p=8.0)  # s*p = 12 >= p + n = 10


# --- holder ------------------------------------------------------------------


def brute_force_holder_seminorm(values, grid, gamma):
    pts = grid.point_stack
    flat = values.ravel()
    coords = pts.reshape(-1, grid.n)
    best = 0.0
    for i in range(len(flat)):
        d = grid.torus_distance(coords, coords[i])
        ok = (d > 0) & (d <= grid.side_length / 2 + 1e-12)
        if ok.any():
            best = max(best, (np.abs(flat[ok] - flat[i]) / d[ok] ** gamma).max())
    return best


def test_holder_constant(grid16):
    c = -3.0
    f = SampledField(grid16, np.full(grid16.shape, c))
    assert holder_norm(f, 0.5) == abs(c)


def test_holder_hat_function_peak_to_foot():
    grid = Grid(points_per_dim=32)
    h, L = grid.spacing, grid.side_length
    gamma = 0.6
    w = 8 * h  # width: tent rises over w/2 = 4 cells
    x, _ = grid.coords
    center = L / 2
    prof = np.maximum(0.0, 1.0 - np.abs(grid.wrapped_delta(x, center)) / (w / 2))
    f = SampledField(grid, prof)
    semi = holder_seminorm(f, gamma)
    assert semi == pytest.approx((w / 2) ** (-gamma), rel=1e-12)
    assert semi == pytest.approx(brute_force_holder_seminorm(f.values, grid, gamma), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(min_value=0.01, max_value=50.0), seed=st.integers(0, 2**16))
def test_holder_norm_absolutely_homogeneous(lam, seed):
    grid = Grid(points_per_dim=16)
    f = smooth_random_field(grid, np.random.default_rng(seed))
    a = holder_norm(SampledField(grid, lam * f), 0.4)
    b = lam * holder_norm(SampledField(grid, f), 0.4)
    assert a == pytest.approx(b, rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_norms_triangle_inequality(seed):
    grid = Grid(points_per_dim=16)
    rng = np.random.default_rng(seed)
    f = smooth_random_field(grid, rng)
    g = smooth_random_field(grid, rng)
    fg = SampledField(grid, f + g)
    ff, gg = SampledField(grid, f), SampledField(grid, g)
    assert holder_norm(fg, 0.3) <= holder_norm(ff, 0.3) + holder_norm(gg, 0.3) + 1e-10
    p = MorreyParams(q=2, a=1.0)
    assert morrey_norm(fg, p) <= morrey_norm(ff, p) + morrey_norm(gg, p) + 1e-10
    assert sobolev_norm(fg, 0.5, 2) <= sobolev_norm(ff, 0.5, 2) + sobolev_norm(gg, 0.5, 2) + 1e-10


# --- sobolev -----------------------------------------------------------------


def test_sobolev_constant_reduces_to_lp():
    grid = Grid(points_per_dim=16)
    c = 2.0
    f = SampledField(grid, np.full(grid.shape, c))
    for s in (0.5, 1.0):
        assert sobolev_norm(f, s, 3.0) == pytest.approx(f.lp_norm(3.0), rel=1e-12)


def test_sobolev_single_mode_prefactor():
    grid = Grid(points_per_dim=32)
    x, y = grid.coords
    kvec = (3.0, 2.0)
    A = 0.7
    f = SampledField(grid, A * np.cos(kvec[0] * x + kvec[1] * y))
    s, p = 0.8, 4.0
    kmag = np.hypot(*kvec)
    assert sobolev_norm(f, s, p) == pytest.approx(f.lp_norm(p) * (1 + kmag**s), rel=1e-10)


def test_sobolev_s_zero_doubles_lp():
    grid = Grid(points_per_dim=16)
    rng = np.random.default_rng(0)
    vals = smooth_random_field(grid, rng)
    vals -= vals.mean()  # |k|^0 multiplier keeps the mean out either way
    f = SampledField(grid, vals)
    assert sobolev_norm(f, 0.0, 2.0) == pytest.approx(2 * f.lp_norm(2.0), rel=1e-12)


# --- dyadic oscillation ------------------------------------------------------


def test_oscillation_constant_field_zero(grid16):
    f = SampledField(grid16, np.full(grid16.shape, 1.0))
    rep = dyadic_oscillation_check(f, MorreyParams(q=2, a=1.0), [0, 0], grid16.spacing, 2)
    assert rep.lhs == 0.0


def test_oscillation_lipschitz_field_big_a_regime():
    grid = Grid(points_per_dim=32)
    x, y = grid.coords
    L = grid.side_length
    f = SampledField(grid, np.sin(2 * np.pi * x / L) + 0.5 * np.cos(2 * np.pi * y / L))
    params = MorreyParams(q=2, a=3.0)  # n < a < n + q
    nv = morrey_norm(f, params)
    ratios = []
    for k in (1, 2, 3):
        rep = dyadic_oscillation_check(f, params, [L / 3, L / 4], grid.spacing, k, norm_value=nv)
        assert rep.regime == "n<a"
        ratios.append(rep.ratio)
    assert max(ratios) < 2.0


def test_oscillation_small_a_regime_bump():
    grid = Grid(points_per_dim=32)
    dist = grid.distance_from([grid.side_length / 2] * 2)
    f = SampledField(grid, np.exp(-(dist**2) / 0.5))
    params = MorreyParams(q=2, a=1.0)  # a < n
    nv = morrey_norm(f, params)
    h = grid.spacing
    ratios = []
    for rho in (h, 2 * h, 4 * h):
        rep = dyadic_oscillation_check(
            f, params, [grid.side_length / 2] * 2, rho, 2, norm_value=nv
        )
        assert rep.regime == "a<n"
        ratios.append(rep.ratio)
    assert max(ratios) < 2.0


def test_oscillation_radius_overflow(grid16):
    f = SampledField(grid16, np.zeros(grid16.shape))
    with pytest.raises(ValueError):
        dyadic_oscillation_check(f, MorreyParams(q=2, a=1.0), [0, 0], 2.0, 3)


# --- embedding coherence -----------------------------------------------------


def test_morrey_holder_embedding_ratio_bounded():
    # n < a < n+q matches the gamma = (a-n)/q seminorm family
    grid = Grid(points_per_dim=16)
    q, a = 2.0, 3.0
    gamma = (a - grid.n) / q
    ratios = []
    for seed in range(6):
        f = SampledField(grid, smooth_random_field(grid, np.random.default_rng(seed)))
        m = morrey_norm(f, MorreyParams(q=q, a=a))
        hs = holder_seminorm(f, gamma)
        if hs > 0:
            ratios.append(m / hs)
    spread = max(ratios) / min(ratios)
    assert spread < 10.0
