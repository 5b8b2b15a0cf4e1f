"""Integrator tests: semigroup algebra, contraction policy, fixed-point path,
IMEX cross-checks, vanishing viscosity and the backward dual flow."""

import numpy as np
import pytest

from levylab.drifts import MollifierPair, make_divfree, mollify
from levylab.grid import Grid, SampledField, lp_norm, smooth_random_field
from levylab.kernels import LevyKernel, symbol_eval, tabulate_symbol
from levylab.solver import (
    CFLViolation,
    SolverConfig,
    ViscousProblem,
    WindowError,
    backward_dual_solve,
    calibrate_contraction_prefactor,
    contraction_constant,
    contraction_window,
    heat_semigroup,
    imex_solve,
    imex_step,
    picard_solve,
    vanishing_viscosity,
)
from levylab.spaces import MorreyParams

MP = MorreyParams(q=4, a=2.5, local=True)


@pytest.fixture(scope="module")
def grid():
    return Grid(points_per_dim=64)


@pytest.fixture(scope="module")
def kernel():
    return LevyKernel(alpha=0.8, delta=0.6, profile="two-exponent")


@pytest.fixture(scope="module")
def drift(grid):
    v = make_divfree(
        {
            "kind": "stream-function",
            "target_norm": 1.0,
            "time_nodes": 5,
            "horizon": 0.3,
            "envelope": "rotating",
        },
        grid,
        MP,
        np.random.default_rng(3),
    )
    return mollify(v, MollifierPair(epsilon=0.25))


def random_theta0(grid, seed=7, offset=0.5, amp=0.4):
    return SampledField(grid, offset + amp * smooth_random_field(grid, np.random.default_rng(seed)))


# --- heat semigroup ----------------------------------------------------------


def test_heat_semigroup_identity_at_zero(grid):
    f = random_theta0(grid)
    out = heat_semigroup(f, 0.0)
    np.testing.assert_array_equal(out.values, f.values)


def test_heat_semigroup_mode_decay(grid):
    x, y = grid.coords
    kvec = (2.0, 3.0)
    f = SampledField(grid, np.sin(kvec[0] * x + kvec[1] * y))
    tau = 0.07
    out = heat_semigroup(f, tau)
    np.testing.assert_allclose(
        out.values, np.exp(-tau * (kvec[0] ** 2 + kvec[1] ** 2)) * f.values, atol=1e-12
    )


@pytest.mark.parametrize("p", [1.0, 2.0, np.inf])
def test_heat_semigroup_is_lp_contraction(grid, p):
    f = random_theta0(grid, seed=9)
    out = heat_semigroup(f, 0.05)
    assert out.lp_norm(p) <= f.lp_norm(p) * (1 + 1e-10)


# --- contraction bookkeeping --------------------------------------------------


def test_contraction_collapses_without_drift(grid):
    # delta close to alpha folds the two jump terms together; no drift term
    alpha, eps, tp = 0.8, 1.0, 0.01
    k = LevyKernel(alpha=alpha, delta=alpha - 1e-9, profile="two-exponent")
    f = random_theta0(grid)
    prob = ViscousProblem(kernel=k, v=None, epsilon_visc=eps, theta0=f, horizon=0.5)
    c0 = contraction_constant(prob, tp, prefactor=1.0)
    expected = 2.0 * tp ** (1 - alpha / 2) / eps ** (alpha / 2)
    assert c0 == pytest.approx(expected, rel=1e-6)


def test_contraction_vanishes_with_window(grid, kernel):
    prob = ViscousProblem(kernel=kernel, v=None, epsilon_visc=0.5,
                          theta0=random_theta0(grid), horizon=0.5)
    values = [contraction_constant(prob, tp, prefactor=1.0) for tp in (1e-2, 1e-4, 1e-6)]
    assert values[0] > values[1] > values[2]
    assert values[2] < 1e-3


def test_contraction_window_brackets_half(grid, kernel, drift):
    prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1.0,
                          theta0=random_theta0(grid), horizon=10.0)
    pref = calibrate_contraction_prefactor(prob)
    tp = contraction_window(prob, 1e-4, pref)
    assert contraction_constant(prob, tp, pref) <= 0.5
    assert contraction_constant(prob, 2 * tp, pref) > 0.5


def test_contraction_window_error_when_too_stiff(grid, drift):
    k = LevyKernel(alpha=1.5, delta=1.2, profile="two-exponent")
    prob = ViscousProblem(kernel=k, v=drift, epsilon_visc=1e-3,
                          theta0=random_theta0(grid), horizon=0.5)
    with pytest.raises(WindowError):
        contraction_window(prob, 1e-3, prefactor=3.0)


# --- fixed-point path ---------------------------------------------------------


def test_picard_zero_data_stays_zero(kernel):
    g = Grid(points_per_dim=16)
    prob = ViscousProblem(kernel=kernel, v=None, epsilon_visc=1.0,
                          theta0=SampledField(g, np.zeros(g.shape)), horizon=0.05)
    traj = picard_solve(prob, SolverConfig(dt=1e-3))
    assert max(np.abs(s).max() for s in traj.states) == 0.0


def test_picard_single_mode_matches_closed_form(kernel):
    # v = 0: theta(t) = exp(-t (a(k) + eps |k|^2)) theta0
    g = Grid(points_per_dim=16)
    kvec = np.array([1.0, 0.0])
    x, _ = g.coords
    theta0 = SampledField(g, np.cos(x))
    eps, T = 1.0, 0.25
    lam = symbol_eval(kernel, kvec) + eps
    prob = ViscousProblem(kernel=kernel, v=None, epsilon_visc=eps, theta0=theta0, horizon=T)
    pref = calibrate_contraction_prefactor(prob)
    traj = picard_solve(prob, SolverConfig(dt=1e-4, picard_tol=1e-13), prefactor=pref)
    exact = np.exp(-T * lam) * theta0.values
    rel = np.abs(traj.final().values - exact).max() / np.abs(exact).max()
    assert rel < 1e-6


def test_picard_residual_ratios_below_half(grid, kernel, drift):
    prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1.0,
                          theta0=random_theta0(grid), horizon=0.05)
    traj = picard_solve(prob, SolverConfig(dt=5e-4, picard_tol=1e-11))
    for window_ratios in traj.diagnostics["residual_ratios"]:
        assert all(r <= 0.55 for r in window_ratios)


def test_picard_requires_positive_viscosity(grid, kernel):
    prob = ViscousProblem(kernel=kernel, v=None, epsilon_visc=0.0,
                          theta0=random_theta0(grid), horizon=0.1)
    with pytest.raises(ValueError):
        picard_solve(prob, SolverConfig())


# --- IMEX path ----------------------------------------------------------------


def test_imex_step_exact_multiplier_without_drift(grid, kernel):
    f = random_theta0(grid, seed=21)
    eps, dt = 0.1, 1e-3
    prob = ViscousProblem(kernel=kernel, v=None, epsilon_visc=eps, theta0=f, horizon=0.1)
    out = imex_step(f, 0.0, dt, prob)
    sym = tabulate_symbol(kernel, grid)
    expected = np.fft.ifftn(
        np.exp(-dt * (sym.values + eps * grid.k_squared)) * np.fft.fftn(f.values)
    ).real
    np.testing.assert_allclose(out.values, expected, atol=1e-13)


def test_imex_first_order_convergence(grid, kernel, drift):
    theta0 = random_theta0(grid, seed=13)
    T = 0.05
    finals = []
    for dt in (2e-3, 1e-3, 5e-4):
        prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1e-2,
                              theta0=theta0, horizon=T)
        finals.append(imex_solve(prob, SolverConfig(dt=dt)).final().values)
    d1 = lp_norm(finals[0] - finals[1], grid, 2.0)
    d2 = lp_norm(finals[1] - finals[2], grid, 2.0)
    order = np.log2(d1 / d2)
    assert order >= 0.9


def test_imex_agrees_with_picard(grid, kernel, drift):
    theta0 = random_theta0(grid, seed=17)
    prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1.0, theta0=theta0,
                          horizon=0.1)
    a = picard_solve(prob, SolverConfig(dt=5e-4, picard_tol=1e-11)).final()
    b = imex_solve(prob, SolverConfig(dt=2.5e-4)).final()
    assert lp_norm(a.values - b.values, grid, 2.0) <= 5e-3


def test_imex_cfl_guard(grid, kernel):
    v = make_divfree({"kind": "shear", "amplitude": 50.0}, grid, MP, np.random.default_rng(2))
    prob = ViscousProblem(kernel=kernel, v=v, epsilon_visc=1e-2,
                          theta0=random_theta0(grid), horizon=0.1)
    with pytest.raises(CFLViolation):
        imex_solve(prob, SolverConfig(dt=0.05))


def test_mass_conservation_both_schemes(grid, kernel, drift):
    theta0 = random_theta0(grid, seed=23)
    mass0 = theta0.integral()
    prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1.0, theta0=theta0,
                          horizon=0.08)
    for traj in (
        imex_solve(prob, SolverConfig(dt=1e-3)),
        picard_solve(prob, SolverConfig(dt=1e-3, picard_tol=1e-11)),
    ):
        assert traj.final().integral() == pytest.approx(mass0, rel=1e-10)


def test_norms_nonincreasing_along_trajectories(grid, kernel, drift):
    theta0 = random_theta0(grid, seed=29)
    prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1e-2, theta0=theta0,
                          horizon=0.1)
    traj = imex_solve(prob, SolverConfig(dt=1e-3))
    for p in (1, 2, 4, np.inf):
        ns = traj.diagnostics["norms"][str(p)]
        assert all(b <= a * (1 + 1e-6) for a, b in zip(ns[:-1], ns[1:]))


def test_continuous_dependence_factor_two(grid, kernel, drift):
    # one contraction window: difference of solutions <= 2 x initial gap
    theta0 = random_theta0(grid, seed=31)
    phi0 = random_theta0(grid, seed=32)
    prob_t = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1.0, theta0=theta0,
                            horizon=0.02)
    pref = calibrate_contraction_prefactor(prob_t)
    window = min(contraction_window(prob_t, 5e-4, pref), 0.02)
    prob_t = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1.0, theta0=theta0,
                            horizon=window)
    prob_p = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1.0, theta0=phi0,
                            horizon=window)
    cfg = SolverConfig(dt=5e-4, picard_tol=1e-11)
    tr_t = picard_solve(prob_t, cfg, prefactor=pref)
    tr_p = picard_solve(prob_p, cfg, prefactor=pref)
    gap0 = lp_norm(theta0.values - phi0.values, grid, 2.0)
    worst = max(
        lp_norm(a - b, grid, 2.0) for a, b in zip(tr_t.states, tr_p.states)
    )
    assert worst <= 2.0 * gap0


# --- vanishing viscosity --------------------------------------------------------


def test_vanishing_viscosity_cauchy_trend(grid, kernel, drift):
    theta0 = random_theta0(grid, seed=37)
    out = vanishing_viscosity(kernel, drift, theta0, 0.1, [4e-2, 2e-2, 1e-2, 5e-3],
                              SolverConfig(dt=1e-3))
    assert out["cauchy_decreasing"]
    assert out["limit_label"].startswith("empirical")


def test_vanishing_viscosity_pure_heat_linear_scaling(grid):
    # no jump part, no drift: theta_eps(T) = e^{eps T Lap} theta0,
    # so consecutive dyadic distances halve (linear in eps on smooth data)
    theta0 = random_theta0(grid, seed=41)
    out = vanishing_viscosity(None, None, theta0, 0.1, [8e-2, 4e-2, 2e-2, 1e-2],
                              SolverConfig(dt=2e-3))
    d = out["pairwise_l2"]
    for a, b in zip(d[:-1], d[1:]):
        assert b / a == pytest.approx(0.5, abs=0.06)


def test_vanishing_viscosity_zero_data(grid, kernel):
    theta0 = SampledField(grid, np.zeros(grid.shape))
    out = vanishing_viscosity(kernel, None, theta0, 0.05, [4e-2, 2e-2, 1e-2])
    assert all(d == 0.0 for d in out["pairwise_l2"])


# --- backward dual flow ----------------------------------------------------------


def test_backward_without_drift_is_multiplier_flow(grid, kernel):
    psi0 = SampledField(grid, smooth_random_field(grid, np.random.default_rng(43)))
    T = 0.1
    traj = backward_dual_solve(None, kernel, psi0, T, dt=1e-3)
    sym = tabulate_symbol(kernel, grid)
    expected = np.fft.ifftn(np.exp(-T * sym.values) * np.fft.fftn(psi0.values)).real
    np.testing.assert_allclose(traj.final().values, expected, atol=1e-12)


def test_transfer_pairing_forward_backward(grid, kernel, drift):
    theta0 = random_theta0(grid, seed=47)
    psi0 = SampledField(grid, smooth_random_field(grid, np.random.default_rng(48)))
    T, dt = 0.2, 1e-3
    fw = imex_solve(
        ViscousProblem(kernel=kernel, v=drift, epsilon_visc=0.0, theta0=theta0, horizon=T),
        SolverConfig(dt=dt),
    )
    bw = backward_dual_solve(drift, kernel, psi0, T, dt=dt)
    dA = grid.cell_volume
    p1 = float((fw.final().values * psi0.values).sum()) * dA
    p2 = float((theta0.values * bw.final().values).sum()) * dA
    assert abs(p1 - p2) / max(abs(p1), abs(p2)) < 1e-5


def test_backward_zero_mean_preserved(grid, kernel, drift):
    rng = np.random.default_rng(53)
    vals = smooth_random_field(grid, rng)
    vals -= vals.mean()
    psi0 = SampledField(grid, vals)
    traj = backward_dual_solve(drift, kernel, psi0, 0.1, dt=1e-3)
    assert abs(traj.final().mean()) < 1e-10
