"""Certificate tests for the trajectory- and field-level principles."""

import numpy as np
import pytest

from levylab.drifts import MollifierPair, make_divfree, mollify
from levylab.grid import Grid, SampledField, smooth_random_field
from levylab.kernels import LevyKernel, symbol_eval, tabulate_symbol
from levylab.solver import (
    SolverConfig,
    TrajectorySolution,
    ViscousProblem,
    backward_dual_solve,
    imex_solve,
)
from levylab.spaces import MorreyParams
from levylab.verifiers import (
    PreconditionError,
    besov_cross_terms,
    calibrate_besov_chain,
    dissipation_identity_report,
    fit_symbol_constants,
    verify_besov_regularity,
    verify_max_principle,
    verify_positivity,
    verify_stroock_varopoulos,
    verify_symbol_bounds,
    verify_transfer,
)

MP = MorreyParams(q=4, a=2.5, local=True)


@pytest.fixture(scope="module")
def grid():
    return Grid(points_per_dim=64)


@pytest.fixture(scope="module")
def kernel():
    return LevyKernel(alpha=0.8, delta=0.6, profile="two-exponent")


@pytest.fixture(scope="module")
def symbol(grid, kernel):
    return tabulate_symbol(kernel, grid)


@pytest.fixture(scope="module")
def drift(grid):
    v = make_divfree(
        {"kind": "stream-function", "target_norm": 1.0, "amplitude": 1.0},
        grid,
        MP,
        np.random.default_rng(1),
    )
    return mollify(v, MollifierPair(epsilon=0.2))


# --- max principle ------------------------------------------------------------


def test_max_principle_pure_decay_mode(grid, kernel):
    # closed-form single-mode decay: L2 norm strictly decreasing
    x, _ = grid.coords
    theta0 = SampledField(grid, np.cos(x))
    lam = symbol_eval(kernel, [1.0, 0.0])
    times = np.linspace(0.0, 0.5, 21)
    states = np.stack([np.exp(-lam * t) * theta0.values for t in times])
    traj = TrajectorySolution(grid, times, states)
    cert = verify_max_principle(traj, p_list=(2,))
    assert cert.verdict
    assert cert.worst_margin > 0


def test_max_principle_trivial_on_zero_data(grid):
    times = np.linspace(0.0, 0.1, 5)
    states = np.zeros((5,) + grid.shape)
    cert = verify_max_principle(TrajectorySolution(grid, times, states))
    assert cert.verdict


def test_max_principle_detects_violation(grid):
    times = np.array([0.0, 1.0])
    states = np.stack([np.ones(grid.shape), 1.01 * np.ones(grid.shape)])
    cert = verify_max_principle(TrajectorySolution(grid, times, states), p_list=(2,))
    assert not cert.verdict


def test_max_principle_seeded_suite(grid, kernel, drift):
    for seed in range(4):
        theta0 = SampledField(
            grid, 0.5 + 0.4 * smooth_random_field(grid, np.random.default_rng(seed))
        )
        prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1e-2,
                              theta0=theta0, horizon=0.1)
        traj = imex_solve(prob, SolverConfig(dt=1e-3))
        cert = verify_max_principle(traj)
        assert cert.verdict, f"seed {seed}: margin {cert.worst_margin}"
        assert cert.details["fitted_sup_constant"] >= 1.0 - 1e-12


# --- positivity ----------------------------------------------------------------


def test_positivity_constant_steady_state(grid, kernel, drift):
    M = 2.0
    theta0 = SampledField(grid, np.full(grid.shape, M))
    prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=1e-2, theta0=theta0,
                          horizon=0.05)
    traj = imex_solve(prob, SolverConfig(dt=1e-3))
    np.testing.assert_allclose(traj.final().values, M, atol=1e-10)
    assert verify_positivity(traj, M).verdict


def test_positivity_bump_under_shear(grid, kernel):
    v = make_divfree({"kind": "shear", "amplitude": 3.0}, grid, MP, np.random.default_rng(5))
    v = mollify(v, MollifierPair(epsilon=0.2))
    rng = np.random.default_rng(11)
    raw = smooth_random_field(grid, rng, corr_scale=0.6)
    theta0 = SampledField(grid, (raw - raw.min()) / (raw.max() - raw.min()))
    prob = ViscousProblem(kernel=kernel, v=v, epsilon_visc=1e-3, theta0=theta0, horizon=0.15)
    traj = imex_solve(prob, SolverConfig(dt=2e-3))
    cert = verify_positivity(traj, M=1.0)
    assert cert.verdict
    assert cert.details["min_over_run"] >= -1e-6
    assert cert.details["max_over_run"] <= 1.0 + 1e-6


def test_positivity_rejects_negative_pixel(grid):
    vals = np.ones(grid.shape)
    vals[3, 4] = -0.01
    traj = TrajectorySolution(grid, [0.0, 1.0], np.stack([vals, vals]))
    with pytest.raises(PreconditionError):
        verify_positivity(traj, M=1.0)


# --- Stroock-Varopoulos ---------------------------------------------------------


def test_sv_identity_at_p_two(grid, symbol):
    f = SampledField(grid, smooth_random_field(grid, np.random.default_rng(2)))
    cert = verify_stroock_varopoulos(f, symbol, p=2)
    assert cert.verdict
    assert cert.details["lhs_pairing"] == pytest.approx(cert.details["rhs_pairing"], rel=1e-12)


def test_sv_nonnegative_fields_constant_in_unit_interval(grid, symbol):
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        f = SampledField(grid, 1.0 + 0.8 * smooth_random_field(grid, rng))
        cert = verify_stroock_varopoulos(f, symbol, p=4)
        assert cert.verdict
        c = cert.details["largest_admissible_constant"]
        assert 0.0 < c <= 1.0 + 1e-10


def test_sv_signed_fields_rhs_nonnegative(grid, symbol):
    for seed in range(20):
        f = SampledField(grid, smooth_random_field(grid, np.random.default_rng(200 + seed)))
        cert = verify_stroock_varopoulos(f, symbol, p=4)
        assert cert.verdict  # rhs >= -1e-10 * scale


def test_sv_rejects_zero_field(grid, symbol):
    with pytest.raises(PreconditionError):
        verify_stroock_varopoulos(SampledField(grid, np.zeros(grid.shape)), symbol, p=2)


# --- Besov chain ----------------------------------------------------------------


def _positive_corpus(grid, seeds):
    out = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        out.append(SampledField(grid, 1.2 + smooth_random_field(grid, rng)))
    return out


def test_besov_chain_constant_field_degenerates(grid, kernel):
    from levylab.verifiers import besov_chain_terms

    f = SampledField(grid, np.full(grid.shape, 2.0))
    t = besov_chain_terms(f, kernel, p=2)
    assert t["head"] == pytest.approx(0.0, abs=1e-12)
    assert t["middle"] == pytest.approx(0.0, abs=1e-12)
    assert t["tail"] == pytest.approx(t["l2_squared"], rel=1e-12)


def test_besov_chain_frozen_constants_transfer(grid, kernel):
    calib = _positive_corpus(grid, range(10))
    consts = calibrate_besov_chain(calib, kernel, p=2)
    fresh = _positive_corpus(grid, range(100, 110))
    for f in fresh:
        cert = verify_besov_regularity(f, kernel, 2, consts)
        assert cert.verdict


def test_besov_cross_terms_nonpositive(grid, symbol):
    # sign-changing field: the split parts have disjoint supports
    f = SampledField(grid, smooth_random_field(grid, np.random.default_rng(3)))
    cert = besov_cross_terms(f, symbol, p=2)
    assert cert.verdict


# --- symbol bounds ----------------------------------------------------------------


def test_symbol_bounds_certify_fitted_constants(grid):
    kernels = [
        LevyKernel(alpha=0.8, delta=0.6, profile="two-exponent"),
        LevyKernel(alpha=0.5, delta=0.35, profile="stable"),
        LevyKernel(alpha=1.5, delta=1.2, profile="truncated-stable"),
    ]
    for k in kernels:
        sym = tabulate_symbol(k, grid)
        cert = verify_symbol_bounds(sym, k)
        assert cert.verdict
        assert cert.details["zero_frequency_value"] == 0.0


def test_symbol_bounds_homogeneous_kernel_tight_lower_constant(grid):
    # a small amplitude puts the homogeneity constant below 1, so the lower
    # constant is pinned at the largest lattice frequency with zero margin
    k = LevyKernel(alpha=0.5, delta=0.35, profile="stable", amplitude=0.05)
    sym = tabulate_symbol(k, grid)
    c_upper, c_lower = fit_symbol_constants(sym, k)
    kmag = sym.grid.k_magnitude
    mask = kmag > 0
    gap = kmag[mask] ** k.alpha - sym.values[mask]
    argmax = np.argmax(gap)
    assert kmag[mask][argmax] == pytest.approx(kmag.max(), rel=1e-12)
    cert = verify_symbol_bounds(sym, k, constants=(c_upper, c_lower))
    assert cert.verdict


def test_symbol_bounds_fail_with_foreign_constants(grid):
    # frozen constants from a weaker kernel must not certify a stronger one
    weak = LevyKernel(alpha=0.8, delta=0.6, profile="truncated-stable")
    strong = LevyKernel(alpha=0.8, delta=0.6, profile="two-exponent", amplitude=3.0)
    consts = fit_symbol_constants(tabulate_symbol(weak, grid), weak)
    cert = verify_symbol_bounds(tabulate_symbol(strong, grid), strong, constants=consts)
    assert not cert.verdict


# --- transfer ---------------------------------------------------------------------


def test_transfer_multiplier_flows(grid, kernel):
    # v = 0: both flows are commuting multipliers; near-exact constancy
    rng = np.random.default_rng(7)
    theta0 = SampledField(grid, 0.5 + 0.4 * smooth_random_field(grid, rng))
    psi0 = SampledField(grid, smooth_random_field(grid, rng))
    T, dt = 0.2, 1e-3
    fw = imex_solve(
        ViscousProblem(kernel=kernel, v=None, epsilon_visc=0.0, theta0=theta0, horizon=T),
        SolverConfig(dt=dt),
    )
    bw = backward_dual_solve(None, kernel, psi0, T, dt=dt)
    cert = verify_transfer(fw, bw, tolerance=1e-8)
    assert cert.verdict


def test_transfer_generic_scenario_with_intermediates(grid, kernel, drift):
    rng = np.random.default_rng(9)
    theta0 = SampledField(grid, 0.5 + 0.4 * smooth_random_field(grid, rng))
    psi0 = SampledField(grid, smooth_random_field(grid, rng))
    T, dt = 0.2, 1e-3
    fw = imex_solve(
        ViscousProblem(kernel=kernel, v=drift, epsilon_visc=0.0, theta0=theta0, horizon=T),
        SolverConfig(dt=dt),
    )
    bw = backward_dual_solve(drift, kernel, psi0, T, dt=dt)
    cert = verify_transfer(fw, bw, tolerance=1e-5)
    assert cert.verdict
    labels = [s["label"] for s in cert.samples]
    assert any("intermediate" in lab for lab in labels)


def test_transfer_rejects_mismatched_grids(grid, kernel):
    other = Grid(points_per_dim=32)
    t1 = TrajectorySolution(grid, [0.0, 1.0], np.zeros((2,) + grid.shape))
    t2 = TrajectorySolution(other, [0.0, 1.0], np.zeros((2,) + other.shape))
    with pytest.raises(PreconditionError):
        verify_transfer(t1, t2)


# --- dissipation balance -----------------------------------------------------------


def test_dissipation_identity_balances(grid, kernel, drift):
    rng = np.random.default_rng(15)
    theta0 = SampledField(grid, 0.5 + 0.4 * smooth_random_field(grid, rng))
    eps = 1e-2
    prob = ViscousProblem(kernel=kernel, v=drift, epsilon_visc=eps, theta0=theta0,
                          horizon=0.1)
    traj = imex_solve(prob, SolverConfig(dt=5e-4))
    rep = dissipation_identity_report(traj, kernel, eps)
    assert rep["relative_mismatch"] < 1e-4
