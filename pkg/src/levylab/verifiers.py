"""Pass/fail certificates for the structural properties of trajectories.

Every certificate is deterministic given its inputs and tolerance, carries
per-check samples (lhs, rhs, margin) with margins normalized by a documented
scale, and fails exactly when some margin drops below -tolerance.

Fitted constants follow a calibrate-then-freeze discipline: they are computed
once on a calibration corpus and certification against fresh data must pass
with the frozen values.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .grid import SampledField, lp_norm, require_same_grid, spectral_gradient
from .kernels import LevyKernel, LevySymbol, apply_operator, tabulate_symbol
from .solver import TrajectorySolution
from .spaces import besov_seminorm


class PreconditionError(ValueError):
    """Certificate inputs violate the stated precondition."""


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


@dataclass
class Certificate:
    name: str
    inputs_digest: str
    tolerance: float
    samples: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        return all(s["margin"] >= -self.tolerance for s in self.samples)

    @property
    def worst_margin(self) -> float:
        return min((s["margin"] for s in self.samples), default=float("inf"))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "inputs_digest": self.inputs_digest,
            "tolerance": self.tolerance,
            "verdict": "pass" if self.verdict else "fail",
            "worst_margin": self.worst_margin,
            "samples": self.samples,
            "details": self.details,
        }


def _sample(label, lhs, rhs, scale):
    scale = max(abs(scale), 1e-300)
    return {
        "label": label,
        "lhs": float(lhs),
        "rhs": float(rhs),
        "margin": float((rhs - lhs) / scale),
    }


# ---------------------------------------------------------------------------
# norm decay and pointwise bounds
# ---------------------------------------------------------------------------


def verify_max_principle(traj: TrajectorySolution, p_list=(1, 2, 4, np.inf),
                         tolerance: float = 1e-6) -> Certificate:
    """Per-step monotonicity of every requested L^p norm.

    Finite p norms are also compared against the initial value; the sup-norm
    comparison against t=0 is reported as a fitted constant, not asserted.
    """
    cert = Certificate("max-principle", _digest(traj.states), tolerance)
    for p in p_list:
        norms = [lp_norm(s, traj.grid, p) for s in traj.states]
        scale = max(norms[0], 1e-300)
        worst_step = None
        for k in range(len(norms) - 1):
            s = _sample(f"p={p} step {k}", norms[k + 1], norms[k], norms[k])
            if worst_step is None or s["margin"] < worst_step["margin"]:
                worst_step = s
        if worst_step is not None:
            cert.samples.append(worst_step)
        if np.isinf(p):
            cert.details["fitted_sup_constant"] = float(max(norms) / scale)
        elif len(norms) > 1:
            cert.samples.append(_sample(f"p={p} vs initial", max(norms[1:]), norms[0], scale))
        cert.details[f"norms_p={p}"] = norms
    return cert


def verify_positivity(traj: TrajectorySolution, M: float,
                      tolerance: float = 1e-6) -> Certificate:
    """0 <= theta <= M propagated pointwise, within tolerance * M."""
    theta0 = traj.states[0]
    if theta0.min() < 0 or theta0.max() > M:
        raise PreconditionError(
            f"initial data outside [0, {M}]: min={theta0.min():g} max={theta0.max():g}"
        )
    cert = Certificate("positivity", _digest(traj.states), tolerance)
    mins = [float(s.min()) for s in traj.states]
    maxs = [float(s.max()) for s in traj.states]
    k_lo = int(np.argmin(mins))
    k_hi = int(np.argmax(maxs))
    cert.samples.append(_sample(f"lower bound (worst step {k_lo})", -mins[k_lo], 0.0, M))
    cert.samples.append(_sample(f"upper bound (worst step {k_hi})", maxs[k_hi], M, M))
    cert.details["min_over_run"] = mins[k_lo]
    cert.details["max_over_run"] = maxs[k_hi]
    return cert


# ---------------------------------------------------------------------------
# quadratic-form inequalities
# ---------------------------------------------------------------------------


def verify_stroock_varopoulos(fld: SampledField, symbol: LevySymbol, p: float,
                              tolerance: float = 1e-10) -> Certificate:
    """Dissipativity pairing of the signed power against the p-form pairing.

    With u = |theta|^{p/2} sgn(theta) (sgn(0) = 0) the two sides coincide
    identically at p = 2; the certificate asserts nonnegativity of the
    right-hand pairing and reports the largest admissible constant.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    grid = require_same_grid(fld, symbol)
    if not np.any(fld.values):
        raise PreconditionError("field is identically zero")
    theta = fld.values
    dA = grid.cell_volume
    u = np.abs(theta) ** (p / 2.0) * np.sign(theta)
    Lu = apply_operator(SampledField(grid, u), symbol).values
    Ltheta = apply_operator(fld, symbol).values
    w = np.abs(theta) ** (p - 1.0) * np.sign(theta)
    lhs_pair = float((Lu * u).sum()) * dA
    rhs_pair = float((Ltheta * w).sum()) * dA
    scale = float((np.abs(Ltheta) * np.abs(w)).sum()) * dA
    cert = Certificate("stroock-varopoulos", _digest(theta, symbol.values), tolerance)
    cert.samples.append(_sample(f"rhs pairing nonnegative (p={p})", 0.0, rhs_pair, scale))
    if p == 2:
        cert.samples.append(
            _sample("p=2 identity", abs(rhs_pair - lhs_pair), 0.0, max(scale, abs(lhs_pair)))
        )
    cert.details["lhs_pairing"] = lhs_pair
    cert.details["rhs_pairing"] = rhs_pair
    cert.details["largest_admissible_constant"] = (
        rhs_pair / lhs_pair if lhs_pair > 0 else None
    )
    return cert


@dataclass
class BesovChainConstants:
    c_first: float   # difference-seminorm chain head vs middle term
    c_second: float  # middle term vs L2 + dissipation, from the symbol bound


def besov_chain_terms(fld: SampledField, kernel: LevyKernel, p: float) -> dict:
    """The three chain terms for a positive field."""
    if p < 2:
        raise ValueError("p must be >= 2")
    grid = fld.grid
    if fld.values.min() <= 0:
        raise PreconditionError("chain terms are evaluated on positive fields")
    symbol = tabulate_symbol(kernel, grid)
    g_half = fld.values ** (p / 2.0)
    head = besov_seminorm(fld, kernel.alpha / p, p) ** p
    middle = besov_seminorm(SampledField(grid, g_half), kernel.alpha / 2.0, 2.0) ** 2
    dA = grid.cell_volume
    l2sq = float((g_half**2).sum()) * dA
    dissip = float(
        (fld.values ** (p - 1.0) * apply_operator(fld, symbol).values).sum()
    ) * dA
    return {"head": head, "middle": middle, "tail": l2sq + dissip,
            "l2_squared": l2sq, "dissipation": dissip}


def calibrate_besov_chain(fields, kernel: LevyKernel, p: float,
                          safety: float = 1.2) -> BesovChainConstants:
    """Fit the two chain constants on a calibration corpus, then freeze."""
    c1 = c2 = 0.0
    for fld in fields:
        t = besov_chain_terms(fld, kernel, p)
        if t["middle"] > 0:
            c1 = max(c1, t["head"] / t["middle"])
        if t["tail"] > 0:
            c2 = max(c2, t["middle"] / t["tail"])
    return BesovChainConstants(c_first=c1 * safety, c_second=c2 * safety)


def verify_besov_regularity(fld: SampledField, kernel: LevyKernel, p: float,
                            constants: BesovChainConstants,
                            tolerance: float = 1e-9) -> Certificate:
    """Three-term regularity chain with frozen constants."""
    t = besov_chain_terms(fld, kernel, p)
    cert = Certificate("besov-chain", _digest(fld.values), tolerance)
    cert.samples.append(
        _sample("head <= C1 * middle", t["head"], constants.c_first * t["middle"], t["head"])
    )
    cert.samples.append(
        _sample("middle <= C2 * tail", t["middle"], constants.c_second * t["tail"], t["middle"])
    )
    cert.details.update(t)
    cert.details["constants"] = {"c_first": constants.c_first, "c_second": constants.c_second}
    return cert


def besov_cross_terms(fld: SampledField, symbol: LevySymbol, p: float = 2.0,
                      tolerance: float = 1e-8) -> Certificate:
    """Sign of the mixed pairings of the positive/negative parts.

    The split f = f+ - f- has disjoint supports, so both mixed pairings are
    nonpositive for a nonnegative jump density.
    """
    grid = require_same_grid(fld, symbol)
    fp = np.maximum(fld.values, 0.0)
    fm = np.maximum(-fld.values, 0.0)
    dA = grid.cell_volume
    Lfm = apply_operator(SampledField(grid, fm), symbol).values
    Lfp = apply_operator(SampledField(grid, fp), symbol).values
    t1 = float((fp ** (p - 1.0) * Lfm).sum()) * dA
    t2 = float((fm ** (p - 1.0) * Lfp).sum()) * dA
    scale = max(
        float((fp ** (p - 1.0) * np.abs(Lfm)).sum()) * dA,
        float((fm ** (p - 1.0) * np.abs(Lfp)).sum()) * dA,
    )
    cert = Certificate("besov-cross-terms", _digest(fld.values), tolerance)
    cert.samples.append(_sample("plus/minus pairing <= 0", t1, 0.0, scale))
    cert.samples.append(_sample("minus/plus pairing <= 0", t2, 0.0, scale))
    return cert


# ---------------------------------------------------------------------------
# symbol bounds
# ---------------------------------------------------------------------------


def fit_symbol_constants(symbol: LevySymbol, kernel: LevyKernel) -> tuple:
    """(C_upper, C_lower) making both symbol inequalities lattice-exact."""
    kmag = symbol.grid.k_magnitude
    mask = kmag > 0
    shape = kmag[mask] ** kernel.alpha + kmag[mask] ** kernel.delta
    c_upper = float((symbol.values[mask] / shape).max())
    c_lower = float(max(0.0, (kmag[mask] ** kernel.alpha - symbol.values[mask]).max()))
    return c_upper, c_lower


def verify_symbol_bounds(symbol: LevySymbol, kernel: LevyKernel,
                         constants: tuple | None = None,
                         tolerance: float = 1e-9) -> Certificate:
    """a(xi) <= C (|xi|^a + |xi|^d) and |xi|^a <= a(xi) + C on the full lattice."""
    if constants is None:
        constants = fit_symbol_constants(symbol, kernel)
    c_upper, c_lower = constants
    kmag = symbol.grid.k_magnitude
    mask = kmag > 0
    shape = kmag[mask] ** kernel.alpha + kmag[mask] ** kernel.delta
    vals = symbol.values[mask]
    upper_gap = c_upper * shape - vals
    lower_gap = vals + c_lower - kmag[mask] ** kernel.alpha
    scale = float(vals.max())
    cert = Certificate("symbol-bounds", _digest(symbol.values), tolerance)
    cert.samples.append(_sample("upper bound worst lattice point", float(-upper_gap.min()), 0.0, scale))
    cert.samples.append(_sample("lower bound worst lattice point", float(-lower_gap.min()), 0.0, scale))
    cert.details["c_upper"] = c_upper
    cert.details["c_lower"] = c_lower
    cert.details["zero_frequency_value"] = float(symbol.values[(0,) * symbol.grid.n])
    return cert


# ---------------------------------------------------------------------------
# duality transfer
# ---------------------------------------------------------------------------


def verify_transfer(forward: TrajectorySolution, backward: TrajectorySolution,
                    tolerance: float = 1e-5,
                    intermediate_fractions=(0.25, 0.5, 0.75)) -> Certificate:
    """Constancy of the duality pairing <theta(t-s), psi(s)> in s."""
    if forward.grid != backward.grid:
        raise PreconditionError("forward and backward trajectories on different grids")
    t_fw = float(forward.times[-1])
    t_bw = float(backward.times[-1])
    if abs(t_fw - t_bw) > 1e-9 * max(t_fw, 1.0):
        raise PreconditionError("forward and backward horizons differ")
    dA = forward.grid.cell_volume

    def pairing(s):
        # the discrete invariant lives on the aligned diagonal
        # t_forward + s_backward = horizon, so snap both indices to it
        i_bw = backward.nearest_index(s)
        s_actual = float(backward.times[i_bw])
        i_fw = forward.nearest_index(t_fw - s_actual)
        return (
            float((forward.states[i_fw] * backward.states[i_bw]).sum()) * dA,
            float(forward.times[i_fw]),
            s_actual,
        )

    base, *_ = pairing(0.0)
    values = [base]
    checks = [(1.0, pairing(t_fw))]
    for frac in intermediate_fractions:
        checks.append((frac, pairing(frac * t_fw)))
        values.append(checks[-1][1][0])
    scale = max(max(abs(v) for v in values), 1e-300)
    cert = Certificate("transfer-identity", _digest(forward.states, backward.states), tolerance)
    for frac, (val, tf, tb) in checks:
        label = "endpoints" if frac == 1.0 else f"intermediate s = {frac:g} t"
        cert.samples.append(_sample(label, abs(val - base), 0.0, scale))
        cert.details[f"pairing@s={frac:g}t"] = {"value": val, "t_forward": tf, "s_backward": tb}
    cert.details["pairing@s=0"] = base
    return cert


# ---------------------------------------------------------------------------
# energy balance
# ---------------------------------------------------------------------------


def dissipation_identity_report(traj: TrajectorySolution, kernel: LevyKernel | None,
                                epsilon_visc: float) -> dict:
    """L2 balance: the norm drop should equal the integrated dissipation.

    ||theta0||^2 - ||theta(T)||^2 vs 2 * int (<L theta, theta> + eps ||grad theta||^2),
    integrated by the trapezoid rule on the stored times.
    """
    grid = traj.grid
    dA = grid.cell_volume
    symbol = tabulate_symbol(kernel, grid) if kernel is not None else None
    rates = []
    for s in traj.states:
        d = 0.0
        if symbol is not None:
            d += float((apply_operator(SampledField(grid, s), symbol).values * s).sum()) * dA
        if epsilon_visc > 0:
            grads = spectral_gradient(s, grid)
            d += epsilon_visc * sum(float((g**2).sum()) * dA for g in grads)
        rates.append(2.0 * d)
    integral = float(np.trapezoid(rates, traj.times))
    drop = lp_norm(traj.states[0], grid, 2.0) ** 2 - lp_norm(traj.states[-1], grid, 2.0) ** 2
    scale = max(abs(drop), abs(integral), 1e-300)
    return {
        "norm_drop": drop,
        "integrated_dissipation": integral,
        "relative_mismatch": abs(drop - integral) / scale,
    }
