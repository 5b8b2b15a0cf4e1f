"""Mean-oscillation, Besov, Sobolev and Holder norms on the periodic grid.

Suprema over centers and radii are discretized as: centers = every grid
point, radii = the dyadic ladder {h, 2h, ..., L/2}.  That makes each value a
deterministic lower bound of the continuum supremum; the tests pin the
discretization against exhaustive brute-force oracles.

Balls use the wrapped Euclidean metric with inclusive membership.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid, SampledField, ball_offsets, fractional_laplacian, lp_norm


@dataclass(frozen=True)
class MorreyParams:
    """Mean-oscillation space parameters: integrability q, scaling a."""

    q: float
    a: float
    local: bool = False

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if self.a < 0:
            raise ValueError("a must be >= 0")

    def validate_for(self, n: int):
        if self.a >= n + self.q:
            raise ValueError("a >= n + q: the space reduces to constants")


@dataclass(frozen=True)
class NormProfile:
    """Smoothness/integrability pair for the scalar norms."""

    exponent: float
    p: float = 2.0

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("p must be >= 1")


def dyadic_radius_ladder(grid: Grid) -> np.ndarray:
    """h * {1, 2, 4, ...} up to the half period."""
    h, L = grid.spacing, grid.side_length
    radii = []
    r = h
    while r <= L / 2.0 + 1e-12:
        radii.append(r)
        r *= 2.0
    return np.array(radii)


def _rolled(values: np.ndarray, off) -> np.ndarray:
    return np.roll(values, shift=tuple(-o for o in off), axis=tuple(range(values.ndim)))


def _ball_scan(values: np.ndarray, grid: Grid, radius: float, q: float, a: float):
    """(oscillation_sup, plain_sup) of the windowed integrals at one radius.

    oscillation: sup_x0 (r^-a * sum_{|y|<=r} |f(x0+y) - mean|^q dA)^{1/q}
    plain:       sup_x0 (r^-a * sum_{|y|<=r} |f(x0+y)|^q dA)^{1/q}
    """
    offs = ball_offsets(grid, radius)
    m = len(offs)
    mean = np.zeros_like(values)
    for off in offs:
        mean += _rolled(values, off)
    mean /= m
    osc = np.zeros_like(values)
    plain = np.zeros_like(values)
    for off in offs:
        shifted = _rolled(values, off)
        osc += np.abs(shifted - mean) ** q
        plain += np.abs(shifted) ** q
    dA = grid.cell_volume
    scale = radius ** (-a)
    osc_sup = float((scale * osc.max() * dA) ** (1.0 / q))
    plain_sup = float((scale * plain.max() * dA) ** (1.0 / q))
    return osc_sup, plain_sup


def morrey_norm(field: SampledField, params: MorreyParams) -> float:
    """Homogeneous or local mean-oscillation norm over the dyadic ladder.

    The local variant takes the oscillation branch over radii < 1 and the
    plain-integral branch over radii >= 1; the homogeneous one takes the
    oscillation branch over the whole ladder.
    """
    grid = field.grid
    params.validate_for(grid.n)
    best_osc_small, best_osc_all, best_plain = 0.0, 0.0, 0.0
    for r in dyadic_radius_ladder(grid):
        osc, plain = _ball_scan(field.values, grid, r, params.q, params.a)
        best_osc_all = max(best_osc_all, osc)
        if r < 1.0:
            best_osc_small = max(best_osc_small, osc)
        else:
            best_plain = max(best_plain, plain)
    if params.local:
        return best_osc_small + best_plain
    return best_osc_all


def besov_seminorm(field: SampledField, s: float, p: float) -> float:
    """Double-sum difference seminorm of smoothness s and integrability p.

    Offsets are restricted to 0 < |y| <= L/2; the |y| < h exclusion keeps the
    discretized singular weight summable.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if p < 1:
        raise ValueError("p must be >= 1")
    grid = field.grid
    if s * p >= p + grid.n:
        raise ValueError("need s*p < p + n for a summable discretization")
    L = grid.side_length
    offs = ball_offsets(grid, L / 2.0)
    dist = np.sqrt(((offs * grid.spacing) ** 2).sum(axis=1))
    keep = dist >= grid.spacing * (1 - 1e-12)
    total = 0.0
    dA = grid.cell_volume
    vals = field.values
    for off, d in zip(offs[keep], dist[keep]):
        diff = vals - _rolled(vals, off)
        total += float((np.abs(diff) ** p).sum()) * dA * dA / d ** (grid.n + s * p)
    return total ** (1.0 / p)


def holder_seminorm(field: SampledField, gamma: float) -> float:
    """Exact pair maximization of |f(x)-f(y)| / d(x,y)^gamma within d <= L/2."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    grid = field.grid
    offs = ball_offsets(grid, grid.side_length / 2.0)
    dist = np.sqrt(((offs * grid.spacing) ** 2).sum(axis=1))
    keep = dist >= grid.spacing * (1 - 1e-12)
    vals = field.values
    best = 0.0
    for off, d in zip(offs[keep], dist[keep]):
        gap = float(np.abs(vals - _rolled(vals, off)).max())
        best = max(best, gap / d**gamma)
    return best


def holder_norm(field: SampledField, gamma: float) -> float:
    return float(np.abs(field.values).max()) + holder_seminorm(field, gamma)


def sobolev_norm(field: SampledField, s: float, p: float) -> float:
    """L^p norm plus the L^p norm of the spectral fractional Laplacian."""
    if p < 1:
        raise ValueError("p must be >= 1")
    base = field.lp_norm(p)
    rough = lp_norm(fractional_laplacian(field.values, field.grid, s), field.grid, p)
    return base + rough


@dataclass
class OscillationReport:
    rho: float
    k: int
    regime: str
    lhs: float
    rhs_shape: float
    ratio: float

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "k": self.k,
            "regime": self.regime,
            "lhs": self.lhs,
            "rhs_shape": self.rhs_shape,
            "ratio": self.ratio,
        }


def _ball_mean(field: SampledField, center, radius: float) -> float:
    dist = field.grid.distance_from(center)
    mask = dist <= radius + 1e-12
    return float(field.values[mask].mean())


def dyadic_oscillation_check(
    field: SampledField,
    params: MorreyParams,
    center,
    rho: float,
    k: int,
    norm_value: float | None = None,
) -> OscillationReport:
    """Gap of ball means across a dyadic jump against its scaling shape.

    The applicable shape is rho^{(a-n)/q} for a < n and (2^k rho)^{(a-n)/q}
    for n < a < n + q, times the mean-oscillation norm of the field.
    """
    grid = field.grid
    params.validate_for(grid.n)
    if k < 1:
        raise ValueError("k must be >= 1")
    big = (2.0**k) * rho
    if big > grid.side_length / 2.0 + 1e-12:
        raise ValueError("radius overflow: 2^k rho exceeds the half period")
    if norm_value is None:
        norm_value = morrey_norm(field, params)
    lhs = abs(_ball_mean(field, center, big) - _ball_mean(field, center, rho))
    n = grid.n
    expo = (params.a - n) / params.q
    if params.a < n:
        regime = "a<n"
        rhs = rho**expo * norm_value
    elif params.a > n:
        regime = "n<a"
        rhs = big**expo * norm_value
    else:
        regime = "a=n"
        rhs = norm_value * (1 + k)  # bmo-type logarithmic jump
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else float("inf"))
    return OscillationReport(rho=rho, k=k, regime=regime, lhs=lhs, rhs_shape=rhs, ratio=ratio)
