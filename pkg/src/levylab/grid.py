"""Periodic grid, sampled fields and the shared spectral helpers.

Everything lives on the flat torus [0, L)^n sampled on a uniform lattice of
``points_per_dim`` points per axis.  Fourier multipliers are exact on this
lattice, which is what makes the operator algebra in the rest of the package
cheap and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class GridMismatchError(ValueError):
    """Two objects that must share a grid do not."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on the torus [0, L)^n.

    ``points_per_dim`` must be a power of two (>= 8) so dyadic radius ladders
    and dealiasing masks stay exact.
    """

    n: int = 2
    points_per_dim: int = 64
    side_length: float = 2.0 * np.pi

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        N = self.points_per_dim
        if N < 8 or (N & (N - 1)) != 0:
            raise ValueError("points_per_dim must be a power of two >= 8")
        if not self.side_length > 0:
            raise ValueError("side_length must be positive")

    @property
    def shape(self) -> tuple:
        return (self.points_per_dim,) * self.n

    @property
    def spacing(self) -> float:
        return self.side_length / self.points_per_dim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.n

    @cached_property
    def coords(self) -> list:
        """Coordinate arrays, broadcast to the full grid shape."""
        x = np.arange(self.points_per_dim) * self.spacing
        axes = np.meshgrid(*([x] * self.n), indexing="ij")
        return [a.copy() for a in axes]

    @cached_property
    def wavenumbers(self) -> list:
        """Angular wavenumber arrays k_i (fft layout), full grid shape."""
        N, L = self.points_per_dim, self.side_length
        k1 = 2.0 * np.pi * np.fft.fftfreq(N) * N / L
        axes = np.meshgrid(*([k1] * self.n), indexing="ij")
        return [a.copy() for a in axes]

    @cached_property
    def k_squared(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers)

    @cached_property
    def k_magnitude(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        # 2/3 rule: drop modes with any index magnitude >= N/3
        N = self.points_per_dim
        idx = np.abs(np.fft.fftfreq(N) * N)
        axes = np.meshgrid(*([idx] * self.n), indexing="ij")
        keep = np.ones(self.shape, dtype=bool)
        for a in axes:
            keep &= a < N / 3.0
        return keep

    def wrapped_delta(self, a: np.ndarray, b) -> np.ndarray:
        """Signed minimal-image differences a - b along one axis."""
        L = self.side_length
        d = np.asarray(a) - np.asarray(b)
        return (d + L / 2.0) % L - L / 2.0

    def torus_distance(self, points: np.ndarray, center) -> np.ndarray:
        """Wrapped Euclidean distance from ``center``.

        ``points`` has shape (..., n); ``center`` is a length-n sequence.
        """
        pts = np.asarray(points, dtype=float)
        c = np.asarray(center, dtype=float)
        d2 = np.zeros(pts.shape[:-1])
        for i in range(self.n):
            d2 = d2 + self.wrapped_delta(pts[..., i], c[i]) ** 2
        return np.sqrt(d2)

    @cached_property
    def point_stack(self) -> np.ndarray:
        """All grid points as an (..., n) array."""
        return np.stack(self.coords, axis=-1)

    def distance_from(self, center) -> np.ndarray:
        """Wrapped distance of every grid point from ``center`` (grid shape)."""
        return self.torus_distance(self.point_stack, center)

    @cached_property
    def offset_distance(self) -> np.ndarray:
        """Wrapped distance of every lattice offset from the origin."""
        return self.distance_from([0.0] * self.n)


@dataclass
class SampledField:
    """Scalar field sampled on a Grid, optionally tagged with a time."""

    grid: Grid
    values: np.ndarray
    time: float | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise GridMismatchError(
                f"field shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self, values=None, time=None) -> "SampledField":
        return SampledField(
            self.grid,
            self.values.copy() if values is None else values,
            self.time if time is None else time,
        )

    def fft(self) -> np.ndarray:
        return np.fft.fftn(self.values)

    def lp_norm(self, p: float) -> float:
        return lp_norm(self.values, self.grid, p)

    def mean(self) -> float:
        return float(self.values.mean())

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_volume)


def require_same_grid(*objs) -> Grid:
    grid = objs[0].grid
    for o in objs[1:]:
        if o.grid != grid:
            raise GridMismatchError("objects do not share a grid")
    return grid


def lp_norm(values: np.ndarray, grid: Grid, p: float) -> float:
    """Grid L^p norm with cell-volume weighting; p=inf is the grid max."""
    v = np.abs(np.asarray(values, dtype=float))
    if np.isinf(p):
        return float(v.max())
    if p <= 0:
        raise ValueError("p must be positive")
    return float((v**p).sum() * grid.cell_volume) ** (1.0 / p)


def apply_multiplier(values: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
    """Apply a real Fourier multiplier to real grid values."""
    return np.fft.ifftn(multiplier * np.fft.fftn(values)).real


def spectral_gradient(values: np.ndarray, grid: Grid) -> list:
    fhat = np.fft.fftn(values)
    return [np.fft.ifftn(1j * k * fhat).real for k in grid.wavenumbers]


def spectral_divergence(components, grid: Grid) -> np.ndarray:
    out = np.zeros(grid.shape)
    for comp, k in zip(components, grid.wavenumbers):
        out = out + np.fft.ifftn(1j * k * np.fft.fftn(comp)).real
    return out


def fractional_laplacian(values: np.ndarray, grid: Grid, s: float) -> np.ndarray:
    """(-Delta)^{s/2} as the |k|^s multiplier (annihilates the mean)."""
    mult = grid.k_magnitude**s
    mult = np.where(grid.k_magnitude > 0, mult, 0.0)
    return apply_multiplier(values, mult)


def heat_multiplier(grid: Grid, tau: float) -> np.ndarray:
    """Multiplier of e^{tau*Delta}; tau = 0 is the identity."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    return np.exp(-tau * grid.k_squared)


def dealias(values: np.ndarray, grid: Grid) -> np.ndarray:
    return np.fft.ifftn(np.fft.fftn(values) * grid.dealias_mask).real


def ball_offsets(grid: Grid, radius: float) -> np.ndarray:
    """Lattice offsets (in index units) with wrapped distance <= radius.

    Returned as an (m, n) integer array; membership is inclusive, matching
    the deterministic ball convention used by the norm estimators.
    """
    mask = grid.offset_distance <= radius + 1e-12
    idx = np.argwhere(mask)
    N = grid.points_per_dim
    return ((idx + N // 2) % N) - N // 2


def smooth_random_field(
    grid: Grid, rng: np.random.Generator, corr_scale: float = 0.5, amplitude: float = 1.0
) -> np.ndarray:
    """Mean-zero random field with Gaussian spectral envelope exp(-(k*ell)^2/2)."""
    noise = rng.standard_normal(grid.shape)
    envelope = np.exp(-0.5 * (grid.k_magnitude * corr_scale) ** 2)
    out = apply_multiplier(noise, envelope)
    out -= out.mean()
    peak = np.abs(out).max()
    if peak > 0:
        out *= amplitude / peak
    return out


def lattice_weierstrass_field(
    grid: Grid,
    exponent: float,
    octaves: int = 8,
    rng: np.random.Generator | None = None,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Deterministic multi-scale field with increments ~ |x-y|^exponent.

    A two-direction cosine ladder with octave frequencies 2^j and amplitudes
    2^(-exponent j); frequency vectors are exact lattice modes so the field is
    truly periodic.  Phases come from ``rng``; bounded by ``amplitude``.
    """
    if grid.n != 2:
        raise ValueError("weierstrass ladder implemented for n = 2")
    rng = rng or np.random.default_rng(0)
    x, y = grid.coords
    f = np.zeros(grid.shape)
    for j in range(octaves):
        k1, k2 = 2**j, max(1, round(0.4 * 2**j))
        ph1, ph2 = rng.uniform(0, 2 * np.pi, 2)
        f += 2.0 ** (-exponent * j) * (
            np.cos(k1 * x + k2 * y + ph1) + np.cos(k2 * x - k1 * y + ph2)
        )
    return amplitude * f / np.abs(f).max()


def power_law_random_field(
    grid: Grid,
    rng: np.random.Generator,
    exponent: float,
    amplitude: float = 1.0,
    k_min: float = 1.0,
) -> np.ndarray:
    """Random field with |f_hat(k)| ~ |k|^{-(exponent + n/2)}.

    Increments then scale like |x-y|^exponent for exponent in (0, 1), which is
    the synthetic rough-data family used by the regularity probes.
    """
    noise = rng.standard_normal(grid.shape)
    kmag = grid.k_magnitude
    spec = np.zeros(grid.shape)
    nz = kmag >= k_min
    spec[nz] = kmag[nz] ** (-(exponent + grid.n / 2.0))
    out = apply_multiplier(noise, spec)
    out -= out.mean()
    peak = np.abs(out).max()
    if peak > 0:
        out *= amplitude / peak
    return out
