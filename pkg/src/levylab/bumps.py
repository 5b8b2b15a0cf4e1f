"""Canonical smooth bumps and plateau cutoffs.

One profile family serves every consumer: mollifiers, drift cutoffs and the
commutator experiments all use the classical C^infty bump
``exp(-1/(1-|x|^2))`` or the plateau built from it, so constants fitted in one
module remain comparable in another.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid


def bump_profile(u: np.ndarray) -> np.ndarray:
    """exp(-1/(1-u^2)) on |u| < 1, zero outside (unnormalized)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    w = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - w * w))
    return out


def smooth_step(u: np.ndarray) -> np.ndarray:
    """C^infty step: 0 for u <= 0, 1 for u >= 1, strictly monotone between."""
    u = np.asarray(u, dtype=float)

    def g(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    a = g(u)
    b = g(1.0 - u)
    return a / (a + b + 1e-300)


def plateau_cutoff(grid: Grid, radius: float, center=None) -> np.ndarray:
    """Smooth cutoff phi(x) = phihat(x/R): 1 on |x| <= R/2, 0 on |x| >= R.

    Built on the torus with the wrapped distance; radius must fit inside a
    half-period so the plateau and the zero set are both realized.
    """
    if center is None:
        center = [grid.side_length / 2.0] * grid.n
    if radius <= 0 or radius > grid.side_length / 2.0:
        raise ValueError("cutoff radius must lie in (0, L/2]")
    dist = grid.distance_from(center)
    return smooth_step(2.0 * (1.0 - dist / radius))


def normalized_space_bump(grid: Grid, epsilon: float, center=None) -> np.ndarray:
    """Mollifier omega_eps sampled on the grid, normalized to unit discrete mass."""
    if center is None:
        center = [0.0] * grid.n
    if epsilon < grid.spacing:
        raise ValueError("mollifier width below grid resolution")
    dist = grid.distance_from(center)
    vals = bump_profile(dist / epsilon)
    total = vals.sum() * grid.cell_volume
    if total <= 0:
        raise ValueError("degenerate mollifier")
    return vals / total


def time_bump_weights(t_nodes: np.ndarray, t_center: float, epsilon: float) -> np.ndarray:
    """Discrete weights of the time mollifier psi_eps centered at ``t_center``.

    Weights are normalized over the bump's full support so that convolving a
    constant-in-time signal reproduces it exactly at interior nodes; callers
    zero-extend the signal outside its native interval.
    """
    t_nodes = np.asarray(t_nodes, dtype=float)
    w = bump_profile((t_nodes - t_center) / epsilon)
    total = w.sum()
    if total <= 0:
        raise ValueError("time mollifier support misses every node")
    return w / total
