"""Aggregation of ray deltas and the per-cell ionization balance."""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .grid import Grid, PhysicsParams

GAMMA_FLOOR = 1e-30


def apply_deltas(n: int, deltas: Iterable[tuple[object, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Sum absorbed rates per cell, folding deltas in ascending key order.

    Returns ``(absorbed, hits)`` where ``hits`` counts delta entries per cell.
    The fixed fold order makes the float sums independent of arrival order.
    """
    absorbed = np.zeros((n, n, n))
    hits = np.zeros((n, n, n), dtype=np.int64)
    ordered = [arr for _, arr in sorted(deltas, key=lambda kv: kv[0]) if len(arr)]
    if not ordered:
        return absorbed, hits
    allv = np.concatenate(ordered)
    idx = (allv["i"].astype(np.intp), allv["j"].astype(np.intp), allv["k"].astype(np.intp))
    # np.add.at is unbuffered and applies entries sequentially, in order
    np.add.at(absorbed, idx, allv["absorbed"])
    np.add.at(hits, idx, 1)
    return absorbed, hits


def ionization_rate(grid: Grid, absorbed: np.ndarray) -> np.ndarray:
    """Photoionizations per neutral atom per unit time."""
    neutrals = np.maximum(grid.density * grid.neutral, GAMMA_FLOOR)
    return absorbed / (neutrals * grid.dx**3)


def solve_neutral_fraction(gamma, recomb):
    """Root in [0, 1] of ``gamma*x = recomb*(1 - x)**2`` with ``recomb = alpha*n_H``.

    Uses ``x = 2a / (2a + G + sqrt(G*(G + 4a)))``, the cancellation-free form
    of the small quadratic root. ``gamma == 0`` gives ``x = 1``.
    """
    g = np.asarray(gamma, dtype=np.float64)
    a = np.asarray(recomb, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = 2 * a / (2 * a + g + np.sqrt(g * (g + 4 * a)))
    x = np.where(g == 0, 1.0, x)
    if x.ndim == 0:
        return float(x)
    return x


def equilibrium_update(grid: Grid, absorbed: np.ndarray, params: PhysicsParams) -> tuple[np.ndarray, float]:
    gamma = ionization_rate(grid, absorbed)
    x_new = solve_neutral_fraction(gamma, params.alpha * grid.density)
    x_new = np.clip(x_new, 0.0, 1.0)
    return x_new, float(np.max(np.abs(x_new - grid.neutral)))


def stromgren_radius(Q: float, alpha: float, n_H: float) -> float:
    return (3 * Q / (4 * math.pi * alpha * n_H**2)) ** (1 / 3)


def ionized_radius(grid: Grid, threshold: float = 0.5) -> float:
    """Radius of the sphere with the volume of all cells below ``threshold``."""
    volume = grid.dx**3 * int(np.count_nonzero(grid.neutral < threshold))
    return (3 * volume / (4 * math.pi)) ** (1 / 3)
