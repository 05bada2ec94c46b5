"""Cell grid, physics parameters and the snapshot blob shipped to workers."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class PhysicsParams:
    Q: float
    sigma: float
    alpha: float
    eps_cut: float = 1e-6
    f_split: float = 1.0
    base_level: int = 1
    tol: float = 1e-4
    max_epochs: int = 100

    def __post_init__(self):
        # Q may be 0 (a dark source); everything else must be positive
        if self.Q < 0:
            raise ValueError("Q must be >= 0")
        for name in ("sigma", "alpha", "eps_cut", "f_split", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.tol < 1:
            raise ValueError("tol must be < 1")
        if self.base_level < 0:
            raise ValueError("base_level must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")

    @property
    def base_rays(self) -> int:
        return 6 * 4**self.base_level

    @property
    def photon_cutoff(self) -> float:
        return self.eps_cut * self.Q / self.base_rays


@dataclass
class Grid:
    """``n**3`` cells of edge ``dx``; cell (i, j, k) spans ``[i*dx, (i+1)*dx)`` etc."""

    n: int
    dx: float
    density: np.ndarray
    neutral: np.ndarray = field(default=None)
    source: tuple[float, float, float] = None

    def __post_init__(self):
        shape = (self.n, self.n, self.n)
        self.density = np.array(self.density, dtype=np.float64)
        if self.density.shape == ():
            self.density = np.full(shape, float(self.density))
        if self.neutral is None:
            self.neutral = np.ones(shape)
        self.neutral = np.array(self.neutral, dtype=np.float64)
        if self.source is None:
            c = self.n * self.dx / 2
            self.source = (c, c, c)
        self.source = tuple(float(s) for s in self.source)
        if self.n < 1 or not self.dx > 0:
            raise ValueError("grid needs n >= 1 and dx > 0")
        if self.density.shape != shape or self.neutral.shape != shape:
            raise ValueError(f"density and neutral arrays must have shape {shape}")
        if (self.density < 0).any():
            raise ValueError("density must be >= 0")
        if ((self.neutral < 0) | (self.neutral > 1)).any():
            raise ValueError("neutral fractions must lie in [0, 1]")
        extent = self.n * self.dx
        if not all(0 < s < extent for s in self.source):
            raise ValueError(f"source {self.source} not strictly inside the grid")

    @classmethod
    def uniform(cls, n: int, dx: float, density: float, source=None) -> "Grid":
        return cls(n, dx, np.full((n, n, n), float(density)), source=source)

    @property
    def extent(self) -> float:
        return self.n * self.dx

    def copy(self) -> "Grid":
        return Grid(self.n, self.dx, self.density.copy(), self.neutral.copy(), self.source)


_SNAP = struct.Struct("<4sId3d6d2I")
_SNAP_MAGIC = b"RTS1"


@dataclass
class Snapshot:
    """What a worker needs to trace rays: grid state frozen at epoch start."""

    n: int
    dx: float
    source: tuple[float, float, float]
    params: PhysicsParams
    density: np.ndarray
    neutral: np.ndarray
    _opacity: Optional[list] = field(default=None, repr=False)

    @property
    def opacity(self) -> list[float]:
        """Flat per-cell n_H * x * sigma, indexed ``(i*n + j)*n + k``."""
        if self._opacity is None:
            self._opacity = (self.density * self.neutral * self.params.sigma).ravel().tolist()
        return self._opacity

    @classmethod
    def of(cls, grid: Grid, params: PhysicsParams) -> "Snapshot":
        return cls(grid.n, grid.dx, grid.source, params, grid.density, grid.neutral)


def encode_snapshot(grid: Grid, params: PhysicsParams) -> bytes:
    p = params
    head = _SNAP.pack(_SNAP_MAGIC, grid.n, grid.dx, *grid.source, p.Q, p.sigma, p.alpha,
                      p.eps_cut, p.f_split, p.tol, p.base_level, p.max_epochs)
    return (head + np.ascontiguousarray(grid.density, dtype="<f8").tobytes()
            + np.ascontiguousarray(grid.neutral, dtype="<f8").tobytes())


def decode_snapshot(blob: bytes) -> Snapshot:
    if len(blob) < _SNAP.size:
        raise ValueError("snapshot blob too short")
    (magic, n, dx, sx, sy, sz, Q, sigma, alpha, eps_cut, f_split, tol,
     base_level, max_epochs) = _SNAP.unpack_from(blob)
    if magic != _SNAP_MAGIC:
        raise ValueError("not a grid snapshot")
    cells = n * n * n
    if len(blob) != _SNAP.size + 16 * cells:
        raise ValueError("snapshot blob has the wrong length")
    arr = np.frombuffer(blob, dtype="<f8", offset=_SNAP.size, count=2 * cells)
    params = PhysicsParams(Q, sigma, alpha, eps_cut, f_split, base_level, tol, max_epochs)
    return Snapshot(n, dx, (sx, sy, sz), params,
                    arr[:cells].reshape(n, n, n), arr[cells:].reshape(n, n, n))
