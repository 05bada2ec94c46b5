"""Ray-segment tasks: 3D DDA traversal with attenuation and 4-way splitting."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import RayAddress, base_addresses, children, pixel_direction, pixel_solid_angle
from .grid import PhysicsParams, Snapshot

_SEG = struct.Struct("<BBII3i3dd")

DELTA_DTYPE = np.dtype([("i", "<u2"), ("j", "<u2"), ("k", "<u2"), ("absorbed", "<f8")])
_ENTRY = struct.Struct("<HHHd")
_COUNT = struct.Struct("<I")


@dataclass(frozen=True)
class RaySegmentTask:
    addr: RayAddress
    start: tuple[float, float, float]
    photons: float
    # Cell the segment enters at ``start``. Stored so that a child starting
    # on its parent's exit boundary does not depend on rounding of ``start``.
    cell: Optional[tuple[int, int, int]] = None

    def encode(self) -> bytes:
        cell = self.cell if self.cell is not None else (-1, -1, -1)
        return _SEG.pack(*self.addr, *cell, *self.start, self.photons)

    @classmethod
    def decode(cls, data: bytes) -> "RaySegmentTask":
        face, level, ix, iy, ci, cj, ck, x, y, z, photons = _SEG.unpack(data)
        addr = RayAddress(face, level, ix, iy)
        addr.validate()
        cell = None if (ci, cj, ck) == (-1, -1, -1) else (ci, cj, ck)
        return cls(addr, (x, y, z), photons, cell)


@dataclass
class GridDelta:
    """Sparse per-segment result: absorbed photon rate per traversed cell."""

    entries: list[tuple[int, int, int, float]]
    remaining: float = 0.0
    reason: str = "exit"

    def encode(self) -> bytes:
        return _COUNT.pack(len(self.entries)) + b"".join(_ENTRY.pack(*e) for e in self.entries)

    @staticmethod
    def decode_array(data: bytes) -> np.ndarray:
        (count,) = _COUNT.unpack_from(data)
        if len(data) != _COUNT.size + count * DELTA_DTYPE.itemsize:
            raise ValueError("delta payload has the wrong length")
        return np.frombuffer(data, dtype=DELTA_DTYPE, offset=_COUNT.size, count=count)

    @property
    def absorbed_total(self) -> float:
        return math.fsum(e[3] for e in self.entries)


def entry_cell(p: tuple[float, float, float], d: tuple[float, float, float], dx: float) -> tuple[int, int, int]:
    """Cell a ray at ``p`` moving along ``d`` is in; boundaries go to the cell ahead."""
    out = []
    for pa, da in zip(p, d):
        s = pa / dx
        out.append(math.ceil(s) - 1 if da < 0 else math.floor(s))
    return tuple(out)


def trace_segment(snap: Snapshot, params: PhysicsParams, task: RaySegmentTask) -> tuple[GridDelta, list[RaySegmentTask]]:
    """Trace one segment until it splits, falls below the cutoff, or leaves the grid."""
    n, dx = snap.n, snap.dx
    extent = n * dx
    d = pixel_direction(task.addr)
    start = task.start
    N = task.photons
    if not all(0.0 <= s <= extent for s in start):
        return GridDelta([], N, "outside"), []
    cell = list(task.cell if task.cell is not None else entry_cell(start, d, dx))
    if not all(0 <= c < n for c in cell):
        return GridDelta([], N, "outside"), []
    cutoff = params.photon_cutoff
    if N < cutoff or N <= 0.0:
        return GridDelta([], N, "cut"), []

    step = [0, 0, 0]
    tmax = [math.inf] * 3
    tdelta = [math.inf] * 3
    for a in range(3):
        if d[a] > 0:
            step[a] = 1
            tmax[a] = max(0.0, ((cell[a] + 1) * dx - start[a]) / d[a])
            tdelta[a] = dx / d[a]
        elif d[a] < 0:
            step[a] = -1
            tmax[a] = max(0.0, (cell[a] * dx - start[a]) / d[a])
            tdelta[a] = -dx / d[a]

    kappa = snap.opacity
    omega = pixel_solid_angle(task.addr.level)
    split_rhs = params.f_split * dx * dx
    sx, sy, sz = snap.source
    entries = []
    t = 0.0
    i, j, k = cell
    while True:
        # ties advance the lowest axis index first
        if tmax[0] <= tmax[1] and tmax[0] <= tmax[2]:
            axis = 0
        elif tmax[1] <= tmax[2]:
            axis = 1
        else:
            axis = 2
        t_next = tmax[axis]
        dl = t_next - t
        if dl > 0.0:
            tau = kappa[(i * n + j) * n + k] * dl
            absorbed = -N * math.expm1(-tau)
            N -= absorbed
            entries.append((i, j, k, absorbed))
        t = t_next
        tmax[axis] += tdelta[axis]
        if axis == 0:
            i += step[0]
        elif axis == 1:
            j += step[1]
        else:
            k += step[2]
        if N < cutoff or N <= 0.0:
            return GridDelta(entries, N, "cut"), []
        if not (0 <= i < n and 0 <= j < n and 0 <= k < n):
            return GridDelta(entries, N, "exit"), []
        px = start[0] + t * d[0]
        py = start[1] + t * d[1]
        pz = start[2] + t * d[2]
        r2 = (px - sx) ** 2 + (py - sy) ** 2 + (pz - sz) ** 2
        if r2 * omega > split_rhs:
            share = N / 4
            kids = [RaySegmentTask(c, (px, py, pz), share, (i, j, k)) for c in children(task.addr)]
            return GridDelta(entries, 0.0, "split"), kids


def base_tasks(snap_or_grid, params: PhysicsParams) -> list[RaySegmentTask]:
    src = snap_or_grid.source
    photons = params.Q / params.base_rays
    return [
        RaySegmentTask(a, src, photons, entry_cell(src, pixel_direction(a), snap_or_grid.dx))
        for a in base_addresses(params.base_level)
    ]
