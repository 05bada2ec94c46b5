"""Cube-map quadtree angular pixelization for hierarchical rays.

Face ``f`` has major axis ``f // 2`` and sign ``+`` for even ``f``; the
two in-face coordinates ``u`` and ``v`` map to axes ``(a + 1) % 3`` and
``(a + 2) % 3``. So face 0 (+x) is ``(1, u, v)`` and face 3 (-y) is
``(v, -1, u)``.
"""

from __future__ import annotations

import math
from typing import NamedTuple

FACES = 6


class RayAddress(NamedTuple):
    face: int
    level: int
    ix: int
    iy: int

    def validate(self) -> None:
        if not 0 <= self.face < FACES:
            raise ValueError(f"face {self.face} out of range")
        if self.level < 0:
            raise ValueError("level must be >= 0")
        side = 1 << self.level
        if not (0 <= self.ix < side and 0 <= self.iy < side):
            raise ValueError(f"pixel ({self.ix}, {self.iy}) outside level {self.level}")


def pixel_center_uv(level: int, ix: int, iy: int) -> tuple[float, float]:
    side = 1 << level
    return -1.0 + (2 * ix + 1) / side, -1.0 + (2 * iy + 1) / side


def pixel_direction(addr: RayAddress) -> tuple[float, float, float]:
    """Unit vector through the center of the pixel."""
    u, v = pixel_center_uv(addr.level, addr.ix, addr.iy)
    axis = addr.face // 2
    vec = [0.0, 0.0, 0.0]
    vec[axis] = 1.0 if addr.face % 2 == 0 else -1.0
    vec[(axis + 1) % 3] = u
    vec[(axis + 2) % 3] = v
    norm = math.sqrt(vec[0] * vec[0] + vec[1] * vec[1] + vec[2] * vec[2])
    return vec[0] / norm, vec[1] / norm, vec[2] / norm


def children(addr: RayAddress) -> list[RayAddress]:
    """The four sub-pixels, ordered (0,0), (1,0), (0,1), (1,1)."""
    f, lv, ix, iy = addr
    return [RayAddress(f, lv + 1, 2 * ix + a, 2 * iy + b) for b in (0, 1) for a in (0, 1)]


def pixel_solid_angle(level: int) -> float:
    """Uniform per-level approximation: each face holds 4**level equal pixels."""
    return (4.0 * math.pi / FACES) / 4**level


def base_addresses(level: int) -> list[RayAddress]:
    side = 1 << level
    return [RayAddress(f, level, ix, iy) for f in range(FACES) for iy in range(side) for ix in range(side)]


def split_check(level: int, r: float, dx: float, f_split: float) -> bool:
    """True when the pixel footprint at distance ``r`` exceeds ``f_split`` cell faces."""
    return r * r * pixel_solid_angle(level) > f_split * dx * dx
