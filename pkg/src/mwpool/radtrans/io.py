"""Binary and CSV grid files."""

from __future__ import annotations

import numpy as np

from .grid import Grid


def read_density(path: str, n: int) -> np.ndarray:
    data = np.fromfile(path, dtype="<f8")
    if data.size != n**3:
        raise ValueError(f"{path}: expected {n**3} binary64 values, found {data.size}")
    return data.reshape(n, n, n).astype(np.float64)


def write_array(path: str, arr: np.ndarray) -> None:
    """Raw little-endian binary64, C order (k varies fastest)."""
    np.ascontiguousarray(arr, dtype="<f8").tofile(path)


def neutral_bytes(grid: Grid) -> bytes:
    return np.ascontiguousarray(grid.neutral, dtype="<f8").tobytes()


def write_csv(path: str, grid: Grid) -> None:
    n = grid.n
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,j,k,x\n")
        flat = grid.neutral.ravel().tolist()
        idx = 0
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    fh.write(f"{i},{j},{k},{flat[idx]!r}\n")
                    idx += 1
