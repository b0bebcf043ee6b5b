"""
Rectangular space grids on [-M, M]^N (N = 1 or 2) and node-valued functions on them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Sequence, Tuple, Union

import numpy as np

from .errors import DegenerateGrid, DimensionMismatch


@dataclass(frozen=True)
class Grid:
    space_dim: int
    extent: Tuple[float, ...]
    nodes: Tuple[int, ...]
    horizon: float

    def __post_init__(self):
        if self.space_dim not in (1, 2):
            raise DegenerateGrid(f"only 1D and 2D grids are supported, got N={self.space_dim}")
        extent = tuple(float(m) for m in np.broadcast_to(self.extent, (self.space_dim,)))
        nodes = tuple(int(n) for n in np.broadcast_to(self.nodes, (self.space_dim,)))
        object.__setattr__(self, "extent", extent)
        object.__setattr__(self, "nodes", nodes)
        if any(n < 3 for n in nodes):
            raise DegenerateGrid(f"need at least 3 nodes per axis, got {nodes}")
        if any(m <= 0.0 for m in extent):
            raise DegenerateGrid(f"extent must be positive, got {extent}")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")

    @classmethod
    def uniform(cls, space_dim: int, extent: float, nodes: int, horizon: float) -> "Grid":
        return cls(space_dim, (extent,) * space_dim, (nodes,) * space_dim, horizon)

    @property
    def widths(self) -> Tuple[float, ...]:
        return tuple(2.0 * m / (n - 1) for m, n in zip(self.extent, self.nodes))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def radius(self) -> float:
        """Radius of the largest centred ball the grid covers"""
        return min(self.extent)

    @property
    def dt_cap(self) -> float:
        return self.horizon / 100.0

    def axes(self) -> List[np.ndarray]:
        return [np.linspace(-m, m, n) for m, n in zip(self.extent, self.nodes)]

    def points(self) -> np.ndarray:
        """All nodes, shape (size, N), in C order"""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.space_dim):
            index = [slice(None)] * self.space_dim
            index[axis] = 0
            mask[tuple(index)] = True
            index[axis] = -1
            mask[tuple(index)] = True
        return mask.reshape(-1)

    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask()

    def refine(self) -> "Grid":
        """Halve every mesh width"""
        return Grid(self.space_dim, self.extent, tuple(2 * n - 1 for n in self.nodes), self.horizon)

    def sample(self, fn: Callable[[np.ndarray], np.ndarray], time: float = 0.0) -> "GridFunction":
        return GridFunction(self, np.asarray(fn(self.points()), dtype=float).reshape(-1), time)


@dataclass
class GridFunction:
    grid: Grid
    values: np.ndarray
    time: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.grid.size:
            raise DimensionMismatch(f"grid has {self.grid.size} nodes, got {self.values.size} values")

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def copy(self) -> "GridFunction":
        return GridFunction(self.grid, self.values.copy(), self.time, dict(self.meta))

    def max_norm(self, interior: bool = False) -> float:
        vals = self.values[self.grid.interior_mask()] if interior else self.values
        return float(np.max(np.abs(vals))) if vals.size else 0.0

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def rows(self) -> List[List[float]]:
        pts = self.grid.points()
        return [list(pts[i]) + [self.time, float(self.values[i])] for i in range(self.grid.size)]


def csv_header(space_dim: int, extra: Sequence[str] = ("t", "value")) -> List[str]:
    return [f"x{i + 1}" for i in range(space_dim)] + list(extra)


def write_snapshots_csv(path: Union[str, Path], frames: Sequence[GridFunction]) -> Path:
    """Long-format CSV with columns x1[,x2],t,value"""
    if not frames:
        raise ValueError("no snapshots to write")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(csv_header(frames[0].grid.space_dim))
        for frame in frames:
            writer.writerows(frame.rows())
    return path
