"""Uniform rectangular grids and grid-valued densities.

Cells are indexed ``(i, j)`` with ``i`` along x and ``j`` along y. Flattened
vectors use row-major order over y then x: ``k = j * nx + i``. Every module in
the package relies on this convention.

Integrals use the midpoint rule (cell value times cell area), which is exact
for piecewise-constant fields and matches the finite-volume operator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

OUTSIDE = -1


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on ``[xmin, xmax] x [ymin, ymax]``."""

    nx: int
    ny: int
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self) -> None:
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"grid needs at least 3 cells per axis, got {self.nx}x{self.ny}")
        if not self.xmax > self.xmin or not self.ymax > self.ymin:
            raise ValueError(
                f"degenerate bounds [{self.xmin}, {self.xmax}] x [{self.ymin}, {self.ymax}]"
            )

    @property
    def dx(self) -> float:
        return (self.xmax - self.xmin) / self.nx

    @property
    def dy(self) -> float:
        return (self.ymax - self.ymin) / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.xmin, self.xmax, self.ymin, self.ymax)

    @property
    def x_centers(self) -> np.ndarray:
        return self.xmin + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y_centers(self) -> np.ndarray:
        return self.ymin + (np.arange(self.ny) + 0.5) * self.dy

    def centers(self) -> np.ndarray:
        """Cell centres as an ``(nx*ny, 2)`` array in flattened order."""
        xx, yy = np.meshgrid(self.x_centers, self.y_centers)
        return np.column_stack([xx.ravel(), yy.ravel()])

    def index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def unravel(self, k):
        """Inverse of :meth:`index`; returns ``(i, j)``."""
        j, i = np.divmod(np.asarray(k), self.nx)
        return i, j

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_area)

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """View a flat vector as an ``(ny, nx)`` image (row = y)."""
        return np.asarray(values).reshape(self.ny, self.nx)


def build_grid(nx: int, ny: int, bounds: Sequence[float]) -> Grid:
    """Build a grid from cell counts and ``(xmin, xmax, ymin, ymax)``."""
    if len(bounds) != 4:
        raise ValueError(f"bounds must have 4 entries, got {len(bounds)}")
    xmin, xmax, ymin, ymax = (float(b) for b in bounds)
    return Grid(int(nx), int(ny), xmin, xmax, ymin, ymax)


@dataclass
class DensityField:
    """Nonnegative density sampled at the cell centres of ``grid``.

    Construction rejects negative entries; use :meth:`clamped` when small
    negative values from arithmetic should be cut to zero instead.
    """

    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {values.size}")
        if np.any(values < 0):
            raise ValueError(f"density has negative entries (min {values.min():.3e})")
        self.values = values

    @classmethod
    def clamped(cls, grid: Grid, values: np.ndarray, time: float = 0.0) -> "DensityField":
        return cls(grid, np.maximum(np.asarray(values, dtype=float), 0.0), time)

    @classmethod
    def constant(cls, grid: Grid, value: float, time: float = 0.0) -> "DensityField":
        return cls(grid, np.full(grid.size, float(value)), time)

    @classmethod
    def from_function(cls, grid: Grid, func, time: float = 0.0) -> "DensityField":
        """Sample ``func(points) -> values`` at the cell centres."""
        return cls(grid, func(grid.centers()), time)

    def as_image(self) -> np.ndarray:
        return self.grid.reshape(self.values)


def integrate(f: DensityField) -> float:
    """Midpoint-rule integral of a density over its grid."""
    return f.grid.integrate(f.values)


def locate_cell(g: Grid, x: Sequence[float]) -> int:
    """Flattened index of the cell containing point ``x``.

    Points on an interior cell edge go to the higher-index cell. Points on the
    upper domain boundary belong to the last cell; points outside the closed
    domain return :data:`OUTSIDE`.
    """
    return int(locate_cells(g, np.asarray(x, dtype=float)[None, :])[0])


def locate_cells(g: Grid, points: np.ndarray) -> np.ndarray:
    """Vectorised :func:`locate_cell` for an ``(m, 2)`` array of points."""
    points = np.asarray(points, dtype=float)
    x, y = points[:, 0], points[:, 1]
    inside = (x >= g.xmin) & (x <= g.xmax) & (y >= g.ymin) & (y <= g.ymax)
    # Scale by n/L instead of dividing by dx so exact edges land on integers.
    i = np.floor((x - g.xmin) * g.nx / (g.xmax - g.xmin))
    j = np.floor((y - g.ymin) * g.ny / (g.ymax - g.ymin))
    i = np.clip(np.nan_to_num(i), 0, g.nx - 1).astype(np.int64)
    j = np.clip(np.nan_to_num(j), 0, g.ny - 1).astype(np.int64)
    return np.where(inside, j * g.nx + i, OUTSIDE)
