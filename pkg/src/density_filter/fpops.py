"""Finite-volume discretisation of the Fokker-Planck generator.

The generator ``A(t) p = -div(v p) + sum_i d^2/dx_i^2 (D_ii p)`` is written in
flux form on the grid. Across each interior face the flux is

    J = upwind(v_face) p  -  (D_right p_right - D_left p_left) / h

with the drift sampled at the face centre and ``D`` at cell centres. Boundary
faces carry no flux, which is the discrete zero-flux (reflecting) condition.
The resulting matrix has zero column sums (mass conservation), nonnegative
off-diagonals and at most five nonzeros per row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .dynamics import DiffusionModel, VelocityField
from .grid import DensityField, Grid

STABILITY_SAFETY = 0.9


@dataclass(frozen=True)
class DiffusionField:
    """Spatially varying diffusion tensor entries evaluated at ``(points, t)``.

    Only diagonal tensors are assembled; a nonzero ``d12`` is rejected.
    """

    d11: Callable[[np.ndarray, float], np.ndarray]
    d22: Callable[[np.ndarray, float], np.ndarray]
    d12: Optional[Callable[[np.ndarray, float], np.ndarray]] = None

    @classmethod
    def from_model(cls, d: DiffusionModel) -> "DiffusionField":
        c = d.dcoef
        const = lambda x, t: np.full(len(x), c)  # noqa: E731
        return cls(const, const)


@dataclass(frozen=True)
class FpOperator:
    matrix: sp.csr_matrix
    time: float
    grid: Grid

    @property
    def max_outflow(self) -> float:
        """Largest ``|A_kk|``, the rate bounding explicit step sizes."""
        return float(np.max(np.abs(self.matrix.diagonal()), initial=0.0))


def _diffusion_at_centers(g: Grid, d, t: float) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(d, DiffusionModel):
        c = np.full(g.size, d.dcoef)
        return c, c
    pts = g.centers()
    if d.d12 is not None and np.any(np.asarray(d.d12(pts, t)) != 0):
        raise NotImplementedError("cross-diffusion terms D_12 are not supported")
    d11 = np.broadcast_to(np.asarray(d.d11(pts, t), dtype=float), (g.size,))
    d22 = np.broadcast_to(np.asarray(d.d22(pts, t), dtype=float), (g.size,))
    if np.any(d11 < 0) or np.any(d22 < 0):
        raise ValueError("diffusion coefficients must be nonnegative")
    return d11, d22


def assemble_operator(
    g: Grid,
    v: VelocityField,
    d: Union[DiffusionModel, DiffusionField],
    t: float,
) -> FpOperator:
    """Assemble the sparse generator with drift and diffusion sampled at ``t``."""
    nx, ny = g.nx, g.ny
    d11, d22 = _diffusion_at_centers(g, d, t)
    idx = np.arange(g.size).reshape(ny, nx)
    rows, cols, vals = [], [], []

    def add_faces(left, right, speed, d_left, d_right, h):
        # Flux from `left` to `right` is a * p_left - b * p_right with a, b >= 0.
        a = (np.maximum(speed, 0.0) + d_left / h) / h
        b = (-np.minimum(speed, 0.0) + d_right / h) / h
        rows.extend([left, left, right, right])
        cols.extend([left, right, left, right])
        vals.extend([-a, b, a, -b])

    # x-faces between columns i and i+1
    xf = g.xmin + np.arange(1, nx) * g.dx
    fx, fy = np.meshgrid(xf, g.y_centers)
    vx = v(np.column_stack([fx.ravel(), fy.ravel()]), t)[:, 0]
    left = idx[:, :-1].ravel()
    right = idx[:, 1:].ravel()
    add_faces(left, right, vx, d11[left], d11[right], g.dx)

    # y-faces between rows j and j+1
    yf = g.ymin + np.arange(1, ny) * g.dy
    fx, fy = np.meshgrid(g.x_centers, yf)
    vy = v(np.column_stack([fx.ravel(), fy.ravel()]), t)[:, 1]
    below = idx[:-1, :].ravel()
    above = idx[1:, :].ravel()
    add_faces(below, above, vy, d22[below], d22[above], g.dy)

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(g.size, g.size),
    ).tocsr()
    matrix.sum_duplicates()
    return FpOperator(matrix, float(t), g)


def apply_operator(a: FpOperator, p: DensityField) -> np.ndarray:
    """Rate ``dp/dt = A p``; the result may be negative and is a plain array."""
    if p.grid != a.grid:
        raise ValueError("density and operator live on different grids")
    return a.matrix @ p.values


def stable_substep(a: FpOperator, dt_outer: float) -> tuple[int, float]:
    """Smallest substep count keeping ``dt_inner * max|A_kk| <= 0.9``."""
    if not dt_outer > 0:
        raise ValueError(f"dt must be positive, got {dt_outer}")
    m = max(1, math.ceil(dt_outer * a.max_outflow / STABILITY_SAFETY - 1e-12))
    return m, dt_outer / m


def step_matrix(a: FpOperator, dt: float) -> sp.csr_matrix:
    """Forward-Euler propagator ``I + dt A`` (entrywise nonnegative when stable)."""
    return (sp.identity(a.grid.size, format="csr") + dt * a.matrix).tocsr()


def advance(a: FpOperator, values: np.ndarray, dt: float) -> np.ndarray:
    """Forward-Euler integration of ``dp/dt = A p`` over ``dt`` with stable substeps."""
    m, h = stable_substep(a, dt)
    f = step_matrix(a, h)
    out = np.asarray(values, dtype=float)
    for _ in range(m):
        out = f @ out
    return out


def dump_coo(a: FpOperator, path: Union[str, Path]) -> None:
    """Write the matrix as ``row col value`` lines preceded by a header comment."""
    coo = a.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(f"# n={a.grid.size} nnz={coo.nnz} t={a.time!r}\n")
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r} {c} {v:.17g}\n")
