"""Gaussian kernel density estimates on the grid and their noise scale.

For ``n`` samples and bandwidth ``h`` in ``d`` dimensions the estimate at a
point has asymptotic variance ``f(x) * R(K) / (n * h**d)`` where
``R(K) = int K(u)**2 du``. The factor ``kbar = R(K) / (n * h**d)`` turns a
density into the diagonal of the measurement-noise covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import AgentEnsemble
from .grid import DensityField, Grid

# Floor for densities entering an inverse noise covariance.
DENSITY_FLOOR = 1e-8


@dataclass(frozen=True)
class KdeConfig:
    bandwidth: float
    dim: int = 2

    def __post_init__(self) -> None:
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")


@dataclass(frozen=True)
class NoiseScale:
    kbar: float

    def __post_init__(self) -> None:
        if not self.kbar > 0:
            raise ValueError(f"kbar must be positive, got {self.kbar}")


def gaussian_kernel(u) -> np.ndarray:
    """Standard Gaussian kernel; the last axis of ``u`` is the dimension."""
    u = np.asarray(u, dtype=float)
    d = u.shape[-1] if u.ndim else 1
    sq = np.sum(u * u, axis=-1) if u.ndim else u * u
    return (2 * np.pi) ** (-d / 2) * np.exp(-0.5 * sq)


def kernel_roughness(dim: int) -> float:
    """``int K(u)**2 du`` for the Gaussian kernel, equal to ``(4 pi)**(-d/2)``."""
    return (4 * np.pi) ** (-dim / 2)


def compute_kbar(n: int, cfg: KdeConfig) -> NoiseScale:
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    return NoiseScale(kernel_roughness(cfg.dim) / (n * cfg.bandwidth**cfg.dim))


def kde_values(points: np.ndarray, g: Grid, bandwidth: float) -> np.ndarray:
    """Evaluate the 2-D Gaussian KDE of ``points`` at every cell centre.

    The 2-D kernel factorises into 1-D Gaussians, so the sum over samples is
    one ``(ny, n) @ (n, nx)`` product. This is the exact estimator at the
    cell centres, not a binned approximation.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if n == 0:
        raise ValueError("cannot build a KDE from an empty ensemble")
    h = float(bandwidth)
    phi_x = np.exp(-0.5 * ((g.x_centers[:, None] - points[None, :, 0]) / h) ** 2)
    phi_y = np.exp(-0.5 * ((g.y_centers[:, None] - points[None, :, 1]) / h) ** 2)
    image = phi_y @ phi_x.T
    return image.ravel() / (2 * np.pi * n * h * h)


def kde_on_grid(e: AgentEnsemble | np.ndarray, g: Grid, cfg: KdeConfig) -> DensityField:
    if cfg.dim != 2:
        raise ValueError("grid KDE is two-dimensional")
    if isinstance(e, AgentEnsemble):
        return DensityField(g, kde_values(e.positions, g, cfg.bandwidth), e.time)
    return DensityField(g, kde_values(e, g, cfg.bandwidth))
