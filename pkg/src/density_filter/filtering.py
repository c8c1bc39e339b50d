"""Kalman-type density filter driven by KDE measurements.

The estimate obeys ``dp/dt = A p + L (y - p)`` with gain ``L = P R^-1`` and
covariance ``dP/dt = A P + P A^T - P R^-1 P``. The measurement is the grid
KDE ``y`` and the noise covariance is diagonal, ``R = kbar * diag(y)``
(suboptimal filter) or ``kbar * diag(p_true)`` (oracle filter).

Two time integrators are available:

``"euler"``
    Explicit Euler for both equations, with substeps chosen so that
    ``2 h * max|A_kk| <= 0.9`` and ``h * max(P_kk / R_kk) <= 0.9``. The gain
    of each substep uses the covariance at the start of that substep.

``"split"`` (default)
    Prediction with the positivity-preserving propagator ``F = I + h A``
    (``p <- F p``, ``P <- F P F^T``), then the measurement term integrated
    in closed form over the whole step. With ``A = 0`` and a frozen ``y``
    the equations have the exact solution

        P+ = P - P (P + R/dt)^-1 P,    p+ = p + P (P + R/dt)^-1 (y - p),

    which stays stable however small ``R`` gets. Explicit Euler does not:
    cells where the KDE is at the density floor have ``R_kk ~ 1e-9`` and
    would need millions of substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import lapack
import scipy.sparse as sp

from .fpops import STABILITY_SAFETY, FpOperator, stable_substep, step_matrix
from .grid import DensityField, integrate
from .kde import DENSITY_FLOOR, NoiseScale

SCHEMES = ("split", "euler")

# Above this many substeps the covariance is propagated with a dense matrix.
_SPARSE_SUBSTEP_LIMIT = 4

Generator = Union[FpOperator, sp.spmatrix, np.ndarray, None]


@dataclass(frozen=True)
class NoiseCovariance:
    """Diagonal measurement-noise covariance ``kbar * max(p, floor)``."""

    diag_values: np.ndarray
    kbar: NoiseScale

    @property
    def inverse(self) -> np.ndarray:
        return 1.0 / self.diag_values


@dataclass
class CovarianceOperator:
    matrix: np.ndarray
    time: float = 0.0

    @classmethod
    def identity(cls, size: int, scale: float = 1.0, time: float = 0.0) -> "CovarianceOperator":
        return cls(scale * np.eye(size), time)

    def trace(self) -> float:
        return float(np.trace(self.matrix))


@dataclass
class FilterState:
    estimate: DensityField
    covariance: CovarianceOperator
    time: float

    def __post_init__(self) -> None:
        n = self.estimate.grid.size
        if self.covariance.matrix.shape != (n, n):
            raise ValueError(
                f"covariance shape {self.covariance.matrix.shape} does not match {n} cells"
            )


def init_filter(y0: DensityField, p0_scale: float = 1.0) -> FilterState:
    """Start from the first measurement with covariance ``p0_scale * I``."""
    cov = CovarianceOperator.identity(y0.grid.size, p0_scale, y0.time)
    return FilterState(DensityField(y0.grid, y0.values.copy(), y0.time), cov, y0.time)


def noise_covariance(
    p_meas: DensityField, k: NoiseScale, floor: float = DENSITY_FLOOR
) -> NoiseCovariance:
    values = np.asarray(p_meas.values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("measurement contains non-finite values")
    return NoiseCovariance(k.kbar * np.maximum(values, floor), k)


def kalman_gain(P: CovarianceOperator, R: NoiseCovariance) -> np.ndarray:
    """``P R^-1``: since ``R`` is diagonal this just rescales the columns of ``P``."""
    return P.matrix * R.inverse[None, :]


def gain_gap(P: CovarianceOperator, R_bar: NoiseCovariance, R: NoiseCovariance) -> float:
    """Frobenius distance between the gains built from two noise models."""
    return float(np.linalg.norm(P.matrix * (R_bar.inverse - R.inverse)[None, :]))


def _generator(A: Generator, size: int):
    """Return ``(matrix, max|A_kk|)`` for the accepted generator types."""
    if A is None:
        return sp.csr_matrix((size, size)), 0.0
    if isinstance(A, FpOperator):
        return A.matrix, A.max_outflow
    if sp.issparse(A):
        m = A.tocsr()
    else:
        m = np.atleast_2d(np.asarray(A, dtype=float))
    diag = m.diagonal()
    return m, float(np.max(np.abs(diag), initial=0.0))


def _check_dims(P: np.ndarray, n: int) -> None:
    if P.shape != (n, n):
        raise ValueError(f"dimension mismatch: covariance {P.shape} vs {n} cells")


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def riccati_substeps(
    P: CovarianceOperator, A: Generator, R: NoiseCovariance, dt: float
) -> tuple[int, float]:
    """Substep count for explicit Euler on the Riccati equation.

    The linear part ``P -> A P + P A^T`` is the generator ``I (x) A + A (x) I``
    acting on ``vec(P)``. It has the same sign structure as ``A`` with
    diagonal ``A_ii + A_jj``, so the forward-Euler bound of the density
    equation applies with twice the outflow rate. The quadratic term adds
    the bound ``h * max(P_kk / R_kk) <= 0.9``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _, outflow = _generator(A, len(R.diag_values))
    quad = float(np.max(np.diag(P.matrix) * R.inverse, initial=0.0))
    rate = max(2.0 * outflow, quad)
    m = max(1, math.ceil(dt * rate / STABILITY_SAFETY - 1e-12))
    return m, dt / m


def _euler_covariance(P: np.ndarray, A, r_inv: np.ndarray, h: float) -> np.ndarray:
    AP = A @ P
    quad = (P * r_inv[None, :]) @ P
    return _symmetrize(P + h * (AP + AP.T - quad))


def riccati_step(
    P: CovarianceOperator, A: Generator, R: NoiseCovariance, dt: float
) -> CovarianceOperator:
    """Advance ``dP/dt = A P + P A^T - P R^-1 P`` by explicit Euler substeps."""
    n = len(R.diag_values)
    _check_dims(P.matrix, n)
    matrix, _ = _generator(A, n)
    m, h = riccati_substeps(P, A, R, dt)
    out = np.array(P.matrix, dtype=float, copy=True)
    r_inv = R.inverse
    for _ in range(m):
        out = _euler_covariance(out, matrix, r_inv, h)
    return CovarianceOperator(out, P.time + dt)


def _propagator(A: FpOperator, dt: float):
    m, h = stable_substep(A, dt)
    return m, step_matrix(A, h)


def predict(p: np.ndarray, P: Optional[np.ndarray], A: FpOperator, dt: float):
    """Propagate estimate and covariance through ``dt`` of the prior dynamics.

    Uses ``p <- F p`` and ``P <- F P F^T`` for each stable substep, so the
    estimate follows exactly the same arithmetic as :func:`fpops.advance`.
    ``P`` may be ``None`` to propagate the estimate only.
    """
    m, F = _propagator(A, dt)
    for _ in range(m):
        p = F @ p
    if P is None:
        return p, None
    if m <= _SPARSE_SUBSTEP_LIMIT:
        for _ in range(m):
            X = F @ P
            P = F @ np.ascontiguousarray(X.T)
    else:
        # Two dense GEMMs with the m-step propagator beat m sparse sandwiches.
        phi = F
        for _ in range(m - 1):
            phi = F @ phi
        phi = phi.toarray()
        P = (phi @ P) @ phi.T
    return p, _symmetrize(P)


def measurement_update(p: np.ndarray, P: np.ndarray, y: np.ndarray, R: NoiseCovariance, dt: float):
    """Closed-form integral of the measurement terms over ``dt`` (``A = 0``).

    With ``s = sqrt(dt / R)`` and ``W = I + S P S`` (``S = diag(s)``) the
    updated covariance is ``P+ = S^-1 (I - W^-1) S^-1`` and the gain applied
    to the innovation is ``dt P+ R^-1``. ``W`` has eigenvalues of at least one
    for any positive semidefinite ``P``, so its Cholesky factor is safe even
    when ``R`` sits at the density floor.
    """
    s = np.sqrt(dt * R.inverse)
    n = len(s)
    W = s[:, None] * P * s[None, :]
    W[np.diag_indices(n)] += 1.0
    c, info = lapack.dpotrf(W, lower=1, clean=1, overwrite_a=1)
    if info != 0:
        raise FloatingPointError("covariance lost positive semidefiniteness")
    w_inv, info = lapack.dpotri(c, lower=1, overwrite_c=1)
    if info != 0:
        raise FloatingPointError("could not invert the innovation matrix")
    w_inv = np.tril(w_inv) + np.tril(w_inv, -1).T
    r = 1.0 / s
    P_new = -(r[:, None] * w_inv * r[None, :])
    P_new[np.diag_indices(n)] += r * r
    P_new = _symmetrize(P_new)
    p_new = p + dt * (P_new @ (R.inverse * (y - p)))
    return p_new, P_new


def _finish(s: FilterState, p: np.ndarray, P: np.ndarray, dt: float, renormalize: bool) -> FilterState:
    grid = s.estimate.grid
    t = s.time + dt
    out = FilterState(DensityField.clamped(grid, p, t), CovarianceOperator(P, t), t)
    return renormalized(out) if renormalize else out


def _step_with_noise(
    s: FilterState,
    A: FpOperator,
    y: DensityField,
    R: NoiseCovariance,
    dt: float,
    renormalize: bool,
    scheme: str,
) -> FilterState:
    if y.grid != s.estimate.grid or A.grid != s.estimate.grid:
        raise ValueError("measurement, operator and estimate must share one grid")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = y.grid.size
    _check_dims(s.covariance.matrix, n)
    p = s.estimate.values.copy()
    P = s.covariance.matrix
    if scheme == "split":
        p, P = predict(p, P, A, dt)
        p, P = measurement_update(p, P, y.values, R, dt)
    elif scheme == "euler":
        m, h = riccati_substeps(s.covariance, A, R, dt)
        r_inv = R.inverse
        P = np.array(P, dtype=float, copy=True)
        for _ in range(m):
            gain = P * r_inv[None, :]
            p = p + h * (A.matrix @ p + gain @ (y.values - p))
            P = _euler_covariance(P, A.matrix, r_inv, h)
    else:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return _finish(s, p, P, dt, renormalize)


def filter_step(
    s: FilterState,
    A: FpOperator,
    y: DensityField,
    k: NoiseScale,
    dt: float,
    renormalize: bool = False,
    scheme: str = "split",
) -> FilterState:
    """Advance the suboptimal filter one step using ``R = kbar * diag(y)``."""
    return _step_with_noise(s, A, y, noise_covariance(y, k), dt, renormalize, scheme)


def oracle_filter_step(
    s: FilterState,
    A: FpOperator,
    y: DensityField,
    p_true: DensityField,
    k: NoiseScale,
    dt: float,
    renormalize: bool = False,
    scheme: str = "split",
) -> FilterState:
    """Same as :func:`filter_step` with the noise model built from the true density."""
    return _step_with_noise(s, A, y, noise_covariance(p_true, k), dt, renormalize, scheme)


def open_loop_step(s: FilterState, A: FpOperator, dt: float, renormalize: bool = False) -> FilterState:
    """Prediction only (zero gain); the covariance is carried along unchanged."""
    p, _ = predict(s.estimate.values.copy(), None, A, dt)
    return _finish(s, p, s.covariance.matrix, dt, renormalize)


def renormalized(s: FilterState) -> FilterState:
    """Rescale the estimate to unit mass; the covariance is left untouched."""
    mass = integrate(s.estimate)
    if not mass > 0:
        return s
    est = DensityField(s.estimate.grid, s.estimate.values / mass, s.estimate.time)
    return FilterState(est, s.covariance, s.time)
