"""Agent dynamics: drift fields, isotropic noise and reflected SDE simulation.

Agents follow ``dX = v(X, t) dt + sigma dB`` inside a rectangle with specular
reflection at the walls, the particle counterpart of a zero-flux boundary.
Integration is Euler-Maruyama.

Random numbers come from numpy's ``Generator`` with the PCG64 bit generator
(:data:`RNG_ALGORITHM`), seeded from the ensemble seed. One generator drives
the whole ensemble, so trajectories are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .grid import Grid

RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

PointFunction = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class VelocityField:
    """Deterministic drift ``v(x, t)``.

    ``evaluate`` maps an ``(m, 2)`` array of points and a time to an
    ``(m, 2)`` array of velocities. ``partials`` optionally returns the
    diagonal derivatives ``(dv1/dx1, dv2/dx2)`` in the same layout; when it is
    missing, :meth:`diagonal_partials` falls back to central differences.
    """

    evaluate: PointFunction
    partials: Optional[PointFunction] = None

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.asarray(self.evaluate(x[None, :], t))[0]
        return np.asarray(self.evaluate(x, t))

    def diagonal_partials(self, x: np.ndarray, t: float, step: float = 1e-6) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.partials is not None:
            return np.asarray(self.partials(x, t))
        out = np.empty_like(x)
        for axis in range(2):
            e = np.zeros(2)
            e[axis] = step
            out[:, axis] = (self.evaluate(x + e, t)[:, axis] - self.evaluate(x - e, t)[:, axis]) / (
                2 * step
            )
        return out

    @classmethod
    def constant(cls, v: tuple[float, float]) -> "VelocityField":
        v = np.asarray(v, dtype=float)
        return cls(
            lambda x, t: np.broadcast_to(v, np.shape(x)).copy(),
            lambda x, t: np.zeros(np.shape(x)),
        )

    @classmethod
    def zero(cls) -> "VelocityField":
        return cls.constant((0.0, 0.0))


@dataclass(frozen=True)
class DiffusionModel:
    """Isotropic noise ``sigma * I``; the diffusion tensor is ``sigma**2 / 2 * I``."""

    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    @property
    def dcoef(self) -> float:
        return 0.5 * self.sigma**2


@dataclass(frozen=True)
class MixtureScenario:
    """Two equal-weight Gaussian components spinning around the domain centre.

    The agents climb the log-density of the mixture ``f``:
    ``v(x, t) = D * grad f(x, t) / f(x, t)`` with noise level ``sigma = D``,
    so the density obeys ``dp/dt = -div(D p grad f / f) + D**2 / 2 * lap p``.
    """

    diffusion: float = 0.05
    variance: float = 0.015
    radius: float = 0.35
    omega: float = 0.2
    center: tuple[float, float] = (0.5, 0.5)

    def means(self, t: float) -> np.ndarray:
        """Component means, shape ``(2, 2)``; the second is the first rotated by pi."""
        phase = self.omega * t + np.array([0.0, np.pi])
        cx, cy = self.center
        return np.column_stack([cx + self.radius * np.cos(phase), cy + self.radius * np.sin(phase)])

    def _log_components(self, x: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        diff = x[:, None, :] - self.means(t)[None, :, :]  # (m, 2 comps, 2 dims)
        logc = (
            np.log(0.5)
            - np.log(2 * np.pi * self.variance)
            - 0.5 * np.sum(diff**2, axis=-1) / self.variance
        )
        return logc, diff

    def density(self, x: np.ndarray, t: float) -> np.ndarray:
        logc, _ = self._log_components(x, t)
        return np.exp(logc).sum(axis=1)

    def grad_log_density(self, x: np.ndarray, t: float) -> np.ndarray:
        logc, diff = self._log_components(x, t)
        # Responsibilities via a stable softmax so far-field points do not underflow.
        w = np.exp(logc - logc.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        return -np.einsum("mc,mcd->md", w, diff) / self.variance

    def drift(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.diffusion * self.grad_log_density(x, t)

    def velocity_field(self) -> VelocityField:
        return VelocityField(self.drift)

    def noise(self) -> DiffusionModel:
        return DiffusionModel(self.diffusion)


def drift_eval(s: MixtureScenario, x, t: float) -> np.ndarray:
    """Drift of the mixture scenario at a single point or an ``(m, 2)`` batch."""
    x = np.asarray(x, dtype=float)
    out = s.drift(np.atleast_2d(x), t)
    return out[0] if x.ndim == 1 else out


@dataclass(frozen=True)
class AgentEnsemble:
    """Agent positions at a common time.

    ``rng`` is advanced in place by :func:`step_agents`; successive ensembles
    from one trajectory share it.
    """

    positions: np.ndarray
    time: float
    rng_seed: int
    bounds: tuple[float, float, float, float]
    rng: np.random.Generator

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def init_agents(n: int, g: Grid, seed: int, time: float = 0.0) -> AgentEnsemble:
    """Draw ``n`` agents uniformly over the grid's domain."""
    if n < 1:
        raise ValueError(f"ensemble needs at least one agent, got n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    lo = np.array([g.xmin, g.ymin])
    hi = np.array([g.xmax, g.ymax])
    positions = lo + (hi - lo) * rng.random((n, 2))
    return AgentEnsemble(positions, float(time), int(seed), g.bounds, rng)


def reflect(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Fold coordinates back into ``[lo, hi]`` by repeated specular reflection."""
    x = np.array(x, dtype=float, copy=True)
    while True:
        below = x < lo
        above = x > hi
        if not (below.any() or above.any()):
            return x
        x[below] = 2 * lo - x[below]
        x[above] = 2 * hi - x[above]


def step_agents(
    e: AgentEnsemble, v: VelocityField, d: DiffusionModel, dt: float
) -> AgentEnsemble:
    """One Euler-Maruyama step followed by wall reflection."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = e.positions
    noise = e.rng.standard_normal(x.shape)
    proposal = x + v(x, e.time) * dt + d.sigma * np.sqrt(dt) * noise
    xmin, xmax, ymin, ymax = e.bounds
    new = np.column_stack([reflect(proposal[:, 0], xmin, xmax), reflect(proposal[:, 1], ymin, ymax)])
    return replace(e, positions=new, time=e.time + dt)
