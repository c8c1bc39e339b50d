"""Reference density from the Fokker-Planck equation of the scenario."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import MixtureScenario
from ..fpops import FpOperator, advance, assemble_operator
from ..grid import DensityField, Grid, build_grid
from .config import ScenarioConfig


@dataclass
class GroundTruth:
    """Operators and reference densities at every outer step.

    ``operators[k]`` is assembled at ``times[k]`` and advances
    ``fields[k]`` to ``fields[k + 1]``.
    """

    grid: Grid
    times: np.ndarray
    fields: list[DensityField]
    operators: list[FpOperator]


def scenario_for(cfg: ScenarioConfig) -> MixtureScenario:
    return MixtureScenario(diffusion=cfg.diffusion)


def grid_for(cfg: ScenarioConfig) -> Grid:
    return build_grid(cfg.nx, cfg.ny, cfg.bounds)


def solve_ground_truth(cfg: ScenarioConfig) -> GroundTruth:
    """Start from the uniform density and step the PDE with the shared operators."""
    g = grid_for(cfg)
    sc = scenario_for(cfg)
    v, d = sc.velocity_field(), sc.noise()
    area = (g.xmax - g.xmin) * (g.ymax - g.ymin)
    p = np.full(g.size, 1.0 / area)
    times = cfg.dt * np.arange(cfg.n_steps + 1)
    fields = [DensityField(g, p, 0.0)]
    operators = []
    for k in range(cfg.n_steps):
        a = assemble_operator(g, v, d, times[k])
        operators.append(a)
        p = advance(a, p, cfg.dt)
        fields.append(DensityField(g, p, times[k + 1]))
    return GroundTruth(g, times, fields, operators)


def ground_truth_solve(cfg: ScenarioConfig) -> list[DensityField]:
    return solve_ground_truth(cfg).fields
