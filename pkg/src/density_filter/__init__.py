"""Kalman-style filtering of swarm densities on a finite-volume grid."""

from .dynamics import (
    AgentEnsemble,
    DiffusionModel,
    MixtureScenario,
    VelocityField,
    init_agents,
    step_agents,
)
from .filtering import (
    CovarianceOperator,
    FilterState,
    NoiseCovariance,
    filter_step,
    init_filter,
    kalman_gain,
    noise_covariance,
    riccati_step,
)
from .fpops import DiffusionField, FpOperator, advance, apply_operator, assemble_operator
from .grid import DensityField, Grid, build_grid, integrate, locate_cell
from .kde import KdeConfig, NoiseScale, compute_kbar, kde_on_grid

__version__ = "0.1.0"

__all__ = [
    "AgentEnsemble",
    "CovarianceOperator",
    "DensityField",
    "DiffusionField",
    "DiffusionModel",
    "FilterState",
    "FpOperator",
    "Grid",
    "KdeConfig",
    "MixtureScenario",
    "NoiseCovariance",
    "NoiseScale",
    "VelocityField",
    "advance",
    "apply_operator",
    "assemble_operator",
    "build_grid",
    "compute_kbar",
    "filter_step",
    "init_agents",
    "init_filter",
    "integrate",
    "kalman_gain",
    "kde_on_grid",
    "locate_cell",
    "noise_covariance",
    "riccati_step",
    "step_agents",
]
