"""Experiment harness: configuration, ground truth, runs, output files and figures."""

from .config import ConfigError, ScenarioConfig, parse_config
from .experiment import ExperimentResult, RunRecord, l2_error, run_experiment, run_single
from .truth import GroundTruth, solve_ground_truth

__all__ = [
    "ConfigError",
    "ExperimentResult",
    "GroundTruth",
    "RunRecord",
    "ScenarioConfig",
    "l2_error",
    "parse_config",
    "run_experiment",
    "run_single",
    "solve_ground_truth",
]
