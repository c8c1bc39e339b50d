"""Scenario configuration: defaults, file parsing and validation."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from ..filtering import SCHEMES

MODES = ("filter", "kde-only", "oracle", "open-loop")
OUTPUT_ENV = "DENSITY_FILTER_OUT"


class ConfigError(ValueError):
    """Raised with every problem found in a configuration."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _default_output() -> str:
    return os.environ.get(OUTPUT_ENV, "runs")


@dataclass
class ScenarioConfig:
    n_agents: int = 300
    diffusion: float = 0.05
    nx: int = 30
    ny: int = 30
    bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    dt: float = 0.1
    t_end: float = 30.0
    bandwidths: list[float] = field(default_factory=lambda: [0.05])
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    renormalize: bool = True
    mode: str = "filter"
    output_dir: str = field(default_factory=_default_output)
    snapshot_every: int = 50
    scheme: str = "split"
    p0_scale: float = 1.0
    average_start: float = 10.0
    plots: bool = False
    jobs: int = 1

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def problems(self) -> list[str]:
        out = []
        if not self.dt > 0:
            out.append(f"dt: must be positive, got {self.dt}")
        if not self.t_end > 0:
            out.append(f"t_end: must be positive, got {self.t_end}")
        elif self.dt > 0 and abs(self.n_steps * self.dt - self.t_end) > 1e-9 * self.t_end:
            out.append(f"t_end: {self.t_end} is not a whole number of dt={self.dt} steps")
        if self.n_agents < 1:
            out.append(f"n_agents: must be at least 1, got {self.n_agents}")
        if not self.diffusion > 0:
            out.append(f"diffusion: must be positive, got {self.diffusion}")
        if self.nx < 3 or self.ny < 3:
            out.append(f"nx, ny: need at least 3 cells per axis, got {self.nx}x{self.ny}")
        if len(self.bounds) != 4:
            out.append(f"bounds: expected 4 numbers, got {len(self.bounds)}")
        else:
            xmin, xmax, ymin, ymax = self.bounds
            if not (xmax > xmin and ymax > ymin):
                out.append(f"bounds: degenerate domain {list(self.bounds)}")
        if not self.bandwidths:
            out.append("bandwidths: at least one bandwidth is required")
        elif any(not h > 0 for h in self.bandwidths):
            out.append(f"bandwidths: all must be positive, got {self.bandwidths}")
        if not self.seeds:
            out.append("seeds: at least one seed is required")
        if self.mode not in MODES:
            out.append(f"mode: must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.scheme not in SCHEMES:
            out.append(f"scheme: must be one of {', '.join(SCHEMES)}, got {self.scheme!r}")
        if self.snapshot_every < 0:
            out.append(f"snapshot_every: must be >= 0, got {self.snapshot_every}")
        if not self.p0_scale > 0:
            out.append(f"p0_scale: must be positive, got {self.p0_scale}")
        if self.jobs < 1:
            out.append(f"jobs: must be at least 1, got {self.jobs}")
        return out

    def validate(self) -> "ScenarioConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["bounds"] = list(self.bounds)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_INT_FIELDS = {"n_agents", "nx", "ny", "snapshot_every", "jobs"}
_FLOAT_FIELDS = {"diffusion", "dt", "t_end", "p0_scale", "average_start"}


def _coerce(key: str, value: Any) -> Any:
    if key in _INT_FIELDS:
        if isinstance(value, bool) or int(value) != value:
            raise TypeError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if key in _FLOAT_FIELDS:
        return float(value)
    if key == "bounds":
        return tuple(float(b) for b in value)
    if key == "bandwidths":
        return [float(h) for h in (value if isinstance(value, (list, tuple)) else [value])]
    if key == "seeds":
        return [int(s) for s in (value if isinstance(value, (list, tuple)) else [value])]
    if key in ("renormalize", "plots"):
        if not isinstance(value, bool):
            raise TypeError(f"{key}: expected true/false, got {value!r}")
        return value
    return str(value)


def config_from_mapping(data: Optional[Mapping[str, Any]]) -> ScenarioConfig:
    """Build a config from a mapping, filling defaults and validating."""
    data = dict(data or {})
    problems = [f"unknown key {k!r}" for k in data if k not in _FIELDS]
    kwargs = {}
    for key, value in data.items():
        if key not in _FIELDS:
            continue
        try:
            kwargs[key] = _coerce(key, value)
        except (TypeError, ValueError) as exc:
            problems.append(str(exc) if key in str(exc) else f"{key}: {exc}")
    cfg = ScenarioConfig(**kwargs)
    problems += cfg.problems()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_mapping(path: Union[str, Path]) -> dict[str, Any]:
    """Read a YAML or JSON file into a dict; parse errors cite the line."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        try:
            data = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}:{exc.lineno}: {exc.msg}"]) from exc
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
            raise ConfigError([f"{where}: {getattr(exc, 'problem', exc)}"]) from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return data


def parse_config(
    path: Optional[Union[str, Path]] = None, overrides: Optional[Mapping[str, Any]] = None
) -> ScenarioConfig:
    """Defaults, then values from ``path``, then ``overrides`` (e.g. CLI flags)."""
    data = load_mapping(path) if path is not None else {}
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(data)
