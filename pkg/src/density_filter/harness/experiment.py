"""Filter-versus-KDE experiments on the spinning-mixture scenario.

Each sub-run (one seed, one bandwidth) simulates the agents, builds a KDE
per step, advances the filter and scores both estimates against the shared
ground-truth density.
"""

from __future__ import annotations

import datetime as _dt
import logging
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..dynamics import RNG_ALGORITHM, init_agents, step_agents
from ..filtering import (
    CovarianceOperator,
    FilterState,
    filter_step,
    init_filter,
    open_loop_step,
    oracle_filter_step,
    renormalized,
)
from ..grid import DensityField, integrate
from ..kde import KdeConfig, compute_kbar, kde_on_grid
from . import io
from .config import ScenarioConfig
from .truth import GroundTruth, scenario_for, solve_ground_truth

log = logging.getLogger(__name__)

COLUMNS = ("time", "l2_error_filter", "l2_error_kde", "mass_filter", "mass_kde", "trace_P")
KDE_ONLY_COLUMNS = ("time", "l2_error_kde", "mass_kde")
SUMMARY_COLUMNS = ("seed", "bandwidth", "mean_l2_filter", "mean_l2_kde")


class NumericalError(RuntimeError):
    def __init__(self, step: int, what: str):
        self.step = step
        super().__init__(f"non-finite {what} at step {step}")


def l2_error(a: DensityField, b: DensityField) -> float:
    if a.grid != b.grid:
        raise ValueError("cannot compare densities on different grids")
    return float(np.sqrt(np.sum((a.values - b.values) ** 2) * a.grid.cell_area))


@dataclass
class RunRecord:
    seed: int
    bandwidth: float
    columns: tuple[str, ...]
    rows: list[tuple[float, ...]]
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def time_average(self, name: str, start: float, end: Optional[float] = None) -> float:
        t = self.column("time")
        mask = t >= start - 1e-9
        if end is not None:
            mask &= t <= end + 1e-9
        if not mask.any():
            # run shorter than the averaging window: use the whole series
            log.warning("%s: no samples in averaging window, using all times", self.tag)
            mask[:] = True
        return float(np.mean(self.column(name)[mask]))

    @property
    def tag(self) -> str:
        return run_tag(self.seed, self.bandwidth)


def run_tag(seed: int, bandwidth: float) -> str:
    return f"seed{seed}_h{bandwidth:g}"


@dataclass
class ExperimentResult:
    config: ScenarioConfig
    truth: GroundTruth
    records: list[RunRecord]

    def summary_rows(self) -> list[tuple]:
        start = self.config.average_start
        rows = []
        for r in self.records:
            f = r.time_average("l2_error_filter", start) if "l2_error_filter" in r.columns else float("nan")
            rows.append((r.seed, r.bandwidth, f, r.time_average("l2_error_kde", start)))
        return rows

    def median_errors(self, bandwidth: float) -> tuple[float, float]:
        """Median over seeds of the time-averaged (filter, KDE) errors."""
        rows = [r for r in self.summary_rows() if r[1] == bandwidth]
        return float(np.median([r[2] for r in rows])), float(np.median([r[3] for r in rows]))


def _check_finite(step: int, **arrays) -> None:
    for name, arr in arrays.items():
        if not np.all(np.isfinite(arr)):
            raise NumericalError(step, name)


def _write_snapshot(folder: Path, k: int, ens, y, est, truth) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    io.write_points(folder / f"step{k:05d}_agents.csv", ens.positions, ens.time)
    io.write_grid_text(folder / f"step{k:05d}_kde.txt", y)
    io.write_grid_text(folder / f"step{k:05d}_truth.txt", truth)
    if est is not None:
        io.write_grid_text(folder / f"step{k:05d}_filter.txt", est)


def run_single(
    cfg: ScenarioConfig,
    truth: GroundTruth,
    seed: int,
    bandwidth: float,
    out_dir: Optional[Path] = None,
) -> RunRecord:
    """Run one seed/bandwidth pair; writes CSV, metadata and snapshots if ``out_dir``."""
    started = _time.perf_counter()
    g = truth.grid
    sc = scenario_for(cfg)
    v, d = sc.velocity_field(), sc.noise()
    kcfg = KdeConfig(bandwidth)
    kbar = compute_kbar(cfg.n_agents, kcfg)
    with_filter = cfg.mode != "kde-only"

    ens = init_agents(cfg.n_agents, g, seed)
    y = kde_on_grid(ens, g, kcfg)
    state = init_filter(y, cfg.p0_scale) if with_filter else None
    if cfg.mode == "open-loop":
        state = FilterState(state.estimate, CovarianceOperator(np.zeros((g.size, g.size))), 0.0)

    snap_dir = out_dir / "snapshots" / run_tag(seed, bandwidth) if out_dir is not None else None
    rows = []
    min_estimate = np.inf

    def record(k, raw_mass):
        p_true = truth.fields[k]
        row = [truth.times[k]]
        if with_filter:
            row += [l2_error(state.estimate, p_true), l2_error(y, p_true)]
            row += [raw_mass, integrate(y), state.covariance.trace()]
        else:
            row += [l2_error(y, p_true), integrate(y)]
        rows.append(tuple(float(x) for x in row))
        if snap_dir is not None and cfg.snapshot_every and k % cfg.snapshot_every == 0:
            _write_snapshot(snap_dir, k, ens, y, state.estimate if with_filter else None, p_true)

    record(0, integrate(state.estimate) if with_filter else None)
    for k in range(cfg.n_steps):
        A = truth.operators[k]
        ens = step_agents(ens, v, d, cfg.dt)
        y = kde_on_grid(ens, g, kcfg)
        _check_finite(k + 1, kde=y.values, agents=ens.positions)
        raw_mass = None
        if with_filter:
            if cfg.mode == "filter":
                state = filter_step(state, A, y, kbar, cfg.dt, scheme=cfg.scheme)
            elif cfg.mode == "oracle":
                state = oracle_filter_step(
                    state, A, y, truth.fields[k + 1], kbar, cfg.dt, scheme=cfg.scheme
                )
            else:
                state = open_loop_step(state, A, cfg.dt)
            _check_finite(k + 1, estimate=state.estimate.values, covariance_trace=state.covariance.trace())
            raw_mass = integrate(state.estimate)
            if cfg.renormalize:
                state = renormalized(state)
            min_estimate = min(min_estimate, float(state.estimate.values.min()))
        record(k + 1, raw_mass)

    columns = COLUMNS if with_filter else KDE_ONLY_COLUMNS
    metadata = {
        "config": cfg.to_dict(),
        "version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "seed": seed,
        "bandwidth": bandwidth,
        "kbar": kbar.kbar,
        "columns": list(columns),
        "min_filter_estimate": None if not with_filter else min_estimate,
        "elapsed_seconds": _time.perf_counter() - started,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    rec = RunRecord(seed, bandwidth, columns, rows, metadata)
    if out_dir is not None:
        run_dir = out_dir / "runs"
        run_dir.mkdir(parents=True, exist_ok=True)
        io.write_table(run_dir / f"{rec.tag}.csv", columns, rows)
        io.write_json(run_dir / f"{rec.tag}.json", metadata)
    log.info("finished %s in %.1fs", rec.tag, metadata["elapsed_seconds"])
    return rec


def _run_job(args):
    return run_single(*args)


def run_experiment(
    cfg: ScenarioConfig, write: bool = True, truth: Optional[GroundTruth] = None
) -> ExperimentResult:
    """Run every seed x bandwidth sub-run against one shared ground truth."""
    cfg.validate()
    out_dir = Path(cfg.output_dir) if write else None
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    if truth is None:
        truth = solve_ground_truth(cfg)
    jobs = [(cfg, truth, s, h, out_dir) for s in cfg.seeds for h in cfg.bandwidths]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = [_run_job(j) for j in jobs]
    result = ExperimentResult(cfg, truth, records)
    if out_dir is not None:
        io.write_table(out_dir / "summary.csv", SUMMARY_COLUMNS, result.summary_rows())
        medians = [(h, *result.median_errors(h)) for h in cfg.bandwidths]
        io.write_table(
            out_dir / "medians.csv", ("bandwidth", "median_l2_filter", "median_l2_kde"), medians
        )
        if cfg.plots:
            from .plotting import render_all

            render_all(out_dir)
    return result
