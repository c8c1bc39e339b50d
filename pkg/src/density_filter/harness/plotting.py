"""Static figures rendered from a run directory's CSV and snapshot files."""

from __future__ import annotations

import re
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import io  # noqa: E402

_TAG = re.compile(r"seed(?P<seed>-?\d+)_h(?P<h>[0-9.eE+-]+)$")
ROW_KINDS = (("agents", "Agents"), ("kde", "KDE"), ("filter", "Filter"), ("truth", "Ground truth"))


def _runs(out_dir: Path):
    runs = defaultdict(dict)
    for path in sorted((out_dir / "runs").glob("*.csv")):
        m = _TAG.match(path.stem)
        if m:
            runs[float(m["h"])][int(m["seed"])] = io.read_table(path)
    return runs


def plot_error_curves(out_dir: Path, path: Path) -> Path:
    """KDE (solid) and filter (dashed) L2 errors, median over seeds, one colour per bandwidth."""
    runs = _runs(out_dir)
    if not runs:
        raise FileNotFoundError(f"no run CSV files under {out_dir / 'runs'}")
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    colors = plt.cm.viridis(np.linspace(0.1, 0.85, len(runs)))
    for color, h in zip(colors, sorted(runs)):
        tables = list(runs[h].values())
        t = tables[0]["time"]
        kde = np.median([tb["l2_error_kde"] for tb in tables], axis=0)
        ax.plot(t, kde, "-", color=color, label=f"KDE, h={h:g}")
        if "l2_error_filter" in tables[0]:
            filt = np.median([tb["l2_error_filter"] for tb in tables], axis=0)
            ax.plot(t, filt, "--", color=color, label=f"filter, h={h:g}")
    ax.set_xlabel("time")
    ax.set_ylabel(r"$L^2$ error")
    ax.legend(fontsize=8, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def _snap_name(step: str, kind: str) -> str:
    return f"{step}_{kind}.csv" if kind == "agents" else f"{step}_{kind}.txt"


def plot_snapshots(snap_dir: Path, path: Path) -> Path:
    """Grid of agents / KDE / filter / truth (rows) at each snapshot step (columns)."""
    steps = sorted({p.name.split("_")[0] for p in snap_dir.glob("step*_truth.txt")})
    if not steps:
        raise FileNotFoundError(f"no snapshots in {snap_dir}")
    kinds = [(k, label) for k, label in ROW_KINDS if (snap_dir / _snap_name(steps[0], k)).exists()]
    fig, axes = plt.subplots(
        len(kinds), len(steps), figsize=(2.2 * len(steps), 2.2 * len(kinds)), squeeze=False
    )
    for col, step in enumerate(steps):
        truth = io.read_grid_text(snap_dir / f"{step}_truth.txt")
        extent = truth.grid.bounds
        for row, (kind, label) in enumerate(kinds):
            ax = axes[row, col]
            if kind == "agents":
                pts = io.read_points(snap_dir / f"{step}_agents.csv")
                ax.scatter(pts[:, 0], pts[:, 1], s=2, color="k")
                ax.set_xlim(extent[0], extent[1])
                ax.set_ylim(extent[2], extent[3])
                ax.set_aspect("equal")
            else:
                f = io.read_grid_text(snap_dir / f"{step}_{kind}.txt")
                ax.imshow(f.as_image(), origin="lower", extent=extent, cmap="viridis")
            ax.set_xticks([])
            ax.set_yticks([])
            if col == 0:
                ax.set_ylabel(label)
            if row == 0:
                ax.set_title(f"t = {truth.time:g}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_all(out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = [plot_error_curves(out_dir, fig_dir / "errors.png")]
    snaps = out_dir / "snapshots"
    if snaps.is_dir():
        for d in sorted(p for p in snaps.iterdir() if p.is_dir()):
            written.append(plot_snapshots(d, fig_dir / f"snapshots_{d.name}.png"))
    return written
