"""Plain-text file formats for snapshots and time series.

Grid snapshot format::

    nx ny xmin xmax ymin ymax t
    v(0,0) v(1,0) ... v(nx-1,0)
    ...
    v(0,ny-1) ... v(nx-1,ny-1)

one line per grid row (fixed y), values in row-major order.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..grid import DensityField, build_grid


def _fmt(v: float) -> str:
    return repr(float(v))


def write_grid_text(path: Path, f: DensityField) -> None:
    g = f.grid
    header = [str(g.nx), str(g.ny)] + [_fmt(b) for b in g.bounds] + [_fmt(f.time)]
    lines = [" ".join(header)]
    for row in f.as_image():
        lines.append(" ".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_text(path: Path) -> DensityField:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 7:
            raise ValueError(f"{path}: header must have 7 fields, got {len(head)}")
        nx, ny = int(head[0]), int(head[1])
        xmin, xmax, ymin, ymax, t = (float(v) for v in head[2:])
        values = np.loadtxt(fh, ndmin=2)
    g = build_grid(nx, ny, (xmin, xmax, ymin, ymax))
    if values.shape != (ny, nx):
        raise ValueError(f"{path}: expected {ny}x{nx} values, got {values.shape}")
    return DensityField(g, values.ravel(), t)


def write_points(path: Path, points: np.ndarray, time: float) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# t={_fmt(time)}\n")
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in points:
            w.writerow([_fmt(x), _fmt(y)])


def read_points(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)


def write_table(path: Path, columns: Sequence[str], rows: Iterable[Sequence[float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([v if isinstance(v, (str, int)) else _fmt(v) for v in row])


def read_table(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [list(map(float, row)) for row in reader]
    arr = np.array(data, dtype=float).reshape(-1, len(header))
    return {name: arr[:, i] for i, name in enumerate(header)}


def write_json(path: Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
