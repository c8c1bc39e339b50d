"""Command line entry point: ``density-filter run | plot | validate-config``.

Exit codes: 0 success, 2 invalid configuration or usage, 3 I/O failure,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import MODES, OUTPUT_ENV, ConfigError, parse_config
from ..filtering import SCHEMES

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML or JSON scenario file")
    p.add_argument("--agents", type=int, dest="n_agents")
    p.add_argument("--diffusion", type=float)
    p.add_argument("--grid", type=int, nargs=2, metavar=("NX", "NY"))
    p.add_argument("--bounds", type=float, nargs=4, metavar=("XMIN", "XMAX", "YMIN", "YMAX"))
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--bandwidth", type=float, action="append", dest="bandwidths",
                   help="KDE bandwidth; repeat for a sweep")
    p.add_argument("--seed", type=int, action="append", dest="seeds", help="repeatable")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--renormalize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--snapshot-every", type=int, dest="snapshot_every")
    p.add_argument("--p0-scale", type=float, dest="p0_scale")
    p.add_argument("--average-start", type=float, dest="average_start")
    p.add_argument("--plots", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", type=str, dest="output_dir",
                   help=f"output directory (default ${OUTPUT_ENV} or ./runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="density-filter", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _scenario_flags(sub.add_parser("run", help="run the filter-vs-KDE experiment"))
    _scenario_flags(sub.add_parser("validate-config", help="check a configuration and print it"))
    plot = sub.add_parser("plot", help="render figures from an existing run directory")
    plot.add_argument("run_dir", type=Path)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    keys = ("n_agents", "diffusion", "bounds", "dt", "t_end", "bandwidths", "seeds", "mode",
            "scheme", "renormalize", "snapshot_every", "p0_scale", "average_start", "plots",
            "jobs", "output_dir")
    out = {k: getattr(args, k) for k in keys}
    if args.grid is not None:
        out["nx"], out["ny"] = args.grid
    return out


def _print_medians(result) -> None:
    print("bandwidth,median_l2_filter,median_l2_kde")
    for h in result.config.bandwidths:
        f, k = result.median_errors(h)
        print(f"{h:g},{f:.6g},{k:.6g}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            from .plotting import render_all

            for path in render_all(args.run_dir):
                print(path)
            return 0
        cfg = parse_config(args.config, _overrides(args))
        if args.command == "validate-config":
            import yaml

            print(yaml.safe_dump(cfg.to_dict(), sort_keys=False), end="")
            return 0
        from .experiment import NumericalError, run_experiment

        try:
            result = run_experiment(cfg)
        except NumericalError as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return EXIT_NUMERICAL
        _print_medians(result)
        return 0
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
