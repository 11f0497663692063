"""Command line entry point: ``tvsbl <command> [options]``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import TvsblError
from .config import ExperimentConfig, load_config, parse_seeds, preset
from .output import svg_heatmap, svg_lines, write_signal
from .runner import make_truth, run_denoise_1d, run_denoise_2d, run_sweep
from .selftest import main as selftest_main

__all__ = ["main", "build_parser"]


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="TOML experiment config")
    p.add_argument("--out", type=Path, help="output directory (overrides the config)")
    p.add_argument("--seeds", help="seed list such as 0-19 or 0,3,5")
    p.add_argument("--snr", type=float, help="target SNR in dB")
    p.add_argument("--solver", action="append",
                   help="analysis, synthesis, sbl-em or sbl-fast; repeat or comma-separate")
    p.add_argument("--size", type=int, help="signal length or image side")
    p.add_argument("--workers", type=int, help="concurrent trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tvsbl", description="TV sparse Bayesian learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="write a phantom as CSV (and optionally SVG)")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, default=Path("phantom"))
    p.add_argument("--size", type=int)
    p.add_argument("--kind", choices=["slice", "image"], default="slice")
    p.add_argument("--variant", choices=["original", "modified"])
    p.add_argument("--svg", action="store_true")

    for name, helptext in [("denoise1d", "1D slice denoising trials"),
                           ("denoise2d", "2D phantom denoising trials"),
                           ("sweep", "lambda grid study for the MAP solvers")]:
        p = sub.add_parser(name, help=helptext)
        _common(p)
        if name == "sweep":
            p.add_argument("--two-d", action="store_true", help="sweep on the 2D phantom")

    p = sub.add_parser("selftest", help="run the invariant checks; exit status 1 on failure")
    p.add_argument("--corrupt-pseudoinverse", action="store_true", help=argparse.SUPPRESS)
    return parser


def _configure(args, kind: str) -> ExperimentConfig:
    config = load_config(args.config, preset(kind)) if args.config else preset(kind)
    changes = {}
    if args.out:
        changes["out_dir"] = str(args.out)
    if args.solver:
        changes["solvers"] = [s.strip() for item in args.solver for s in item.split(",") if s.strip()]
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    noise = {}
    if args.seeds:
        noise["seeds"] = parse_seeds(args.seeds)
    if args.snr is not None:
        noise["snr_db"] = args.snr
    if noise:
        changes["noise"] = dataclasses.replace(config.noise, **noise)
    if args.size:
        changes["phantom"] = dataclasses.replace(config.phantom, size=args.size)
    return dataclasses.replace(config, **changes).validate()


def _summary(restorations):
    by_solver = {}
    for r in restorations:
        by_solver.setdefault(r.solver, []).append(r.relative_error)
    for solver, res in sorted(by_solver.items()):
        res = np.asarray(res, dtype=float)
        print(f"{solver:>10}: median RE {np.nanmedian(res):.4f} over {res.size} trial(s)")


def _phantom(args) -> int:
    config = load_config(args.config) if args.config else ExperimentConfig()
    ph = config.phantom
    name = "shepp-logan" if args.kind == "image" else "shepp-logan-slice"
    changes = {"name": name}
    if args.size:
        changes["size"] = args.size
    if args.variant:
        changes["variant"] = args.variant
    config = dataclasses.replace(config, phantom=dataclasses.replace(ph, **changes)).validate()
    truth = make_truth(config)
    args.out.mkdir(parents=True, exist_ok=True)
    path = write_signal(args.out / f"{name}-{config.phantom.size}.csv", truth)
    if args.svg:
        if truth.ndim == 1:
            svg_lines(path.with_suffix(".svg"), {"phantom": truth}, title=path.stem)
        else:
            svg_heatmap(path.with_suffix(".svg"), truth, title=path.stem)
    print(path)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "selftest":
            return selftest_main(corrupt_pseudoinverse=args.corrupt_pseudoinverse)
        if args.command == "phantom":
            return _phantom(args)
        if args.command == "denoise1d":
            config = _configure(args, "denoise1d")
            restorations = run_denoise_1d(config)
        elif args.command == "denoise2d":
            config = _configure(args, "denoise2d")
            restorations = run_denoise_2d(config)
        else:
            config = _configure(args, "denoise2d" if args.two_d else "denoise1d")
            restorations = run_sweep(config)
    except (TvsblError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _summary(restorations)
    print(f"results written to {Path(config.out_dir) / 'results.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
