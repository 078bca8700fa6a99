"""Command-line entry point.

Subcommands: simulate, beamform, evaluate, validate-forward, render, run-all.
Exit codes: 0 ok, 1 config error, 2 I/O error, 3 solver divergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, SolverDivergenceError
from .harness import (
    cmd_beamform,
    cmd_evaluate,
    cmd_run_all,
    cmd_simulate,
    cmd_validate_forward,
    render_pgm,
)
from .tensorio import read_tensor


def _common(p):
    p.add_argument("--config", type=Path, required=True, help="experiment INI file")
    p.add_argument("--replicas", type=int, help="override replica count")
    p.add_argument("--seed", type=int, help="override base seed")
    p.add_argument("--workers", type=int, help="override worker count")
    p.add_argument("--out", type=Path, help="override output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="tdpam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("simulate", "evaluate", "run-all"):
        _common(sub.add_parser(name))
    p = sub.add_parser("beamform")
    _common(p)
    p.add_argument("--method", required=True, choices=["tddas", "sp", "sptv", "spred"])
    p = sub.add_parser("validate-forward")
    _common(p)
    p.add_argument("--experiments", type=int, help="number of random scenes")
    p = sub.add_parser("render")
    p.add_argument("map_file", type=Path)
    p.add_argument("--range", dest="dynamic_range_db", type=float, default=40.0)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _load(args):
    cfg = load_config(args.config)
    if args.replicas is not None:
        cfg.replicas = args.replicas
    if args.seed is not None:
        cfg.base_seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.out is not None:
        cfg.output_dir = str(args.out)
    cfg.__post_init__()  # re-validate overrides
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "render":
            try:
                data = read_tensor(args.map_file)
            except (OSError, ValueError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            render_pgm(data, args.dynamic_range_db, args.out)
            print(f"wrote {args.out}")
            return 0
        cfg = _load(args)
        if args.command == "simulate":
            out = cmd_simulate(cfg)
            print(f"simulated {cfg.replicas} replica(s) into {out}")
        elif args.command == "beamform":
            out = cmd_beamform(cfg, args.method)
            print(f"beamformed method={args.method} into {out}")
        elif args.command == "evaluate":
            out = cmd_evaluate(cfg)
            print(f"evaluated into {out}")
        elif args.command == "validate-forward":
            mean, std, worst = cmd_validate_forward(cfg, args.experiments)
            print(f"forward-model NMSE mean={mean:.3e} std={std:.3e}")
            if mean > 1e-12:
                print(f"FAIL: mean NMSE above 1e-12 (worst scene seed {worst})")
                return 1
            print("PASS: mean NMSE <= 1e-12")
        elif args.command == "run-all":
            out = cmd_run_all(cfg)
            print(f"pipeline complete in {out}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except SolverDivergenceError as exc:
        print(f"solver divergence: {exc}", file=sys.stderr)
        return 3
    except (OSError, FileNotFoundError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
