"""Command line entry point: ``mb4nls {run,compare,bench,converge,scheme}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    compare_methods,
    convergence_study,
    load_config,
    parallel_bench,
    relative_drift,
    run,
)
from .newton import NonConvergence

_OVERRIDES = [
    ("--lx", float), ("--ly", float), ("--nx", int), ("--ny", int),
    ("--t-end", float), ("--dt", float), ("--gamma", float), ("--v0", float),
    ("--method", str), ("--newton-eps", float), ("--newton-roundoff", float),
    ("--max-iters", int), ("--max-halvings", int),
    ("--workers", int), ("--snapshot-times", str), ("--linear-solver", str),
]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value parameter file")
    common.add_argument("--out", help="output directory")
    for flag, kind in _OVERRIDES:
        common.add_argument(flag, type=kind, default=None)
    common.add_argument("--uniform", dest="uniform_init", action="store_const", const=True, default=None,
                        help="start from the normalized uniform state")
    common.add_argument("--raw-participation", action="store_const", const=True, default=None,
                        help="report sum |u|^4 without normalization")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mb4nls", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single trajectory")
    cmp_ = sub.add_parser("compare", parents=[common], help="conservation and cost of several methods")
    cmp_.add_argument("--methods", default="GAUSS2,AVF2,GAUSS4,AVF4,MB4,RK4")
    bench = sub.add_parser("bench", parents=[common], help="serial vs 3-worker MB4")
    bench.add_argument("--bench-workers", type=int, default=3)
    conv = sub.add_parser("converge", parents=[common], help="empirical order of accuracy")
    conv.add_argument("--h-list", default="0.02,0.01,0.005")
    sub.add_parser("scheme", help="print the MB4 constants")
    return p


def _config(args):
    overrides = {flag.lstrip("-").replace("-", "_"): getattr(args, flag.lstrip("-").replace("-", "_"))
                 for flag, _ in _OVERRIDES}
    overrides["out"] = args.out
    overrides["uniform_init"] = args.uniform_init
    overrides["raw_participation"] = args.raw_participation
    return load_config(args.config, **overrides)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "scheme":
        from .mb4 import default_scheme
        sys.stdout.write(default_scheme().dump())
        return 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            traj = run(cfg)
            print(f"{len(traj.rows) - 1} steps, t={traj.rows[-1][0]:g}, "
                  f"max relative energy drift {relative_drift(traj.column('H')):.3e}, "
                  f"probability drift {relative_drift(traj.column('prob')):.3e}")
        elif args.command == "compare":
            print(compare_methods(cfg, [m.strip() for m in args.methods.split(",") if m.strip()]).render(), end="")
        elif args.command == "bench":
            print(parallel_bench(cfg, args.bench_workers).render(), end="")
        elif args.command == "converge":
            h_list = [float(h) for h in args.h_list.split(",")]
            print(convergence_study(cfg, h_list).render(), end="")
    except NonConvergence as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
