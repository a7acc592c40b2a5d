"""Command-line entry point: qboltz <command> --config <path> [--out DIR].

Exit codes: 0 success, 2 config error, 3 numerical-guard abort.
"""

from __future__ import annotations

import argparse
import os
import sys

from .collision import CollisionError
from .config import ConfigError, parse_config, validate_for_command
from .fock import NormDriftError
from .harness import RUNNERS, RunContext
from .hierarchy import SolverAbortMemory
from .kinetic import SolverAbort

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARD = 3


def _cap_threads(n: int) -> None:
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ[var] = str(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qboltz",
        description="Exact lattice fermion dynamics vs the discrete quantum Boltzmann equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("exact", "evolve a Slater state exactly and log mode occupations"),
        ("kinetic", "integrate the homogeneous quantum Boltzmann equation"),
        ("memory", "march the non-Markovian memory-kernel equation"),
        ("audit", "measure restricted-quasifreeness residuals along an exact run"),
        ("sweep", "weak-coupling convergence study: exact vs Boltzmann vs memory"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="path to a key = value config file")
        p.add_argument("--out", default=".", help="output directory (default: cwd)")
        p.add_argument("--threads", type=int, default=None, help="cap worker threads globally")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        _cap_threads(args.threads)
    try:
        cfg = parse_config(args.config)
        validate_for_command(cfg, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    ctx = RunContext(cfg, args.command, args.out)
    try:
        RUNNERS[args.command](cfg, ctx)
    except (SolverAbort, SolverAbortMemory, NormDriftError, CollisionError) as exc:
        print(f"numerical guard abort: {exc}", file=sys.stderr)
        ctx.finish(status="failed")
        return EXIT_GUARD
    manifest = ctx.finish(status="ok")
    print(f"wrote {len(ctx.outputs)} output file(s); manifest: {manifest}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
