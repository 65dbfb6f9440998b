"""Command-line front end: ``liesym <command> SYSTEM.sys [options]``."""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .pipeline import COMMANDS, RunConfig, run_pipeline
from .system import SystemDefError, load_system

_TOLS = ("decomp", "fi", "rank", "commute")


def _point(text: str) -> list[float]:
    try:
        return [float(c) for c in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="liesym",
        description="Extract and verify first integrals and Poisson structures of a system.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "check": "independence of the symmetries and their commutation with the field",
        "integrals": "structure functions, first-integral candidates and independence",
        "poisson": "Poisson pair, rank, Casimir probes and the Poisson-vector-field test",
        "hamcheck": "Hamiltonian realization and 2D reconstruction",
        "flow": "integrate the field and check drift and bivector invariance",
        "report": "every stage",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("system", help="path to a .sys file (bundled names also accepted)")
        p.add_argument("--json", action="store_true", help="emit the JSON report")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--samples", type=int, default=None,
                       help="construction sample count (verification uses twice as many)")
        p.add_argument("--verify-samples", type=int, default=None)
        for t in _TOLS:
            p.add_argument(f"--tol-{t}", type=float, default=None, metavar="TOL")
        p.add_argument("--x0", type=_point, action="append", default=None,
                       help="flow start point, e.g. 1,2 (repeatable)")
        p.add_argument("--t-end", type=float, default=1.0)
        p.add_argument("--flow-tol", type=float, default=1e-10)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        system = load_system(args.system)
        n = args.samples or 100
        cfg = RunConfig(
            n_construction=n,
            n_verification=args.verify_samples or 2 * n,
            seed=args.seed,
            tolerances={t: v for t in _TOLS if (v := getattr(args, f"tol_{t}")) is not None},
            flow_x0=args.x0,
            flow_t_end=args.t_end,
            flow_tol=args.flow_tol,
            output="json" if args.json else "text",
        )
    except (OSError, SystemDefError, ValueError) as err:
        print(f"liesym: error: {err}", file=sys.stderr)
        return 2
    if cfg.flow_x0 and any(len(x) != system.dim for x in cfg.flow_x0):
        print(f"liesym: error: --x0 needs {system.dim} coordinates", file=sys.stderr)
        return 2
    report = run_pipeline(system, cfg, COMMANDS[args.command])
    sys.stdout.write(report.to_json() if args.json else report.to_text())
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
