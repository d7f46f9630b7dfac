"""Command-line benchmark harness.

Subcommands: ``converge``, ``lights``, ``solvers`` and ``validate``.
Results go to CSV (``--out``, or stdout when omitted). Exit codes: 0 on
success, 1 on runtime failures such as an unwritable output path or a
failed validation, 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .core import BasisTooLarge, DimensionMismatch, Solver
from .experiments import (
    ExperimentConfig,
    rows_to_csv,
    run_convergence,
    run_light_sweep,
    run_solver_compare,
)
from .integrands import INTEGRAND_NAMES
from .regression import SgdConfig

BASIS_NAMES = ("poly", "step", "gauss", "sine")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _solver_list(text: str) -> tuple[Solver, ...]:
    try:
        return tuple(Solver.parse(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _param(text: str) -> tuple[str, object]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    if "," in value:
        return key, tuple(float(v) for v in value.split(","))
    for cast in (int, float):
        try:
            return key, cast(value)
        except ValueError:
            pass
    return key, value


def _add_common(p: argparse.ArgumentParser, *, integrand="gauss", orders="1,2", n="16,64,256,1024",
                reps=100, solvers="mc,direct"):
    p.add_argument("--integrand", default=integrand, help=f"one of {', '.join(INTEGRAND_NAMES)}")
    p.add_argument("--dim", type=int, default=None, help="dimension for sumsin/expsum")
    p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                   help="integrand parameter, e.g. threshold=0.3 or coefficients=1,0,2")
    p.add_argument("--basis", default="poly", help=f"one of {', '.join(BASIS_NAMES)}")
    p.add_argument("--order", type=_int_list, default=_int_list(orders),
                   help="comma-separated basis size parameters (polynomial orders, cells, ...)")
    p.add_argument("--solver", type=_solver_list, default=_solver_list(solvers),
                   help="comma-separated from PlainMC, DirectMatrix, Sgd, Incremental")
    p.add_argument("--n", type=_int_list, default=_int_list(n), help="ascending sample budgets")
    p.add_argument("--reps", type=int, default=reps, help="replications per budget")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cross-fit", action="store_true", help="fit and estimate on opposite halves")
    p.add_argument("--lr", type=float, default=0.01, help="SGD / incremental learning rate")
    p.add_argument("--epochs", type=int, default=4, help="SGD passes over the samples")
    p.add_argument("--timing", action="store_true",
                   help="fill wall_time_seconds (makes output nondeterministic)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for replications")
    p.add_argument("--out", default=None, help="CSV path (stdout if omitted)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regmc", description="Regression-based Monte Carlo integration benchmarks."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("converge", help="error against sample count")
    _add_common(p)

    p = sub.add_parser("lights", help="error ratio against the number of lights")
    _add_common(p, integrand="multilight", orders="1,2,3", n="1024", reps=500)
    p.add_argument("--lights", type=_int_list, default=_int_list("1,2,4,8,16,32,64"))

    p = sub.add_parser("solvers", help="direct matrix against SGD, timed")
    _add_common(p, orders="2,5,7", n="32,256", solvers="mc,direct,sgd")

    p = sub.add_parser("validate", help="run the acceptance checks")
    p.add_argument("--only", type=_int_list, default=None, help="criterion numbers to run")
    return parser


def _config(args, parser) -> ExperimentConfig:
    if args.integrand not in INTEGRAND_NAMES:
        parser.error(f"unknown integrand {args.integrand!r}")
    if args.basis not in BASIS_NAMES:
        parser.error(f"unknown basis {args.basis!r}")
    try:
        cfg = ExperimentConfig(
            integrand=args.integrand,
            dim=args.dim,
            params=dict(args.param),
            basis=args.basis,
            orders=args.order,
            solvers=args.solver,
            n_samples=args.n,
            replications=args.reps,
            seed=args.seed,
            cross_fit=args.cross_fit,
            sgd=SgdConfig(args.lr, args.epochs),
            timing=args.timing,
            workers=args.workers,
        )
        cfg.make_integrand()
    except (ValueError, TypeError) as exc:
        parser.error(str(exc))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "validate":
        from .validation import run_checks

        results = run_checks(args.only, echo=True)
        return 0 if all(r.passed for r in results) else 1

    cfg = _config(args, parser)
    if args.out is not None:
        parent = os.path.dirname(os.path.abspath(args.out))
        if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
            print(f"regmc: cannot write {args.out}", file=sys.stderr)
            return 1
    try:
        if args.command == "converge":
            rows = run_convergence(cfg)
        elif args.command == "lights":
            rows = run_light_sweep(args.lights, cfg)
        else:
            rows = run_solver_compare(cfg)
    except (BasisTooLarge, DimensionMismatch) as exc:
        parser.error(str(exc))

    text = rows_to_csv(rows)
    if args.out is None:
        sys.stdout.write(text)
        return 0
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"regmc: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
