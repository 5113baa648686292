"""Command-line front end.

Subcommands: quadratize, dissipate, check, simulate, bench.  Data goes to
stdout (or --out), diagnostics to stderr.  Exit codes classify failures:
0 success, 2 input parse error, 3 quadratization budget exceeded, 4 a point
fails the dissipative-equilibrium precondition, 5 integrator failure.
The environment variable DISSQUAD_THREADS caps worker threads for the
per-equilibrium checks.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import duffing, parsing, simulate, stability
from .parsing import (
    PointParseError,
    SourceError,
    parse_points,
    parse_system,
    serialize_result,
)
from .quadratize import (
    BudgetExceededError,
    DeadlineExceededError,
    branch_and_bound,
)
from .simulate import IntegrationError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_BUDGET = 3
EXIT_PRECONDITION = 4
EXIT_INTEGRATOR = 5


def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    return Path(path).read_text(encoding="utf-8")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")


def _load_points(args, nvars: int):
    spec = args.equilibria
    if spec is None:
        raise PointParseError("no equilibria given; use --equilibria", 1, 1)
    candidate = Path(spec)
    if candidate.is_file():
        spec = candidate.read_text(encoding="utf-8")
    return parse_points(spec, nvars)


def _result_text(result, report=None) -> str:
    lines = []
    doc = parsing.quadratization_json(result)
    lines.append("new variables: " + (", ".join(doc["new_variables"]) or "(none)"))
    for eq in doc["equations"]:
        lines.append(eq)
    if report is not None:
        lines.append(f"lambda = {report.lam}  [{report.mode}]")
        for entry in report.equilibria:
            pt = "(" + ", ".join(str(c) for c in entry.point) + ")"
            lines.append(f"  {pt}: {entry.verdict}")
    return "\n".join(lines) + "\n"


def cmd_quadratize(args) -> int:
    try:
        sys_ = parse_system(_read_input(args.input))
    except SourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        result = branch_and_bound(sys_, budget=args.budget)
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if args.format == "text":
        _emit(_result_text(result), args.out)
    else:
        _emit(serialize_result(result), args.out)
    return EXIT_OK


def cmd_dissipate(args) -> int:
    try:
        sys_ = parse_system(_read_input(args.input))
        points = _load_points(args, len(sys_.vars))
    except SourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        result, report = stability.dissipative_quadratize(
            sys_, points, mode=args.mode, budget=args.budget, tol=args.tol
        )
    except stability.PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    if args.format == "text":
        _emit(_result_text(result, report), args.out)
    else:
        _emit(serialize_result(result, report), args.out)
    return EXIT_OK


def cmd_check(args) -> int:
    try:
        sys_ = parse_system(_read_input(args.input))
        points = _load_points(args, len(sys_.vars))
    except SourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    checks = []
    try:
        for pt in points:
            checks.append(stability.check_dissipative(sys_, pt, args.mode, args.tol))
    except stability.PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    doc = {
        "schema_version": parsing.SCHEMA_VERSION,
        "variables": list(sys_.vars.names),
        "check_mode": stability.MODE_EXACT if checks[0].exact else stability.MODE_NUMERIC,
        "points": [],
    }
    for entry in checks:
        item = {
            "point": parsing.point_json(entry.point),
            "verdict": entry.verdict,
        }
        item.update(parsing.eigen_json(entry))
        doc["points"].append(item)
    if args.format == "text":
        lines = [
            "(" + ", ".join(str(c) for c in e.point) + f"): {e.verdict}"
            for e in checks
        ]
        _emit("\n".join(lines) + "\n", args.out)
    else:
        _emit(json.dumps(doc, indent=2), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        sys_ = parse_system(_read_input(args.input))
        x0 = parse_points(args.x0, len(sys_.vars))[0]
    except SourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    rel = args.tol if args.tol is not None else 1e-8
    abs_tol = args.abs_tol if args.abs_tol is not None else rel * 1e-2
    try:
        if args.with_lift:
            try:
                result = branch_and_bound(sys_, budget=args.budget)
            except BudgetExceededError as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_BUDGET
            stabs = stability.build_stabilizers(result)
            lam = Fraction(args.lift_lambda if args.lift_lambda is not None else 0)
            lifted = stability.stabilized_system(result, stabs, lam)
            y0 = simulate.lift_initial_condition(x0, result.new_vars)
            traj = simulate.integrate(
                lifted, y0, args.t_end, rel, abs_tol, samples=args.samples
            )
            drift = simulate.compare(
                sys_, lifted, result.new_vars, x0, args.t_end, rel, abs_tol,
                samples=args.samples,
            )
            csv = simulate.trajectory_csv(traj, lifted.vars.names)
            csv += (
                f"# max_state_deviation: {drift.max_state_deviation:.6g}\n"
                f"# max_invariant_drift: {drift.max_invariant_drift:.6g}\n"
            )
        else:
            traj = simulate.integrate(
                sys_, x0, args.t_end, rel, abs_tol, samples=args.samples
            )
            csv = simulate.trajectory_csv(traj, sys_.vars.names)
    except (IntegrationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATOR
    _emit(csv, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = ["n,dimension,n_equilibria,n_new_vars,t_quadratize,t_dissipate_numeric"
            + (",t_dissipate_exact" if args.with_exact else "")]
    for n in range(args.n_min, args.n_max + 1):
        sys_ = duffing.coupled_duffing(n)
        candidates = duffing.duffing_equilibria(n)
        points = [
            pt
            for pt in candidates
            if stability.check_dissipative(sys_, pt, "numeric", args.tol).dissipative
        ]

        t0 = time.monotonic()
        try:
            result = branch_and_bound(
                sys_, deadline=time.monotonic() + args.timeout
            )
            t_quad = f"{time.monotonic() - t0:.3f}"
            n_new = str(len(result.new_vars))
        except DeadlineExceededError:
            t_quad = f">{args.timeout:g}"
            n_new = "-"
            result = None

        cells = [str(n), str(2 * n), str(len(points)), n_new, t_quad]
        for mode in ("numeric", "exact") if args.with_exact else ("numeric",):
            if result is None:
                cells.append("-")
                continue
            t0 = time.monotonic()
            try:
                stability.dissipative_quadratize(
                    sys_, points, mode=mode, tol=args.tol,
                    deadline=time.monotonic() + args.timeout,
                )
                cells.append(f"{time.monotonic() - t0:.3f}")
            except DeadlineExceededError:
                cells.append(f">{args.timeout:g}")
        rows.append(",".join(cells))
    _emit("\n".join(rows) + "\n", args.out)
    return EXIT_OK


def _add_common(p, *, mode=True, equilibria=False):
    p.add_argument("--input", required=False, default="-",
                   help="system file ('-' for stdin)")
    if equilibria:
        p.add_argument("--equilibria", help="point list or a file containing one")
    if mode:
        p.add_argument("--mode", choices=["exact", "numeric"], default="exact")
    p.add_argument("--tol", type=float, default=1e-9,
                   help="numeric dissipativity threshold / tolerance")
    p.add_argument("--budget", type=int, default=None,
                   help="max number of new variables")
    p.add_argument("--format", choices=["json", "text", "csv"], default="json")
    p.add_argument("--out", help="write data here instead of stdout")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for randomized suites (reserved)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dissquad",
        description="Dissipativity-preserving quadratization of polynomial "
        "ODE systems",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("quadratize", help="optimal inner-quadratic quadratization")
    _add_common(p, mode=False)
    p.set_defaults(func=cmd_quadratize)

    p = sub.add_parser("dissipate", help="quadratize and repair dissipativity")
    _add_common(p, equilibria=True)
    p.set_defaults(func=cmd_dissipate)

    p = sub.add_parser("check", help="check dissipativity at given equilibria")
    _add_common(p, equilibria=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="integrate a system and emit CSV")
    _add_common(p, mode=False)
    p.add_argument("--x0", required=True, help="initial point, e.g. '(0.1, 0.01)'")
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--abs-tol", type=float, default=None)
    p.add_argument("--with-lift", action="store_true",
                   help="quadratize first and simulate the lifted system")
    p.add_argument("--lift-lambda", type=int, default=None,
                   help="stabilizer gain for the lifted simulation")
    p.set_defaults(func=cmd_simulate, tol=None)

    p = sub.add_parser("bench", help="coupled-Duffing scaling table (CSV)")
    _add_common(p, mode=False)
    p.add_argument("--n-min", type=int, default=1)
    p.add_argument("--n-max", type=int, default=4)
    p.add_argument("--timeout", type=float, default=2000.0,
                   help="per-cell time budget in seconds")
    p.add_argument("--with-exact", action="store_true",
                   help="also time the exact Routh-Hurwitz pipeline")
    p.add_argument("--parallel", action="store_true",
                   help="allow worker threads for non-timing runs")
    p.set_defaults(func=cmd_bench)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
