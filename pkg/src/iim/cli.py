"""Command-line front end: ``iim verify | converge | series | cases``.

Settings come from flags and, optionally, a flat ``key=value`` file given
with ``--config``; flags win. Exit status: 0 all checks pass, 1 some check
failed, 2 usage error (bad flag, unknown case or preset), 3 runtime or I/O
error.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

from . import __version__
from .cases import list_cases
from .errors import IIMError, InvalidInputError, NotFoundError
from .report import QUANTITIES, compute_series, convergence_csv, dumps_report, summary_lines
from .verify import PRESETS, convergence_study, run_suite, setup_suite

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

# config-file key -> (argparse dest, converter)
CONFIG_KEYS = {
    "case": ("case", str),
    "preset": ("preset", str),
    "dt": ("dt", float),
    "cells": ("cells", int),
    "order": ("order", int),
    "seed": ("seed", int),
    "out": ("out", str),
    "format": ("format", str),
    "t-final": ("t_final", float),
    "t_final": ("t_final", float),
    "quantity": ("quantity", str),
    "levels": ("levels", int),
}

DEFAULTS = {"preset": "default", "seed": 0, "levels": 3}


class UsageError(Exception):
    pass


def read_config(path: str | Path) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        dest, conv = CONFIG_KEYS[key]
        try:
            out[dest] = conv(value)
        except ValueError:
            raise UsageError(f"{path}:{n}: bad value for {key}: {value!r}") from None
    return out


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from the config file, then from the defaults."""
    cfg = read_config(args.config) if args.config else {}
    for dest, value in cfg.items():
        if getattr(args, dest, None) is None:
            setattr(args, dest, value)
    for dest, value in DEFAULTS.items():
        if getattr(args, dest, None) is None:
            setattr(args, dest, value)
    return args


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--case", help="case id (see `iim cases`)")
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--dt", type=float, help="RK4 step (default: preset fraction of T)")
    p.add_argument("--cells", type=int, help="quadrature cells per axis")
    p.add_argument("--order", type=int, help="Gauss-Legendre points per cell")
    p.add_argument("--seed", type=int)
    p.add_argument("--t-final", dest="t_final", type=float, help="final time T")
    p.add_argument("--out", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="iim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the verification suite for one case")
    _common(p)
    p.add_argument("--format", choices=("json", "csv"), help="json report or csv check table")
    p.add_argument("--timings", action="store_true", help="attach wall-clock timings")

    p = sub.add_parser("converge", help="drift and error under dt halving")
    _common(p)
    p.add_argument("--levels", type=int, help="number of dt levels, 2..6 (default 3)")
    p.add_argument("--format", choices=("json", "csv"))

    p = sub.add_parser("series", help="emit a plot-ready table")
    _common(p)
    p.add_argument("--quantity", choices=QUANTITIES)
    p.add_argument("--format", choices=("json", "csv"))

    sub.add_parser("cases", help="list the built-in cases")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _require_case(args) -> str:
    if not args.case:
        raise UsageError("--case is required (flag or config file)")
    return args.case


def checks_csv(report) -> str:
    buf = io.StringIO()
    buf.write(f"# iim checks: case {report.case}, seed {report.seed}\n")
    buf.write("# columns: name, lhs, rhs, slack, ratio [1], pass [0/1]\n")
    buf.write("name,lhs,rhs,slack,ratio,pass\n")
    for c in report.checks:
        buf.write(f"{c.name},{c.lhs!r},{c.rhs!r},{c.slack!r},{c.ratio!r},{int(c.passed)}\n")
    return buf.getvalue()


def cmd_verify(args) -> int:
    report = run_suite(_require_case(args), args.seed, args.preset, args.dt, args.cells,
                       args.order, args.t_final, timings=args.timings)
    text = checks_csv(report) if args.format == "csv" else dumps_report(report)
    _emit(text, args.out)
    for line in summary_lines(report):
        print(line, file=sys.stderr)
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_converge(args) -> int:
    case = _require_case(args)
    rows = convergence_study(case, args.seed, args.preset, args.levels, args.dt, args.cells,
                             args.order, args.t_final)
    meta = {"case": case, "seed": args.seed, "preset": args.preset, "levels": args.levels}
    if args.format == "csv":
        text = convergence_csv(rows, meta)
    else:
        text = json.dumps({**meta, "rows": [r.to_dict() for r in rows]}, sort_keys=True,
                          indent=2, allow_nan=False) + "\n"
    _emit(text, args.out)
    return EXIT_PASS


def cmd_series(args) -> int:
    if args.quantity is None:
        raise UsageError("--quantity is required")
    s = setup_suite(_require_case(args), args.seed, args.preset, args.dt, args.cells,
                    args.order, args.t_final)
    series = compute_series(s, args.quantity)
    if args.format == "json":
        d = {"quantity": series.quantity, "columns": list(series.columns),
             "units": list(series.units), "rows": [list(r) for r in series.rows],
             "meta": series.meta}
        text = json.dumps(d, sort_keys=True, indent=2, allow_nan=False) + "\n"
    else:
        text = series.to_csv()
    _emit(text, args.out)
    return EXIT_PASS


def cmd_cases(args) -> int:
    for c in list_cases():
        b = c.bounds
        print(f"{c.id:16s} d={c.dim} T={c.T_default:.6g} L_A={b.L_A:.6g} M_A={b.M_A:.6g}")
    return EXIT_PASS


COMMANDS = {"verify": cmd_verify, "converge": cmd_converge, "series": cmd_series,
            "cases": cmd_cases}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help/--version, 2 on bad flags
        return int(exc.code or 0)
    try:
        if args.command != "cases":
            args = resolve(args)
        return COMMANDS[args.command](args)
    except (UsageError, NotFoundError, InvalidInputError) as exc:
        print(f"iim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"iim: I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (IIMError, ArithmeticError, RuntimeError) as exc:
        print(f"iim: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
