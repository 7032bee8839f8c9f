"""Report serialization and plot-ready series tables."""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import InvalidInputError
from .quadrature import anchored, build_reference, lp_norm
from .solution import invariant_drift_many
from .verify import (
    Q_LIST,
    Report,
    SuiteSetup,
    drift_pairs,
    liouville_measure_checks,
    make_profile,
    solution_norms,
    suite_data,
    time_grid,
    union_box,
)

QUANTITIES = ("drift", "l2-profile", "lq-profile", "measure")


def dumps_report(report: Report) -> str:
    """Canonical JSON text: sorted keys, 2-space indent, no NaN, trailing newline."""
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def loads_report(text: str) -> Report:
    return Report.from_dict(json.loads(text))


def write_report(report: Report, path: str | Path) -> None:
    Path(path).write_text(dumps_report(report), encoding="utf-8")


def read_report(path: str | Path) -> Report:
    return loads_report(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Series:
    """A small table with unit-annotated column names."""

    quantity: str
    columns: tuple[str, ...]
    units: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]
    meta: dict

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# iim series: {self.quantity}\n")
        for k in sorted(self.meta):
            buf.write(f"# {k}: {self.meta[k]}\n")
        cols = ", ".join(f"{c} [{u}]" for c, u in zip(self.columns, self.units))
        buf.write(f"# columns: {cols}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()


def read_csv_series(text: str) -> tuple[list[str], list[list[float]]]:
    """Parse a table written by :meth:`Series.to_csv` (comments skipped)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    return header, [[float(v) for v in ln.split(",")] for ln in lines[1:]]


def compute_series(s: SuiteSetup, quantity: str) -> Series:
    """One plot-ready quantity for a resolved suite setup (same data as the suite)."""
    if quantity not in QUANTITIES:
        raise InvalidInputError(f"unknown quantity {quantity!r}; choose from {QUANTITIES}")
    fld, T, cfg, omega = s.field, s.T, s.cfg, s.case.omega
    times = time_grid(T, s.preset.n_times)
    meta = {"case": s.case.id, "T": T, "dt": cfg.dt, "cells": s.cells, "order": s.order,
            "seed": s.seed, "preset": s.preset.name}
    if quantity == "measure":
        meas, _ = liouville_measure_checks(fld, omega, T, s.bounds.M_A, times, cfg, s.cells,
                                           s.order)
        rows = tuple((t, m, m / omega.measure) for t, m in zip(times, meas))
        return Series(quantity, ("t", "measure", "ratio"), ("time", "length^d", "1"), rows, meta)
    Psi, U0, V0 = suite_data(s)
    if quantity == "drift":
        initials, tests = drift_pairs(s, Psi, U0)
        rq = build_reference(union_box(initials), s.cells, s.order, 0.0)
        series = invariant_drift_many(fld, initials, tests, T, times, rq, cfg)
        rows = tuple(
            (t, max(x.rel_drift[k] for x in series)) for k, t in enumerate(times)
        )
        meta["pairs"] = len(series)
        return Series(quantity, ("t", "max_rel_drift"), ("time", "1"), rows, meta)
    if len(times) < 33:
        times = time_grid(T, 33)
    rq0 = build_reference(U0.support_box.union(V0.support_box), s.cells, s.order, 0.0)
    norms = solution_norms(fld, U0, U0, times, rq0, cfg)
    if quantity == "l2-profile":
        rows = tuple(zip(times, norms.norm_u))
        meta["initial_l2"] = lp_norm(anchored(rq0), U0, 2)
        return Series(quantity, ("t", "l2_norm"), ("time", "amplitude*length^(d/2)"), rows, meta)
    prof = make_profile(times, norms.norm_u, Q_LIST)
    rows = tuple((float(q), prof.lq_norms[q], prof.normalized(q)) for q in Q_LIST)
    meta["sup_norm"] = prof.sup_norm
    return Series(quantity, ("q", "lq_norm", "normalized"),
                  ("1", "amplitude*length^(d/2)*time^(1/q)", "amplitude*length^(d/2)"), rows, meta)


def convergence_csv(rows: Sequence, meta: dict) -> str:
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, str):
            return v
        return repr(float(v))

    buf = io.StringIO()
    buf.write("# iim convergence study\n")
    for k in sorted(meta):
        buf.write(f"# {k}: {meta[k]}\n")
    buf.write("# columns: dt [time], max_drift [1], order [1], max_error [1], error_order [1]\n")
    buf.write("dt,max_drift,order,max_error,error_order\n")
    for r in rows:
        buf.write(",".join(cell(v) for v in (r.dt, r.max_drift, r.order, r.max_error,
                                               r.error_order)) + "\n")
    return buf.getvalue()


def summary_lines(report: Report) -> list[str]:
    """Short human-readable digest of a report."""
    head = (f"{report.case}: {'PASS' if report.passed else 'FAIL'} "
            f"({len(report.checks)} checks, {len(report.failures())} failed)")
    lines = [head]
    for c in report.failures():
        lines.append(f"  FAIL {c.name}: lhs={c.lhs:.6g} rhs={c.rhs:.6g} ratio={c.ratio:.6g}")
    drift = max((d["max_rel_drift"] for d in report.drift), default=0.0)
    lines.append(f"  max relative invariant drift: {drift:.3e}")
    return lines


__all__ = [
    "QUANTITIES", "Series", "compute_series", "convergence_csv", "dumps_report",
    "loads_report", "read_csv_series", "read_report", "summary_lines", "write_report",
]
