import json
import math

import numpy as np
import pytest

from iim import InvalidInputError
from iim.report import (
    QUANTITIES,
    Series,
    compute_series,
    convergence_csv,
    dumps_report,
    loads_report,
    read_csv_series,
    read_report,
    summary_lines,
    write_report,
)
from iim.verify import ConvergenceRow, run_suite, setup_suite


@pytest.fixture(scope="module")
def report():
    return run_suite("zero-2d", seed=1, preset="quick")


def test_json_round_trip(report, tmp_path):
    path = tmp_path / "r.json"
    write_report(report, path)
    back = read_report(path)
    assert back.to_dict() == report.to_dict()
    assert dumps_report(back) == path.read_text()
    assert loads_report(dumps_report(report)).to_dict() == report.to_dict()


def test_json_is_canonical(report):
    text = dumps_report(report)
    assert text.endswith("}\n")
    d = json.loads(text)
    assert d["schema"] == "iim-report/1"
    assert d["pass"] is True and d["n_failed"] == 0
    assert d["n_checks"] == len(d["checks"])
    assert list(d) == sorted(d)
    assert "preset" in d and d["preset"]["name"] == "quick"


def test_series_csv_format():
    s = Series("demo", ("t", "value"), ("time", "1"), ((0.0, 1.0), (0.5, 0.1)), {"case": "x"})
    text = s.to_csv()
    lines = text.splitlines()
    assert lines[0] == "# iim series: demo"
    assert "# case: x" in lines
    assert "# columns: t [time], value [1]" in lines
    header, rows = read_csv_series(text)
    assert header == ["t", "value"]
    assert rows == [[0.0, 1.0], [0.5, 0.1]]


def test_series_floats_round_trip_exactly():
    v = 0.1 + 0.2
    s = Series("x", ("a",), ("1",), ((v,),), {})
    _, rows = read_csv_series(s.to_csv())
    assert rows[0][0] == v


def test_unknown_quantity():
    s = setup_suite("zero-1d", 0, "quick", None, None, None, None)
    with pytest.raises(InvalidInputError, match="quantity"):
        compute_series(s, "energy")
    assert set(QUANTITIES) == {"drift", "l2-profile", "lq-profile", "measure"}


def test_measure_series_rotation_constant():
    s = setup_suite("rigid-rotation", 0, "quick", None, None, None, None)
    ser = compute_series(s, "measure")
    assert ser.columns == ("t", "measure", "ratio")
    ratio = np.array([r[2] for r in ser.rows])
    assert np.abs(ratio - 1.0).max() <= 1e-9
    assert len(ser.rows) == 17


def test_l2_profile_zero_field_constant():
    s = setup_suite("zero-1d", 0, "quick", None, None, None, None)
    ser = compute_series(s, "l2-profile")
    vals = [r[1] for r in ser.rows]
    assert len(vals) >= 33
    assert max(vals) - min(vals) == 0.0
    assert vals[0] == pytest.approx(ser.meta["initial_l2"], rel=1e-14)
    assert "amplitude" in ser.units[1]


def test_lq_profile_swirling_non_decreasing():
    s = setup_suite("swirling", 0, "quick", None, None, None, None)
    ser = compute_series(s, "lq-profile")
    qs = [r[0] for r in ser.rows]
    assert qs == [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0]
    norm = [r[2] for r in ser.rows]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(norm, norm[1:]))
    assert norm[-1] <= ser.meta["sup_norm"] * (1 + 1e-12)


def test_drift_series_starts_at_zero():
    s = setup_suite("rigid-rotation", 0, "quick", None, None, None, None)
    ser = compute_series(s, "drift")
    assert ser.rows[0] == (0.0, 0.0)
    assert max(r[1] for r in ser.rows) <= 1e-3
    assert ser.meta["pairs"] == 5


def test_convergence_csv_cells():
    rows = [ConvergenceRow(0.1, 1e-3, None, 2e-3, None), ConvergenceRow(0.05, 0.0, "exact", 1e-4, 4.3)]
    text = convergence_csv(rows, {"case": "c"})
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert body[0] == "dt,max_drift,order,max_error,error_order"
    assert body[1] == "0.1,0.001,,0.002,"
    assert body[2] == "0.05,0.0,exact,0.0001,4.3"


def test_summary_lines(report):
    lines = summary_lines(report)
    assert lines[0].startswith("zero-2d: PASS")
    assert "drift" in lines[-1]
    assert not math.isnan(float(lines[-1].split(":")[-1]))
