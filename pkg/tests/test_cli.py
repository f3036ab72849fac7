import csv
import json
import math

import pytest

from horizoncheck.cli import (
    RunConfig,
    build_check_report,
    build_needle_report,
    build_overtake_report,
    build_phase_diagram_report,
    main,
)


def _rows(report):
    return [dict(zip(["kind", *report.columns], row)) for row in report.rows]


def test_list_examples(capsys):
    assert main(["list-examples"]) == 0
    out = capsys.readouterr().out
    for name in ("ramsey", "integrator", "oscillator"):
        assert name in out


def test_bad_example_is_operational_failure(capsys, tmp_path):
    code = main(["check", "--example", "oscillator", "--b", "-2",
                 "--out", str(tmp_path / "r.csv")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_check_csv_deterministic(tmp_path):
    args = ["check", "--example", "integrator", "--rho", "0.1", "--a0", "0",
            "--t-max", "150"]
    f1, f2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(f1)]) == 0
    assert main(args + ["--out", str(f2)]) == 0
    b1, b2 = f1.read_bytes(), f2.read_bytes()
    assert b1 == b2
    assert b1.startswith(b"horizon_check_report_v1,")
    assert b"\r" not in b1


def test_check_exit_zero_even_when_conditions_fail(tmp_path):
    # undiscounted integrator: classical conditions all fail, exit still 0
    out = tmp_path / "r0.csv"
    assert main(["check", "--example", "integrator", "--rho", "0",
                 "--t-max", "150", "--out", str(out)]) == 0
    text = out.read_text()
    assert "fails" in text


def test_check_report_rows_integrator():
    config = RunConfig(example="integrator", params={"rho": 0.1, "a0": 0.0},
                       t_max=250.0)
    report = build_check_report(config)
    rows = _rows(report)
    by_key = {(r["candidate"], r["condition"]): r["status"] for r in rows}
    assert by_key[("(gradient route)", "prop_general_WOO")] == "holds"
    assert by_key[("(gradient route)", "prop_general_OO")] == "holds"
    assert by_key[("(gradient route)", "limit_costate")] == "holds"
    assert by_key[("psi(lam=1,a0=0)", "tcKAV")] == "holds"
    assert by_key[("psi(lam=0,a0=1)", "tcKAV")] == "fails"


def test_json_mirrors_csv(tmp_path):
    config_args = ["check", "--example", "integrator", "--rho", "0.1",
                   "--t-max", "150"]
    csv_path, json_path = tmp_path / "r.csv", tmp_path / "r.json"
    assert main(config_args + ["--out", str(csv_path), "--format", "csv"]) == 0
    assert main(config_args + ["--out", str(json_path), "--format", "json"]) == 0
    with open(csv_path, newline="") as fh:
        csv_rows = list(csv.reader(fh))
    payload = json.loads(json_path.read_text())
    assert payload["schema"] == "horizon_check_report_v1"
    assert payload["columns"][1:] == csv_rows[0][1:]
    assert len(payload["rows"]) == len(csv_rows) - 1
    assert payload["rows"][0] == csv_rows[1]


def test_phase_diagram_degenerate_grid():
    config = RunConfig(example="ramsey",
                       params=dict(alpha=0.4, delta=0.05, theta=0.5, k0=10.0),
                       grid=(1, 1), k_max=32.0, c_max=2.4, t_max=600.0)
    report = build_phase_diagram_report(config)
    rows = _rows(report)
    grid_rows = [r for r in rows if r["kind"] == "grid"]
    assert len(grid_rows) == 1
    assert grid_rows[0]["label"] == "saddle"
    assert float(grid_rows[0]["k"]) == 32.0
    # kdot nullcline passes through (32, 2.4)
    kdot = [r for r in rows if r["kind"] == "nullcline_kdot"]
    hit = [r for r in kdot if abs(float(r["k"]) - 32.0) < 1e-9]
    assert hit and float(hit[0]["c"]) == pytest.approx(2.4, abs=1e-9)
    # cdot nullcline is the vertical line k = k*
    cdot = [r for r in rows if r["kind"] == "nullcline_cdot"]
    assert all(float(r["k"]) == 32.0 for r in cdot)
    # each kdot row satisfies c = k**alpha - delta*k
    for r in kdot:
        k = float(r["k"])
        assert float(r["c"]) == pytest.approx(k ** 0.4 - 0.05 * k, abs=1e-6)
    assert any(r["kind"] == "saddle_path" for r in rows)


def test_phase_diagram_requires_ramsey():
    with pytest.raises(ValueError):
        build_phase_diagram_report(RunConfig(example="oscillator"))


def test_overtake_report_oscillator():
    config = RunConfig(example="oscillator", params={"b": 0.5}, t_max=400.0)
    report = build_overtake_report(config)
    rows = _rows(report)
    by_challenger = {r["challenger"]: r for r in rows}
    s_pi = by_challenger[f"delayed_start(s={math.pi:g})"]
    assert s_pi["verdict"] == "consistent_WOO_only"
    assert float(s_pi["max_gap"]) == pytest.approx(2 - math.pi / 2, abs=1e-3)


def test_needle_report(tmp_path):
    config = RunConfig(example="oscillator", params={"b": 0.5}, fmt="csv",
                       out=str(tmp_path / "n.csv"))
    report = build_needle_report(config, tau=1.0, u=0.0, T=20.0,
                                 alphas=[1e-1, 1e-2, 1e-3])
    rows = _rows(report)
    samples = [r for r in rows if r["kind"] == "sample"]
    assert len(samples) == 3
    errs = [float(r["abs_error"]) for r in samples]
    assert errs == sorted(errs, reverse=True)
    order_row = [r for r in rows if r["kind"] == "order"][0]
    assert float(order_row["abs_error"]) >= 0.9


def test_float_formatting_nine_significant_digits(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["phase-diagram", "--example", "ramsey", "--alpha", "0.4",
                 "--delta", "0.05", "--theta", "0.5", "--k0", "10",
                 "--grid", "2x2", "--k-max", "64", "--c-max", "4.8",
                 "--t-max", "600", "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "phase_diagram_report_v1"
    for row in rows[1:]:
        for cell in row[1:3]:
            assert len(cell.replace(".", "").replace("-", "").lstrip("0")) <= 10
