import csv
import json
import math

import pytest

from arfp_berry.cli import main
from arfp_berry.io import format_float, parse_run_config

FIG5_SOLID = {"kind": "IoffeRing", "b_rf0": 0.13 * math.sqrt(2), "omega": 1.0 + 0.13,
              "eta_value": math.pi / 2}


def write_config(tmp_path, doc, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def run(tmp_path, cmd, doc, *flags, out="out.json"):
    cfg = write_config(tmp_path, doc)
    target = tmp_path / out
    code = main([cmd, "--config", str(cfg), "--out", str(target), *flags])
    return code, target


def load(path):
    return json.loads(path.read_text())


SCAN = {"config": {"kind": "QuadrupolePlusLinearRf", "b_rf": 0.15},
        "scan": {"window": [0.8, 1.2, -0.2, 0.2], "resolution": [5, 4]}}


def test_scan_writes_csv_envelope_and_figure(tmp_path):
    code, out = run(tmp_path, "scan-phase", SCAN, out="grid.csv")
    assert code == 0
    text = out.read_bytes().decode()
    assert "\r" not in text and text.endswith("\n")
    rows = list(csv.reader(text.splitlines()))
    assert rows[0] == ["rho", "z", "gamma_n"]
    assert len(rows) == 1 + 20
    assert [float(r[0]) for r in rows[1:5]] == [0.8] * 4
    assert [float(r[1]) for r in rows[1:5]] == pytest.approx([-0.2, -0.2 / 3, 0.2 / 3, 0.2])
    env = load(tmp_path / "grid.json")
    assert env["command"] == "scan-phase" and env["status"] == "ok"
    assert env["units"]["system"] == "reduced"
    assert env["data"]["shape"] == [5, 4]
    png = (tmp_path / "grid.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_scan_csv_is_byte_identical(tmp_path):
    run(tmp_path, "scan-phase", SCAN, out="a.csv")
    run(tmp_path, "scan-phase", SCAN, "--threads", "3", out="b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_missing_values_are_empty_fields(tmp_path):
    doc = {"config": {"kind": "QuadrupolePlusLinearRf"},
           "scan": {"window": [0.0, 1.0, -0.1, 0.1], "resolution": [3, 2], "figure": False}}
    code, out = run(tmp_path, "scan-phase", doc, out="g.csv")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "0,-0.10000000000000001,"
    assert not (tmp_path / "g.png").exists()
    assert load(tmp_path / "g.json")["data"]["missing"] == 2


def test_envelope_round_trip(tmp_path):
    code, out = run(tmp_path, "scan-phase", SCAN, "--gauge", "smooth", "--branch", "-1", out="g.csv")
    assert code == 0
    env = load(tmp_path / "g.json")
    again = parse_run_config(env["run_config"])
    assert again == parse_run_config({**SCAN, "gauge": "smooth", "branch": -1})
    assert again.gauge == "smooth-numeric" and again.branch == -1


@pytest.mark.parametrize("doc", [
    {"config": {"kind": "RingQuadrupole"}, "bogus": 1},
    {"config": {"kind": "RingQuadrupole", "zz": 1}},
    {"config": {"kind": "RingQuadrupole"}, "scan": {"window": [1.0, 1.0, 0.0, 0.1]}},
    {"config": {"kind": "RingQuadrupole"}, "scan": {"resolution": "big"}},
    {"config": {"kind": "RingQuadrupole"}, "scan": {"extra": True}},
    {"config": {"kind": "RingQuadrupole"}, "branch": 3},
    {"config": {"kind": "RingQuadrupole"}, "spin": 0.7},
    {"config": {"kind": "RingQuadrupole"}, "gauge": "coulomb"},
    {"config": {"kind": "RingQuadrupole"}, "threads": 0},
    {"scan": {}},
])
def test_config_errors_exit_2(tmp_path, doc):
    code, out = run(tmp_path, "scan-phase", doc, out="g.csv")
    assert code == 2
    assert not out.exists()


def test_unreadable_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["trap-center", "--config", str(bad), "--out", str(tmp_path / "o.json")]) == 2
    assert main(["trap-center", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o.json")]) == 2
    assert main(["no-such-command"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_bad_flag_values_exit_2(tmp_path):
    doc = {"config": {"kind": "RingQuadrupole"}}
    assert run(tmp_path, "trap-center", doc, "--gauge", "coulomb")[0] == 2
    assert run(tmp_path, "trap-center", doc, "--branch", "5")[0] == 2


def test_trap_center(tmp_path):
    code, out = run(tmp_path, "trap-center", {"config": {"kind": "RingQuadrupole", "varphi": math.pi}})
    assert code == 0
    d = load(out)["data"]
    assert d["rho_c"] == pytest.approx(1.0, abs=1e-6)
    assert d["z_c"] == pytest.approx(-0.1, abs=1e-6)
    assert load(out)["verdicts"]["matches_analytic"]


def test_validity_pass_and_fail(tmp_path):
    doc = {"config": FIG5_SOLID}
    code, out = run(tmp_path, "validity", doc)
    assert code == 0
    assert load(out)["verdicts"]["rwa"] is True
    dashed = {"config": {**FIG5_SOLID, "b_rf0": 0.25 * math.sqrt(2)}}
    code, out = run(tmp_path, "validity", dashed)
    assert code == 0
    assert load(out)["verdicts"]["rwa"] is False
    code, out = run(tmp_path, "validity", dashed, "--rwa-threshold", "0.5")
    assert load(out)["verdicts"]["rwa"] is True


def test_validity_zero_rf_passes(tmp_path):
    doc = {"config": {"kind": "QuadrupolePlusLinearRf", "b_rf": 0.0},
           "trajectory": {"kind": "ring-circuit", "rho": 1.1, "period": 1000.0}}
    code, out = run(tmp_path, "validity", doc)
    assert code == 0
    d = load(out)["data"]
    assert d["rwa_factors"]["co_rotating"] == 0.0 and d["verdicts"]["rwa"]


def test_evolve_with_doublings(tmp_path):
    doc = {"config": {"kind": "QuadrupolePlusLinearRf", "b_rf": 0.1},
           "trajectory": {"kind": "ring-circuit", "rho": 1.05, "z": 0.0, "period": 70.0},
           "evolve": {"doublings": 3}}
    code, out = run(tmp_path, "evolve", doc)
    assert code == 0
    env = load(out)
    conv = env["data"]["convergence"]
    assert len(conv["rows"]) == 4 and conv["monotone"]
    assert env["verdicts"]["norm_drift_ok"]


def test_evolve_rf_off_zero_phase(tmp_path):
    # on the axis beyond the rf ramp the field is a uniform bias along z with no rf
    doc = {"config": {"kind": "DoubleWellSplitter", "z_end": 10.0},
           "trajectory": {"kind": "custom-waypoints", "period": 30.0,
                          "waypoints": [[0.0, 0.0, 12.0], [0.0, 0.0, 12.0]]},
           "evolve": {"tol": 1e-12}}
    code, out = run(tmp_path, "evolve", doc)
    assert code == 0
    assert abs(load(out)["data"]["result"]["geometric_phase_extracted"]) < 1e-9


def test_low_fidelity_exit_4(tmp_path):
    doc = {"config": {"kind": "QuadrupolePlusLinearRf", "b_rf": 0.1},
           "trajectory": {"kind": "ring-circuit", "rho": 1.0, "z": 0.1, "period": 12.566}}
    code, out = run(tmp_path, "evolve", doc)
    assert code == 4
    env = load(out)
    assert env["status"] == "low-fidelity"
    assert env["data"]["result"]["fidelity"] < 0.5


def test_numeric_failure_exit_3(tmp_path, capsys):
    doc = {"config": {"kind": "QuadrupolePlusLinearRf", "b_rf": 0.0},
           "trajectory": {"kind": "ring-circuit", "rho": 1.0, "period": 100.0}}
    code, out = run(tmp_path, "evolve", doc)
    assert code == 3
    assert not out.exists()
    assert "numeric failure" in capsys.readouterr().err


def test_gauge_compare(tmp_path):
    doc = {"config": {"kind": "RingQuadrupole", "varphi": 0.8},
           "trajectory": {"kind": "ring-circuit", "rho": 1.08, "z": 0.03, "period": 1000.0},
           "compare": {"samples": 128}}
    code, out = run(tmp_path, "gauge-compare", doc)
    assert code == 0
    env = load(out)
    assert env["verdicts"]["numeric_invariant"]
    assert set(env["data"]["path_phases"]) == {"rotation", "cylindrical", "smooth-numeric"}


def test_format_float():
    assert format_float(0.1) == "0.10000000000000001"
    assert format_float(float("nan")) == ""
    assert format_float(float("inf")) == ""
    assert float(format_float(math.pi)) == math.pi
