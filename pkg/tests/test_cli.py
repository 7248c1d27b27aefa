"""Command line verbs, exit codes, and the files they leave behind."""

from __future__ import annotations

import json
import subprocess
from pathlib import Path

from stakesim.cli import main
from stakesim.scenario import canonical_json

from conftest import breach_scenario_doc, quiet_scenario_doc

ROOT = Path(__file__).parent.parent
DEMO = str(ROOT / "scenarios" / "double-sign.json")


def write_doc(tmp_path: Path, doc: dict, name: str = "scenario.json") -> str:
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


# -- run ------------------------------------------------------------------------


def test_run_writes_trace_and_both_reports(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--scenario", DEMO, "--out", str(out)]) == 0
    assert (out / "trace.jsonl").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"]["bound_kind"] == "reorg_hybrid_secure_rule"
    assert report["totals"] == {"slashed": "64", "paid": "6", "burned": "58"}
    text = (out / "report.txt").read_text()
    assert capsys.readouterr().out == text
    # every trace line is canonical single-line JSON with tick and kind
    lines = (out / "trace.jsonl").read_text().splitlines()
    for line in lines:
        rec = json.loads(line)
        assert canonical_json(rec) == line
        assert "tick" in rec and "kind" in rec
    assert lines and json.loads(lines[-1])["kind"] == "report"


def test_run_judges_against_the_requested_bound(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--scenario", DEMO, "--out", str(out), "--bound", "tvl"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"]["bound_kind"] == "steal_tvl"
    # stealing the full locked value costs more than a third of the stake
    assert report["verdict"]["cryptoeconomically_safe"] is False
    capsys.readouterr()


def test_run_missing_scenario_file(tmp_path, capsys):
    code = main(["run", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 1
    assert capsys.readouterr().err.startswith("error:")


def test_run_invalid_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  broken", encoding="utf-8")
    assert main(["run", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "invalid JSON" in capsys.readouterr().err


def test_breach_exits_2_and_keeps_the_partial_trace(tmp_path, capsys):
    scenario = write_doc(tmp_path, breach_scenario_doc())
    out = tmp_path / "out"
    assert main(["run", "--scenario", scenario, "--out", str(out)]) == 2
    assert "INVARIANT-BREACH" in capsys.readouterr().err
    assert not (out / "trace.jsonl").exists()
    partial = (out / "trace-partial.jsonl").read_text().splitlines()
    assert partial
    kinds = [json.loads(line)["kind"] for line in partial]
    assert "settlement" in kinds and "report" not in kinds


# -- validate ---------------------------------------------------------------------


def test_validate_prints_diagnostics(capsys):
    assert main(["validate", "--scenario", DEMO]) == 0
    out = capsys.readouterr().out
    assert out.rstrip().endswith("ok")
    assert "4 validators x stake 32" in out
    assert "fork" in out


def test_validate_rejects_bad_schema(tmp_path, capsys):
    doc = quiet_scenario_doc()
    doc["schema_version"] = 99
    scenario = write_doc(tmp_path, doc)
    assert main(["validate", "--scenario", scenario]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:") and "schema" in err


# -- analyze ----------------------------------------------------------------------


def run_demo(tmp_path, capsys) -> Path:
    out = tmp_path / "out"
    assert main(["run", "--scenario", DEMO, "--out", str(out)]) == 0
    capsys.readouterr()
    return out / "trace.jsonl"


def test_analyze_verifies_a_fresh_trace(tmp_path, capsys):
    trace = run_demo(tmp_path, capsys)
    assert main(["analyze", "--trace", str(trace)]) == 0
    assert "report verified against trace" in capsys.readouterr().out


def test_analyze_catches_a_tampered_report(tmp_path, capsys):
    trace = run_demo(tmp_path, capsys)
    lines = trace.read_text().splitlines()
    for i, line in enumerate(lines):
        rec = json.loads(line)
        if rec["kind"] == "report":
            rec["totals"]["paid"] = "7"
            lines[i] = json.dumps(rec)
    trace.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert main(["analyze", "--trace", str(trace)]) == 3
    assert "MISMATCH at totals.paid" in capsys.readouterr().out


def test_analyze_rejects_a_trace_without_a_report(tmp_path, capsys):
    trace = tmp_path / "empty.jsonl"
    trace.write_text("", encoding="utf-8")
    assert main(["analyze", "--trace", str(trace)]) == 1
    assert "error:" in capsys.readouterr().err


# -- sweep ------------------------------------------------------------------------


def test_sweep_writes_an_index_and_per_point_reports(tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(
        ["sweep", "--scenario", DEMO, "--set", "econ.gamma=0,1/2,1", "--out", str(out)]
    )
    assert code == 0
    assert "swept 3 points (3 ok, 0 failed)" in capsys.readouterr().out
    index = json.loads((out / "sweep.json").read_text())
    assert [p["ok"] for p in index["points"]] == [True, True, True]
    assert index["points"][1]["overrides"] == {"econ.gamma": "1/2"}
    for n, point in enumerate(index["points"]):
        report = json.loads((out / point["report"]).read_text())
        assert point["report"] == f"report-{n:04d}.json"
        assert point["cryptoeconomically_safe"] is True
        assert report["totals"]["slashed"] == "64"


def test_sweep_grid_file_and_failed_points(tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"econ.gamma": ["1/2", "3/2"]}), encoding="utf-8")
    out = tmp_path / "sweep"
    assert main(["sweep", "--scenario", DEMO, "--grid", str(grid), "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "swept 2 points (1 ok, 1 failed)" in stdout
    assert "point 1" in stdout and "gamma" in stdout
    index = json.loads((out / "sweep.json").read_text())
    assert [p["ok"] for p in index["points"]] == [True, False]
    assert not (out / "report-0001.json").exists()


def test_sweep_without_any_axis_is_an_error(tmp_path, capsys):
    assert main(["sweep", "--scenario", DEMO, "--out", str(tmp_path / "s")]) == 1
    assert "error:" in capsys.readouterr().err


# -- installed entry point -----------------------------------------------------------


def test_installed_executable_reports_its_version():
    proc = subprocess.run(["stakesim", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("stakesim ")
