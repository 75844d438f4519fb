import json
import shutil
from pathlib import Path

import pytest

from escapeflow.cli import main
from escapeflow.forest import Forest, verify_property_ii
from escapeflow.io import read_csv_rows

ARCHIVE = Path(__file__).parent / "data" / "runs"


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--size", "8", "--seed", "1", "--snapshot-every", "2", "--out", str(out)]) == 0
    cfg = json.loads((out / "config.json").read_text())
    digest = cfg["config_digest"]
    trace = (out / "trace.csv").read_text().splitlines()
    assert trace[0] == f"# config_digest={digest}"
    assert trace[1] == "step,total,sink,positive,ties"
    header, rows = read_csv_rows(out / "trace.csv")
    assert len({r[1] for r in rows}) == 1  # total conserved
    report = json.loads((out / "report.json").read_text())
    assert report["final_sink"] == report["initial_total"] and report["final_positive"] == 0
    pgm = (out / "snapshots" / "step_000000.pgm").read_text().splitlines()
    assert pgm[0] == "P2" and pgm[1] == f"# config_digest={digest}"
    assert pgm[3] == "8 8" and pgm[4] == "255"
    levels = [int(v) for line in pgm[5:] for v in line.split()]
    assert len(levels) == 64 and max(levels) == 255 and min(levels) == 0


def test_forest_json_schema(tmp_path):
    out = tmp_path / "f"
    assert main(["forest", "--size", "12", "--seed", "4", "--out", str(out)]) == 0
    obj = json.loads((out / "forest.json").read_text())
    assert {"d", "sides", "roots", "parents", "config_digest"} <= set(obj)
    f = Forest.from_json(obj)
    assert verify_property_ii(f)[0]
    assert json.loads((out / "report.json").read_text())["property_ii"] is True


def test_closed_form_trace(tmp_path):
    out = tmp_path / "cf"
    assert main(["closed-form", "--size", "8", "--seed", "0", "--out", str(out)]) == 0
    header, rows = read_csv_rows(out / "trace.csv")
    assert header == ["step", "alive", "total", "sink", "positive"]
    assert rows[-1][1] == "0" and rows[-1][3] == rows[0][2]


def test_missing_size_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert "--size" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    rc = main(["simulate", "--size", "1", "--out", str(tmp_path / "x")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_verify_closedform_instance(capsys):
    assert main(["verify", "closedform", "--seed", "7", "--size", "32"]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["verdict"] == "pass"
    assert verdict["runs"][0]["seed"] == 7 and verdict["runs"][0]["size"] == 32


def test_verify_failure_exit_code(monkeypatch, capsys):
    from escapeflow import suites

    monkeypatch.setitem(suites.SUITES, "msf", lambda **kw: {"suite": "msf", "verdict": "fail"})
    assert main(["verify", "msf"]) == 1


def test_replay_detects_tampering(tmp_path):
    run_dir = tmp_path / "run"
    shutil.copytree(ARCHIVE / "sim_descendants", run_dir)
    assert main(["replay", str(run_dir), "--out", str(tmp_path / "again")]) == 0
    trace = run_dir / "trace.csv"
    trace.write_text(trace.read_text().replace("0,", "1,", 1))
    assert main(["replay", str(run_dir), "--out", str(tmp_path / "again2")]) == 1


def test_replay_rejects_edited_config(tmp_path):
    run_dir = tmp_path / "run"
    shutil.copytree(ARCHIVE / "sim_descendants", run_dir)
    cfg = json.loads((run_dir / "config.json").read_text())
    cfg["config"]["seed"] += 1
    (run_dir / "config.json").write_text(json.dumps(cfg))
    assert main(["replay", str(run_dir)]) == 2
