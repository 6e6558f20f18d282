import json

import numpy as np
import pytest

from belldrift import mitigation
from belldrift.harness import io
from belldrift.harness.cli import main


def _sim(tmp_path, *extra):
    out = tmp_path / "run"
    code = main(["simulate", "--seed", "3", "--source", "lhv", "--profile", "constant", "--p", "0.05",
                 "--shots-per-bin", "256", "--num-bins", "4", "--null-trials", "50", "--out", str(out), *extra])
    return code, out


def test_simulate_writes_outputs(tmp_path, capsys):
    code, out = _sim(tmp_path)
    assert code == 0
    for name in ("run.json", "counts.csv", "drift.csv", "schedule_table.csv", "no_signaling.csv"):
        assert (out / name).exists()
    assert "S =" in capsys.readouterr().out


def test_simulate_deterministic(tmp_path):
    _, a = _sim(tmp_path / "a")
    _, b = _sim(tmp_path / "b")
    assert (a / "counts.csv").read_bytes() == (b / "counts.csv").read_bytes()
    ra, rb = json.loads((a / "run.json").read_text()), json.loads((b / "run.json").read_text())
    ra.pop("meta"), rb.pop("meta")
    assert ra == rb


def test_seed_required(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--shots-per-bin", "10", "--source", "quantum", "--out", str(tmp_path)])
    assert info.value.code == 1
    assert "--seed" in capsys.readouterr().err


def test_config_file_with_overrides(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 1\nshots_per_bin: 128\nnum_bins: 3\nnull_trials: 20\nsource:\n  type: quantum\n")
    assert main(["simulate", "--config", str(cfg), "--seed", "9", "--theta-max", "0.05",
                 "--out", str(tmp_path / "o")]) == 0
    rec = json.loads((tmp_path / "o" / "run.json").read_text())
    assert rec["config"]["seed"] == 9
    assert rec["config"]["source"]["theta_max"] == 0.05


def test_bad_config_exit_1(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("seed: 1\nshots_per_bin: 128\nmystery: 3\nsource:\n  type: quantum\n")
    assert main(["simulate", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "o")]) == 1


def test_kappa_failure_exit_2(tmp_path):
    code, _ = _sim(tmp_path, "--mitigation", "--readout-flip", "0.46", "0.46")
    assert code == 2


def test_analyze_round_trip(tmp_path, capsys):
    _, out = _sim(tmp_path)
    res = tmp_path / "ana"
    assert main(["analyze", str(out / "counts.csv"), "--schedule", "round_robin", "--seed", "1",
                 "--null-trials", "50", "--out", str(res)]) == 0
    ana = json.loads((res / "analysis.json").read_text())
    run = json.loads((out / "run.json").read_text())
    assert ana["counts_sha256"] == run["counts_sha256"]
    assert ana["chsh"]["S"] == pytest.approx(run["chsh"]["S"])


def test_analyze_bad_counts_exit_1(tmp_path, capsys):
    path = tmp_path / "c.csv"
    path.write_text("experiment_id,context,bin,n00,n01,n10,n11,shots\ne,xy,1,1,1,1,1,5\n")
    assert main(["analyze", str(path), "--schedule", "blocked", "--seed", "1"]) == 1
    assert "(xy, bin 1)" in capsys.readouterr().err


def test_analyze_with_calibration(tmp_path):
    _, out = _sim(tmp_path, "--readout-flip", "0.02", "0.02")
    cal = io.write_calibration(mitigation.tensored_flip(0.02), tmp_path / "cal.csv")
    assert main(["analyze", str(out / "counts.csv"), "--schedule", "round_robin", "--seed", "1",
                 "--null-trials", "30", "--calibration", str(cal), "--out", str(tmp_path / "a")]) == 0
    assert "drift_mitigated" in json.loads((tmp_path / "a" / "analysis.json").read_text())


def test_null_command(tmp_path, capsys):
    assert main(["null", "--seed", "2", "--trials", "200", "--shots-per-bin", "1024", "--num-bins", "6"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["trials"] == 200
    assert 0 < summary["mean"] < summary["q99"]


def test_null_needs_shape():
    assert main(["null", "--seed", "2"]) == 1


def test_mitigate_tools(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["mitigate", "calibrate", "--flip", "0.02", "0.03", "--out", str(a)]) == 0
    assert main(["mitigate", "calibrate", "--flip", "0.025", "0.03", "--shots", "5000", "--seed", "1",
                 "--out", str(b)]) == 0
    assert main(["mitigate", "condition", "--matrix", str(a)]) == 0
    capsys.readouterr()
    assert main(["mitigate", "compare", "--matrix", str(a), "--other", str(b)]) == 0
    assert json.loads(capsys.readouterr().out)["frobenius"] > 0


def test_mitigate_condition_gate_exit_2(tmp_path):
    m = np.eye(4)  # nearly singular: prep 11 reads as 10 almost always
    m[3, 3], m[2, 3] = 0.005, 0.995
    path = io.write_calibration(mitigation.AssignmentMatrix(m), tmp_path / "bad.csv")
    assert main(["mitigate", "condition", "--matrix", str(path)]) == 2


def test_mitigate_apply(tmp_path):
    _, out = _sim(tmp_path)
    cal = io.write_calibration(mitigation.tensored_flip(0.01), tmp_path / "cal.csv")
    dest = tmp_path / "mit.csv"
    assert main(["mitigate", "apply", "--matrix", str(cal), "--counts", str(out / "counts.csv"),
                 "--out", str(dest)]) == 0
    assert dest.read_text().startswith("context,bin,p00")


def test_mitigate_missing_matrix():
    with pytest.raises(SystemExit) as info:
        main(["mitigate", "condition"])
    assert info.value.code == 1


def test_binscan_and_report(tmp_path):
    scan = tmp_path / "scan.csv"
    assert main(["binscan", "--seed", "1", "--source", "quantum", "--shots-per-bin", "128", "--null-trials", "30",
                 "--bins", "3,6", "--amplitudes", "0,0.1", "--bootstrap-scan", "5", "--out", str(scan)]) == 0
    _, run = _sim(tmp_path)
    rep = tmp_path / "rep"
    args = ["report", "--runs", str(run / "run.json"), "--binscan", str(scan), "--out", str(rep)]
    assert main(args) == 0
    assert (rep / "schedule_table.csv").exists() and (rep / "binscan.csv").exists()


def test_report_nothing_to_do(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 1
