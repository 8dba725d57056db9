import json
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ncsgain.cli import main
from ncsgain.files import model_json, parse_gains, read_trace_columns
from ncsgain.ncsmodel import ContinuousMode, PlantMode

DATA = Path(__file__).resolve().parents[1] / "src" / "ncsgain" / "data"
MODEL = str(DATA / "dc_motor.json")
GAINS_010 = str(DATA / "dc_motor_gains_h010.json")
GAINS_020 = str(DATA / "dc_motor_gains_h020.json")


def test_discretize_zero_dynamics(tmp_path, capsys):
    model = tmp_path / "zero.json"
    model.write_text(model_json(0.5, 1, continuous=[ContinuousMode(np.zeros((2, 2)), [[1.0], [2.0]])]))
    out = tmp_path / "disc.json"
    assert main(["discretize", str(model), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    np.testing.assert_allclose(doc["discrete_modes"][0]["f"], np.eye(2))
    np.testing.assert_allclose(doc["discrete_modes"][0]["g"], [[0.5], [1.0]])
    assert "F1 =" in capsys.readouterr().out


def test_discretize_rejects_discrete_model(tmp_path):
    model = tmp_path / "d.json"
    model.write_text(model_json(1.0, 1, discrete=[PlantMode([[0.5]], [[1.0]])]))
    assert main(["discretize", str(model)]) == 2


def test_verify_published_gains(capsys):
    assert main(["verify", MODEL, GAINS_010]) == 0
    assert main(["verify", MODEL, GAINS_020]) == 0
    assert "worst" in capsys.readouterr().out.lower()


def test_verify_zero_gains_follows_computation(tmp_path, capsys):
    # the open-loop motor modes are stable, so zero gains are certifiable
    gains = tmp_path / "zero.json"
    gains.write_text(json.dumps({"gains": [[[0.0, 0.0]]] * 3}))
    assert main(["verify", MODEL, str(gains), "--h", "0.1"]) == 0


def test_verify_destabilizing_gains_fails(tmp_path):
    gains = tmp_path / "bad.json"
    gains.write_text(json.dumps({"gains": [[[40.0, 40.0]]] * 3}))
    assert main(["verify", MODEL, str(gains), "--h", "0.1"]) == 5


def test_simulate_settles_at_frozen_step(tmp_path, capsys):
    out = tmp_path / "t.csv"
    assert main(["simulate", MODEL, GAINS_010, "--seed", "42", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert re.search(r"settled at step: 5\b", text)
    header, data = read_trace_columns(out.read_text())
    assert data.shape[0] == 200


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["simulate", MODEL, GAINS_010, "--seed", "7", "--drop-model", "uniform-eta",
                     "--switch", "random-step", "--dwell", "3", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_initial_state_flag(tmp_path):
    out = tmp_path / "t.csv"
    assert main(["simulate", MODEL, GAINS_010, "--x0", "1", "0", "--drop-model", "none",
                 "--switch", "fixed", "--mode", "2", "--out", str(out)]) == 0
    header, data = read_trace_columns(out.read_text())
    assert data[0, header.index("x1")] == 1.0
    assert set(data[:, header.index("mode")]) == {2.0}
    assert data[:, header.index("effective")].all()


def test_simulate_without_bound_reports_violation(tmp_path):
    assert main(["simulate", MODEL, GAINS_010, "--p-loss", "0.9", "--no-enforce-bound",
                 "--out", str(tmp_path / "t.csv")]) == 6


def test_simulate_bad_p_loss(tmp_path):
    assert main(["simulate", MODEL, GAINS_010, "--p-loss", "0.1", "0.2", "0.3",
                 "--out", str(tmp_path / "t.csv")]) == 2


def test_synthesize_then_verify(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["synthesize", MODEL, "--h", "0.2", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["status"] == "Stabilized"
    assert doc["plant_fingerprint"].startswith("sha256:")
    assert doc["sample_period"] == 0.2
    assert main(["verify", MODEL, str(out)]) == 0


def test_synthesize_unstabilizable(tmp_path):
    model = tmp_path / "m.json"
    model.write_text(model_json(1.0, 1, discrete=[PlantMode([[2.0]], [[0.0]])]))
    out = tmp_path / "g.json"
    assert main(["synthesize", str(model), "--out", str(out)]) == 4
    assert json.loads(out.read_text())["status"] == "InitializationFailed"


def test_malformed_model_exit_code(tmp_path, capsys):
    doc = json.loads((DATA / "dc_motor.json").read_text())
    doc.pop("n_drop")
    model = tmp_path / "m.json"
    model.write_text(json.dumps(doc))
    assert main(["synthesize", str(model), "--out", str(tmp_path / "g.json")]) == 2
    assert "n_drop" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert main(["verify", str(tmp_path / "nope.json"), GAINS_010]) == 2


def test_plot(tmp_path):
    trace = tmp_path / "t.csv"
    assert main(["simulate", MODEL, GAINS_010, "--seed", "1", "--out", str(trace)]) == 0
    svgs = []
    for name in ("a.svg", "b.svg"):
        assert main(["plot", str(trace), "--out", str(tmp_path / name), "--title", "motor"]) == 0
        svgs.append((tmp_path / name).read_text())
    assert svgs[0] == svgs[1]
    assert svgs[0].count('<polyline class="state"') == 2
    assert main(["plot", str(trace), "--columns", "u", "--out", str(tmp_path / "u.svg")]) == 0
    assert (tmp_path / "u.svg").read_text().count("<polyline") == 1
    assert main(["plot", str(trace), "--columns", "nope", "--out", str(tmp_path / "n.svg")]) == 2


def test_plot_empty_trace(tmp_path):
    trace = tmp_path / "empty.csv"
    trace.write_text("")
    assert main(["plot", str(trace), "--out", str(tmp_path / "e.svg")]) == 2


@pytest.mark.parametrize("h", ["0.1", "0.2"])
def test_demo(tmp_path, capsys, h):
    out = tmp_path / "demo"
    assert main(["demo", "--h", h, "--out-dir", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["discretization.txt", "gains.json", "model.json", "trace.csv", "trace.svg", "verification.txt"]
    gains = parse_gains((out / "gains.json").read_text())
    assert gains.status == "Stabilized"


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ncsgain.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("discretize", "synthesize", "verify", "simulate", "plot", "demo"):
        assert name in proc.stdout
