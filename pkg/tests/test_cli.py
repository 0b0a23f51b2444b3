import json

import numpy as np
import pytest

from hmmfrontier.cli import main
from hmmfrontier.harness import read_csv
from hmmfrontier.model import DensityGrid, ModelParams, save_model, theta_star
from hmmfrontier.moments import frobenius_loss_min_perm


def test_simulate_to_file(tmp_path):
    out = tmp_path / "y.csv"
    assert main(["simulate", "--n", "100", "--seed", "4", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x,y" and len(lines) == 101


def test_simulate_to_stdout(capsys):
    assert main(["simulate", "--n", "5", "--model", "iid"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 6


def test_direction_then_file_mode(tmp_path, capsys):
    d = tmp_path / "d.json"
    assert main(["direction", "--n", "6000", "--M", "2", "--tau", "4", "--out", str(d)]) == 0
    rec = json.loads(d.read_text())
    assert rec["tau"] == 4 and rec["D"] == 3
    assert main(["estimate-q", "--n", "5000", "--direction", f"file:{d}"]) == 0
    Q = np.array(json.loads(capsys.readouterr().out)["Q_hat"])
    assert np.abs(Q.sum(axis=1) - 1).max() <= 1e-15


def test_estimate_q_from_input(tmp_path, capsys):
    y = tmp_path / "y.csv"
    main(["simulate", "--n", "30000", "--seed", "2", "--out", str(y)])
    assert main(["estimate-q", "--input", str(y), "--direction", "oracle"]) == 0
    Q = np.array(json.loads(capsys.readouterr().out)["Q_hat"])
    assert frobenius_loss_min_perm(Q, theta_star().Q) < 0.05


def test_estimate_densities(capsys):
    assert main(["estimate-densities", "--n", "8192", "--direction", "oracle"]) == 0
    recs = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert [(r["estimator"], r["label"]) for r in recs] == [
        ("smooth", "plus"), ("smooth", "minus"), ("rough", "plus"), ("rough", "minus")]


def test_sweep_fit_rate(tmp_path, capsys):
    out = tmp_path / "s.csv"
    cfg = tmp_path / "c.yaml"
    cfg.write_text("n: 1024, 2048, 4096\nreps: 4\ndirection: oracle\n")
    assert main(["sweep", "--config", str(cfg), "--seed", "8", "--out", str(out),
                 "--threads", "3"]) == 0
    assert len(read_csv(out)) == 12
    capsys.readouterr()
    assert main(["fit-rate", str(out), "--estimator", "q", "--statistic", "rmse"]) == 0
    assert np.isfinite(json.loads(capsys.readouterr().out)["slope"])


def test_sweep_flags_override_config(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("reps: 5\nn: 600\n")
    out = tmp_path / "s.csv"
    main(["sweep", "--config", str(cfg), "--reps", "2", "--out", str(out)])
    assert len(read_csv(out)) == 2


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("reps: 2\nspeed: 3\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o.csv")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_sweep_without_out(capsys):
    assert main(["sweep", "--n", "600"]) == 2


@pytest.mark.parametrize("model", ["theta_star", "rate", "rough_smooth"])
def test_oracle_check_presets(model, capsys):
    assert main(["oracle-check", model]) == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith("PASS")


def test_oracle_check_degenerate_file(tmp_path, capsys):
    f = DensityGrid.uniform(3)
    save_model(ModelParams(0.3, 0.4, f, f), tmp_path / "m.json")
    assert main(["oracle-check", str(tmp_path / "m.json")]) == 0
    assert "note:" in capsys.readouterr().out


def test_unknown_model(capsys):
    assert main(["oracle-check", "nope"]) == 2
