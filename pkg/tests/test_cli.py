import json
import os

import numpy as np
import pytest

from spacelfr.cli import main
from spacelfr.serialize import load_lfr, read_csv


def run(args):
    return main(args)


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as e:
        run(["model", "--mode", "bogus", "--out", "/tmp/x"])
    assert e.value.code == 2


def test_model_command_writes_audit(tmp_path):
    out = tmp_path / "model"
    assert run(["model", "--out", str(out), "--mode", "switched"]) == 0
    doc = json.loads((out / "model.json").read_text())
    assert doc["kind"] == "lfr-model"
    audit = (out / "structure.txt").read_text()
    # the diagonal order of the uncertainty audit
    order = ["sa1.delta_omega1", "sa2.delta_omega1", "sa3.delta_omega1",
             "sa4.delta_omega1", "theta1.tau", "alpha1.tau", "delta_C1",
             "delta_C2", "rh2.delta_m"]
    positions = [audit.index(name) for name in order]
    assert positions == sorted(positions)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "model"
    model = load_lfr(out / "model.json")
    assert model.occurrences()["delta_C1"] == 16


def test_model_command_deterministic(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run(["model", "--out", str(out1)])
    run(["model", "--out", str(out2)])
    assert (out1 / "model.json").read_bytes() == (out2 / "model.json").read_bytes()


def test_freqresp_csv(tmp_path):
    out = tmp_path / "fr"
    code = run(["freqresp", "--out", str(out), "--time", "300", "--points", "40",
                "--channels", "T1:w1,T2:w2"])
    assert code == 0
    header, rows = read_csv(out / "freqresp.csv")
    assert header[0] == "omega_hz"
    assert len(header) == 1 + 2 * 2
    f = np.array([r[0] for r in rows])
    assert np.all(np.diff(f) > 0)
    assert len(rows) == 40


def test_freqresp_default_all_exogenous(tmp_path):
    out = tmp_path / "fr2"
    assert run(["freqresp", "--out", str(out), "--points", "5"]) == 0
    header, rows = read_csv(out / "freqresp.csv")
    assert len(header) == 1 + 2 * 36


def test_freqresp_unknown_channel(tmp_path):
    out = tmp_path / "fr3"
    code = run(["freqresp", "--out", str(out), "--channels", "nope:w1"])
    assert code == 4


def test_traj_command(tmp_path):
    out = tmp_path / "traj"
    assert run(["traj", "--out", str(out), "--dt", "1.0"]) == 0
    header, rows = read_csv(out / "trajectory.csv")
    assert len(rows) == 1501
    header_i, rows_i = read_csv(out / "inertia.csv")
    assert header_i == ["t", "Jxx", "Jyy", "Jzz", "Jxy", "Jxz", "Jyz"]
    t = np.array([r[0] for r in rows_i])
    jyy = np.array([r[2] for r in rows_i])
    tilt = t >= 1100.0
    assert np.max(np.abs(jyy[tilt] / jyy[tilt][0] - 1.0)) < 1e-9


def test_traj_waypoint_override(tmp_path):
    import yaml
    wp = tmp_path / "wp.yaml"
    wp.write_text(yaml.safe_dump({"alpha6": [[0.0, 0.0], [1500.0, 0.25]]}))
    out = tmp_path / "traj2"
    assert run(["traj", "--out", str(out), "--waypoints", str(wp)]) == 0
    header, rows = read_csv(out / "trajectory.csv")
    col = header.index("alpha6")
    assert rows[-1][col] == pytest.approx(0.25)


@pytest.mark.slow
def test_synth_and_mu_pipeline(tmp_path):
    out = tmp_path / "synth"
    code = run(["synth", "--out", str(out), "--grid", "5", "--budget", "2500"])
    assert code == 0  # gamma < 1 on this small grid
    doc = json.loads((out / "gains.json").read_text())
    assert doc["gamma"] < 1.0
    assert np.asarray(doc["gains"]).shape == (3, 6)
    report = (out / "report.txt").read_text()
    assert "gamma achieved" in report

    mu_out = tmp_path / "mu"
    code = run(["mu", "--out", str(mu_out), "--gains", str(out / "gains.json"),
                "--experiment", "mission", "--grid", "3", "--freq-density", "6"])
    assert code == 0
    header, rows = read_csv(mu_out / "mu_surface.csv")
    assert header == ["t", "omega_hz", "mu_upper", "mu_lower"]
    uppers = np.array([r[2] for r in rows])
    lowers = np.array([r[3] for r in rows])
    assert np.all(uppers >= lowers - 1e-12)
    assert len({r[0] for r in rows}) == 3
    assert "peak mu upper bound" in (mu_out / "summary.txt").read_text()


@pytest.mark.slow
def test_mu_docking_and_worstcase(tmp_path):
    gains = tmp_path / "gains.json"
    from spacelfr import assembly as asy, synthesis as syn
    from spacelfr.mission import load_mission, mission_trajectory
    config = load_mission()
    traj = mission_trajectory(config)
    J = asy.composite_inertia(config, traj, config.timeline.first_dock)
    syn.baseline_controller(J).save(gains)

    out = tmp_path / "dock"
    code = run(["mu", "--out", str(out), "--gains", str(gains),
                "--experiment", "docking", "--grid", "4", "--freq-density", "5",
                "--k-min", "10", "--k-max", "1e5"])
    assert code == 0
    header, rows = read_csv(out / "mu_surface.csv")
    assert header[0] == "stiffness"
    assert len({r[0] for r in rows}) == 4

    out2 = tmp_path / "wc"
    code = run(["mu", "--out", str(out2), "--gains", str(gains),
                "--experiment", "worstcase", "--grid", "2", "--freq-density", "3"])
    assert code == 0
    header, rows = read_csv(out2 / "worst_case.csv")
    assert header == ["omega_hz", "channel", "bound", "nominal"]
    for r in rows:
        assert r[2] >= r[3] - 1e-9
