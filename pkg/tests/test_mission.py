import numpy as np
import pytest

from spacelfr.errors import NonMonotonicTimesError, ParseError, ValidationError
from spacelfr.mission import (
    ARM_JOINTS,
    TILT_JOINTS,
    load_mission,
    load_waypoints,
    mission_trajectory,
    quintic_trajectory,
)


@pytest.fixture(scope="module")
def config():
    return load_mission()


def test_default_masses(config):
    assert config.chaser_hub.mass == 188.5
    assert config.target_hub.mass == 24.96
    assert config.target_hub.mass_uncertainty == pytest.approx(0.10)
    assert config.total_mass() == pytest.approx(435.0133, abs=1e-9)


def test_table_annotations(config):
    assert config.uncertainty["r_mass"] == pytest.approx(0.10)
    assert config.uncertainty["r_inertia"] == pytest.approx(0.10)
    assert config.uncertainty["r_omega1"] == pytest.approx(0.20)
    sa3 = config.solar_arrays["sa3"].appendage
    assert sa3.frequencies_hz[0] == pytest.approx(0.6493)
    assert sa3.freq_uncertainty == pytest.approx(0.20)
    sa1 = config.solar_arrays["sa1"].appendage
    assert sa1.frequencies_hz[0] == pytest.approx(1.2850)
    arm_masses = [l.body.mass for l in config.arm.links]
    assert arm_masses == [4.0, 3.7, 8.393, 2.275, 1.219, 1.219, 0.1879]


def test_validation_error_on_bad_fraction(tmp_path, config):
    import yaml
    doc = dict(config.raw)
    doc["uncertainty"] = dict(doc["uncertainty"], r_mass=1.5)
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(doc))
    with pytest.raises(ValidationError):
        load_mission(p)


def test_parse_error(tmp_path):
    p = tmp_path / "broken.yaml"
    p.write_text("{:::")
    with pytest.raises(ParseError):
        load_mission(p)


def test_round_trip_identical(tmp_path, config):
    p = tmp_path / "copy.yaml"
    config.save(p)
    again = load_mission(p)
    assert again.to_dict() == config.to_dict()
    assert again.total_mass() == config.total_mass()
    assert np.array_equal(again.docking.alpha_ref, config.docking.alpha_ref)


def test_phases(config):
    phases = config.phases()
    assert [p.label for p in phases] == ["decoupled", "arm-docked", "hub-docked"]
    assert config.phase_at(0.0).switches == (0.0, 0.0)
    assert config.phase_at(254.9).switches == (0.0, 0.0)
    assert config.phase_at(255.0).switches == (1.0, 0.0)
    assert config.phase_at(879.9).switches == (1.0, 0.0)
    assert config.phase_at(880.0).switches == (0.0, 1.0)
    assert config.phase_at(1500.0).switches == (0.0, 1.0)
    for p in phases:
        assert p.switches[0] * p.switches[1] == 0.0


# ---------------------------------------------------------------------------
# quintic trajectories
# ---------------------------------------------------------------------------


def test_rest_to_rest_quintic_polynomial():
    traj = quintic_trajectory({"j": [(0.0, 0.0), (1.0, 1.0)]})
    # q(t) = 10 t^3 - 15 t^4 + 6 t^5
    for t in (0.25, 0.5, 0.75):
        assert traj.value("j", t) == pytest.approx(10 * t**3 - 15 * t**4 + 6 * t**5)
    assert traj.value("j", 0.5) == pytest.approx(0.5)


def test_quintic_boundary_conditions():
    traj = quintic_trajectory({"j": [(0.0, -0.4), (2.0, 1.3), (5.0, 0.2)]})
    for knot in (0.0, 2.0, 5.0):
        assert traj.velocity("j", knot + 1e-12) == pytest.approx(0.0, abs=1e-8)
        assert traj.acceleration("j", knot + 1e-12) == pytest.approx(0.0, abs=1e-7)
    assert traj.value("j", 2.0) == pytest.approx(1.3)
    assert traj.value("j", 5.0) == pytest.approx(0.2)
    assert traj.value("j", 7.0) == pytest.approx(0.2)  # held after the last knot


def test_quintic_derivatives_match_finite_differences():
    traj = quintic_trajectory({"j": [(0.0, 0.0), (3.0, 2.0)]})
    h = 1e-4
    for t in (0.7, 1.1, 2.4):
        v_fd = (traj.value("j", t + h) - traj.value("j", t - h)) / (2 * h)
        a_fd = (traj.value("j", t + h) - 2 * traj.value("j", t) + traj.value("j", t - h)) / h**2
        assert traj.velocity("j", t) == pytest.approx(v_fd, rel=1e-6)
        assert traj.acceleration("j", t) == pytest.approx(a_fd, rel=1e-4, abs=1e-6)


def test_non_monotonic_times_rejected():
    with pytest.raises(NonMonotonicTimesError):
        quintic_trajectory({"j": [(0.0, 0.0), (0.0, 1.0)]})
    with pytest.raises(NonMonotonicTimesError):
        quintic_trajectory({"j": [(0.0, 0.0)]})


def test_mission_trajectory_hits_first_dock_reference(config):
    traj = mission_trajectory(config)
    assert traj.value("alpha2", config.timeline.first_dock) == pytest.approx(-np.pi / 2)
    assert traj.value("alpha4", config.timeline.first_dock) == pytest.approx(-np.pi / 2)
    for j in ("alpha1", "alpha3", "alpha5", "alpha6"):
        assert traj.value(j, config.timeline.first_dock) == pytest.approx(0.0)


def test_mission_trajectory_reaches_reference_at_second_dock(config):
    traj = mission_trajectory(config)
    alpha = np.array([traj.value(j, config.timeline.second_dock) for j in ARM_JOINTS])
    wrapped = np.arctan2(np.sin(alpha), np.cos(alpha))
    ref = np.arctan2(np.sin(config.docking.alpha_ref), np.cos(config.docking.alpha_ref))
    assert np.allclose(wrapped, ref, atol=1e-12)


def test_waypoint_override(tmp_path, config):
    import yaml
    p = tmp_path / "wp.yaml"
    p.write_text(yaml.safe_dump({"theta1": [[0.0, 0.0], [1500.0, 1.0]]}))
    override = load_waypoints(p)
    traj = mission_trajectory(config, override)
    assert traj.value("theta1", 1500.0) == pytest.approx(1.0)
    # other joints keep their defaults
    assert traj.value("theta2", 1500.0) == pytest.approx(np.pi)


def test_tilt_joints_static_for_target(config):
    traj = mission_trajectory(config)
    for j in ("theta3", "theta4"):
        for t in (0.0, 700.0, 1500.0):
            assert traj.value(j, t) == 0.0
