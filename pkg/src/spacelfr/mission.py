"""Mission dataset: ingestion, validation, trajectories and phase schedule.

The bundled default file (data/mission.yaml) holds the full two-spacecraft
dataset: hub and appendage mass/modal data, robotic-arm geometry, docking
interfaces, control weights and the mission timeline.  Everything numeric
about the scenario lives in the file, not in code.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import NonMonotonicTimesError, ParseError, ValidationError
from .multibody import FlexibleAppendageData, RigidBodyData

ARM_JOINTS = ("alpha1", "alpha2", "alpha3", "alpha4", "alpha5", "alpha6")
TILT_JOINTS = ("theta1", "theta2", "theta3", "theta4")
ALL_JOINTS = ARM_JOINTS + TILT_JOINTS


def _check_dcm(mat, path):
    m = np.asarray(mat, dtype=float)
    if m.shape != (3, 3):
        raise ValidationError(path, "DCM must be 3x3")
    if np.max(np.abs(m @ m.T - np.eye(3))) > 1e-9:
        raise ValidationError(path, "DCM is not orthonormal")
    if np.linalg.det(m) < 0.0:
        raise ValidationError(path, "DCM must be proper (right-handed, det = +1)")
    return m


def _unit(vec, path):
    v = np.asarray(vec, dtype=float)
    if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValidationError(path, "must be a unit 3-vector")
    return v


@dataclass(frozen=True)
class ArrayMount:
    """One solar array: mounting info plus its modal appendage data."""

    name: str
    hub: str
    mount_point: str
    mount_dcm: np.ndarray
    tilt_axis: np.ndarray
    tilt_joint: str
    appendage: FlexibleAppendageData


@dataclass(frozen=True)
class ArmLink:
    name: str
    body: RigidBodyData
    child_offset: np.ndarray
    joint_axis: np.ndarray | None


@dataclass(frozen=True)
class ArmModel:
    base_point: str
    base_dcm: np.ndarray
    links: tuple


@dataclass(frozen=True)
class DockingInfo:
    docked_dcm: np.ndarray      # chaser frame <- target frame when hub-docked
    grasp_dcm: np.ndarray       # target frame <- end-effector frame
    alpha_ref: np.ndarray
    clamp_stiffness: float
    clamp_damping: float


@dataclass(frozen=True)
class Timeline:
    duration: float
    first_dock: float
    second_dock: float
    tilt_start: float


@dataclass(frozen=True)
class MissionPhase:
    label: str
    switches: tuple            # (delta_C1, delta_C2)
    window: tuple              # [t0, t1)

    def __post_init__(self):
        d1, d2 = self.switches
        if d1 * d2 != 0.0:
            raise ValidationError("phase.switches", "delta_C1 and delta_C2 cannot both be 1")


@dataclass(frozen=True)
class MissionConfig:
    chaser_hub: RigidBodyData
    target_hub: RigidBodyData
    solar_arrays: dict
    arm: ArmModel
    docking: DockingInfo
    timeline: Timeline
    uncertainty: dict
    weights: dict
    sensors: dict
    controller: dict
    analysis: dict
    waypoints: dict
    raw: dict = field(repr=False, default=None)

    def total_mass(self):
        m = self.chaser_hub.mass + self.target_hub.mass
        m += sum(a.appendage.rigid.mass for a in self.solar_arrays.values())
        m += sum(l.body.mass for l in self.arm.links)
        return float(m)

    def phases(self):
        t = self.timeline
        return (
            MissionPhase("decoupled", (0.0, 0.0), (0.0, t.first_dock)),
            MissionPhase("arm-docked", (1.0, 0.0), (t.first_dock, t.second_dock)),
            MissionPhase("hub-docked", (0.0, 1.0), (t.second_dock, t.duration)),
        )

    def phase_at(self, t):
        phases = self.phases()
        for ph in phases:
            if ph.window[0] <= t < ph.window[1]:
                return ph
        return phases[-1] if t >= phases[-1].window[0] else phases[0]

    def to_dict(self):
        return self.raw

    def save(self, path):
        with open(path, "w") as fh:
            yaml.safe_dump(self.raw, fh, sort_keys=False)


def _build_body(d, path):
    try:
        return RigidBodyData(
            mass=float(d["mass"]),
            com=d["com"],
            inertia_at_com=d["inertia_at_com"],
            connection_points=d.get("connection_points", {}),
            mass_uncertainty=float(d.get("mass_uncertainty", 0.0)),
            inertia_uncertainty=tuple(d.get("inertia_uncertainty", (0.0, 0.0, 0.0))),
        )
    except KeyError as e:
        raise ValidationError(f"{path}.{e.args[0]}", "missing field") from None


def _build_array(name, d):
    path = f"solar_arrays.{name}"
    rigid = RigidBodyData(
        mass=float(d["mass"]),
        com=d["com_offset"],
        inertia_at_com=d["inertia_at_com"],
    )
    app = FlexibleAppendageData(
        rigid=rigid,
        frequencies_hz=tuple(d["frequencies_hz"]),
        dampings=tuple(d["dampings"]),
        participation=d["participation"],
        freq_uncertainty=float(d.get("freq_uncertainty", 0.0)),
    )
    if d["hub"] not in ("chaser", "target"):
        raise ValidationError(f"{path}.hub", "must be 'chaser' or 'target'")
    return ArrayMount(
        name=name,
        hub=d["hub"],
        mount_point=d["mount_point"],
        mount_dcm=_check_dcm(d["mount_dcm"], f"{path}.mount_dcm"),
        tilt_axis=_unit(d["tilt_axis"], f"{path}.tilt_axis"),
        tilt_joint=d["tilt_joint"],
        appendage=app,
    )


def _build_arm(d):
    links = []
    for i, ld in enumerate(d["links"]):
        path = f"arm.links[{i}]"
        child = np.asarray(ld["child_offset"], dtype=float)
        body = RigidBodyData(
            mass=float(ld["mass"]),
            com=ld["com"],
            inertia_at_com=ld["inertia_at_com"],
            connection_points={"parent": np.zeros(3), "child": child},
        )
        axis = ld.get("joint_axis")
        links.append(ArmLink(
            name=ld.get("name", f"L{i}"),
            body=body,
            child_offset=child,
            joint_axis=None if axis is None else _unit(axis, f"{path}.joint_axis"),
        ))
    if sum(1 for l in links if l.joint_axis is not None) != len(links) - 1:
        raise ValidationError("arm.links", "every link but the last needs a joint axis")
    return ArmModel(
        base_point=d["base_point"],
        base_dcm=_check_dcm(d["base_dcm"], "arm.base_dcm"),
        links=tuple(links),
    )


def load_mission(path=None):
    """Load and validate a mission file (bundled default when path is None)."""
    if path is None:
        ref = importlib.resources.files("spacelfr") / "data" / "mission.yaml"
        text = ref.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ParseError(f"cannot parse mission file: {e}") from None
    if not isinstance(raw, dict):
        raise ParseError("mission file must hold a mapping")

    try:
        chaser = _build_body(raw["chaser_hub"], "chaser_hub")
        target = _build_body(raw["target_hub"], "target_hub")
        arrays = {name: _build_array(name, d) for name, d in raw["solar_arrays"].items()}
        arm = _build_arm(raw["arm"])
        dk = raw["docking"]
        alpha_ref = np.asarray(dk["alpha_ref"], dtype=float)
        if alpha_ref.shape != (len(ARM_JOINTS),):
            raise ValidationError("docking.alpha_ref", f"needs {len(ARM_JOINTS)} joint values")
        docking = DockingInfo(
            docked_dcm=_check_dcm(dk["docked_dcm"], "docking.docked_dcm"),
            grasp_dcm=_check_dcm(dk["grasp_dcm"], "docking.grasp_dcm"),
            alpha_ref=alpha_ref,
            clamp_stiffness=float(dk["clamp_stiffness"]),
            clamp_damping=float(dk["clamp_damping"]),
        )
        tl = raw["timeline"]
        timeline = Timeline(float(tl["duration"]), float(tl["first_dock"]),
                            float(tl["second_dock"]), float(tl["tilt_start"]))
        if not 0.0 < timeline.first_dock < timeline.second_dock < timeline.duration:
            raise ValidationError("timeline", "need 0 < first_dock < second_dock < duration")
        unc = {k: float(v) for k, v in raw["uncertainty"].items()}
        for k, v in unc.items():
            if not 0.0 <= v < 1.0:
                raise ValidationError(f"uncertainty.{k}", f"fraction {v} outside [0, 1)")
        waypoints = {j: [(float(t), float(q)) for t, q in raw["waypoints"][j]]
                     for j in raw["waypoints"]}
        missing = [j for j in ALL_JOINTS if j not in waypoints]
        if missing:
            raise ValidationError("waypoints", f"missing joints {missing}")
    except KeyError as e:
        raise ValidationError(str(e.args[0]), "missing section or field") from None

    # the dataset annotations and the uncertainty section must agree
    if abs(target.mass_uncertainty - unc.get("r_mass", 0.0)) > 1e-12:
        raise ValidationError("target_hub.mass_uncertainty", "does not match uncertainty.r_mass")
    for f in target.inertia_uncertainty:
        if abs(f - unc.get("r_inertia", 0.0)) > 1e-12:
            raise ValidationError("target_hub.inertia_uncertainty", "does not match uncertainty.r_inertia")
    for name, a in arrays.items():
        if abs(a.appendage.freq_uncertainty - unc.get("r_omega1", 0.0)) > 1e-12:
            raise ValidationError(f"solar_arrays.{name}.freq_uncertainty",
                                  "does not match uncertainty.r_omega1")

    return MissionConfig(
        chaser_hub=chaser,
        target_hub=target,
        solar_arrays=arrays,
        arm=arm,
        docking=docking,
        timeline=timeline,
        uncertainty=unc,
        weights=dict(raw["weights"]),
        sensors=dict(raw["sensors"]),
        controller=dict(raw["controller"]),
        analysis=dict(raw["analysis"]),
        waypoints=waypoints,
        raw=raw,
    )


# ---------------------------------------------------------------------------
# joint trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JointTrajectory:
    """Per-joint piecewise rest-to-rest quintic interpolation of waypoints."""

    knots: dict          # joint -> times array
    coefficients: dict   # joint -> (n_seg, 6) coefficients in normalized time

    def _segment(self, joint, t):
        times = self.knots[joint]
        coeffs = self.coefficients[joint]
        if t <= times[0]:
            return None, float(coeffs[0, 0])
        if t >= times[-1]:
            last = coeffs[-1]
            return None, float(last.sum())
        k = int(np.searchsorted(times, t, side="right") - 1)
        u = (t - times[k]) / (times[k + 1] - times[k])
        return (k, u, times[k + 1] - times[k]), None

    def value(self, joint, t):
        seg, held = self._segment(joint, t)
        if seg is None:
            return held
        k, u, _ = seg
        return float(np.polyval(self.coefficients[joint][k][::-1], u))

    def velocity(self, joint, t):
        seg, _ = self._segment(joint, t)
        if seg is None:
            return 0.0
        k, u, dt = seg
        c = self.coefficients[joint][k]
        dc = np.array([i * c[i] for i in range(1, 6)])
        return float(np.polyval(dc[::-1], u) / dt)

    def acceleration(self, joint, t):
        seg, _ = self._segment(joint, t)
        if seg is None:
            return 0.0
        k, u, dt = seg
        c = self.coefficients[joint][k]
        ddc = np.array([i * (i - 1) * c[i] for i in range(2, 6)])
        return float(np.polyval(ddc[::-1], u) / dt ** 2)

    def sample(self, joint, times):
        return np.array([self.value(joint, t) for t in np.atleast_1d(times)])

    def joints(self):
        return tuple(self.knots)


def quintic_trajectory(waypoints):
    """Build rest-to-rest quintic segments through the given waypoints.

    `waypoints` maps joint name to a list of (time, angle) pairs with strictly
    increasing times (at least two per joint).  Velocity and acceleration are
    zero at every waypoint and the angles are interpolated exactly.
    """
    knots, coefficients = {}, {}
    for joint, pts in waypoints.items():
        if len(pts) < 2:
            raise NonMonotonicTimesError(f"{joint}: need at least two waypoints")
        times = np.array([float(t) for t, _ in pts])
        vals = np.array([float(q) for _, q in pts])
        if np.any(np.diff(times) <= 0.0):
            raise NonMonotonicTimesError(f"{joint}: waypoint times must strictly increase")
        segs = np.zeros((len(pts) - 1, 6))
        for k in range(len(pts) - 1):
            dq = vals[k + 1] - vals[k]
            segs[k] = [vals[k], 0.0, 0.0, 10.0 * dq, -15.0 * dq, 6.0 * dq]
        knots[joint] = times
        coefficients[joint] = segs
    return JointTrajectory(knots=knots, coefficients=coefficients)


def mission_trajectory(config, waypoint_override=None):
    """Trajectory from the config waypoints, optionally overridden per joint."""
    wps = dict(config.waypoints)
    if waypoint_override:
        wps.update(waypoint_override)
    return quintic_trajectory(wps)


def load_waypoints(path):
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ParseError(f"cannot parse waypoint file: {e}") from None
    return {j: [(float(t), float(q)) for t, q in pts] for j, pts in raw.items()}
