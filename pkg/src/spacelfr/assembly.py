"""Plant assembly: the full two-spacecraft stack in its three variants.

`switched` wires the coupling gates and the shared docking port of the target
hub so that one model covers the decoupled, arm-docked and hub-docked
configurations; `dock7` replaces the gates with one spring-damper at the
grasp interface; `dock8` closes the kinematic chain with two spring-dampers
at a consistent arm reference configuration.  Geometry (tilt angles, joint
angles, gate values) stays parameterized in the structure and is substituted
per mission time by `model_grid`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidModeError, LoopClosureViolationError
from .lfr import LfrModel, close_blocks
from .mission import ARM_JOINTS, TILT_JOINTS
from .multibody import (
    accel_labels,
    appendage_effective_mass,
    coupling_switch,
    frame_transform,
    kinematic_model,
    rigid_multiport,
    rotation_dcm,
    shared_port_kinematics,
    spring_damper,
    tan_quarter,
    tilt_transform,
    titop_link,
    wrench_labels,
)
from .statespace import connect, gain

TORQUE_IN = wrench_labels("rh1", "G1")[3:]
FORCE_IN = wrench_labels("rh1", "G1")[:3]
RATE_OUT = accel_labels("rh1", "G1")[3:]
W_EXT_IN = wrench_labels("rh1", "G1")
TWIST_OUT = accel_labels("rh1", "G1")

MODES = ("switched", "dock7", "dock8")
LOOP_CLOSURE_TOL = 1e-6


@dataclass(frozen=True)
class Pose:
    """Geometric configuration: joint angles and coupling-gate values."""

    alpha: np.ndarray
    theta: np.ndarray
    switches: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))


def pose_at(config, trajectory, t):
    alpha = np.array([trajectory.value(j, t) for j in ARM_JOINTS])
    theta = np.array([trajectory.value(j, t) for j in TILT_JOINTS])
    return Pose(alpha=alpha, theta=theta, switches=config.phase_at(t).switches)


# ---------------------------------------------------------------------------
# forward kinematics
# ---------------------------------------------------------------------------


def arm_frames(config, alpha):
    """Link frames and joint origins in the chaser frame at configuration alpha.

    Returns (frames, tip_position, tip_dcm) with one (dcm, origin) pair per
    link.
    """
    arm = config.arm
    R = arm.base_dcm.copy()
    pos = config.chaser_hub.point(arm.base_point).copy()
    frames = []
    for i, link in enumerate(arm.links):
        frames.append((R.copy(), pos.copy()))
        pos = pos + R @ link.child_offset
        if link.joint_axis is not None:
            R = R @ rotation_dcm(link.joint_axis, alpha[i])
    return frames, pos, R


def tip_pose(config, alpha):
    _, pos, R = arm_frames(config, alpha)
    return pos, R


def carried_target_pose(config, alpha):
    """Pose (dcm chaser<-target, G2 position) of the target riding the arm."""
    tip, R_tip = tip_pose(config, alpha)
    R12 = R_tip @ config.docking.grasp_dcm.T
    g2 = tip - R12 @ config.target_hub.point("D2")
    return R12, g2


def docked_target_pose(config):
    R12 = config.docking.docked_dcm
    g2 = config.chaser_hub.point("D1") - R12 @ config.target_hub.point("D3")
    return R12, g2


def target_pose(config, trajectory, t):
    """Target pose at mission time t, or None while decoupled."""
    tl = config.timeline
    if t < tl.first_dock:
        return None
    if t < tl.second_dock:
        alpha = np.array([trajectory.value(j, t) for j in ARM_JOINTS])
        return carried_target_pose(config, alpha)
    return docked_target_pose(config)


def loop_closure_check(config, alpha_ref):
    """Forward-kinematics gap between the end-effector and the grasp fixture
    with the target mated at D1: returns (position m, orientation rad)."""
    tip, R_tip = tip_pose(config, np.asarray(alpha_ref, dtype=float))
    R12, g2 = docked_target_pose(config)
    fixture_pos = g2 + R12 @ config.target_hub.point("D2")
    fixture_dcm = R12 @ config.docking.grasp_dcm
    pos_res = float(np.linalg.norm(tip - fixture_pos))
    rel = fixture_dcm.T @ R_tip
    ang_res = float(np.arccos(np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0)))
    return pos_res, ang_res


# ---------------------------------------------------------------------------
# assembly plumbing
# ---------------------------------------------------------------------------


class _Assembly:
    """Collects blocks, wires and canonical structure entries."""

    def __init__(self):
        self.blocks = []
        self.wires = []
        self._cats = {}

    def add(self, frag, category=None):
        """Register an LfrModel fragment (or bare model) under a category."""
        core = frag.core if isinstance(frag, LfrModel) else frag
        self.blocks.append(core)
        if isinstance(frag, LfrModel) and frag.structure:
            cat = self._cats.setdefault(category, {"entries": [], "w": [], "z": []})
            cat["entries"].extend(frag.structure)
            cat["w"].extend(frag.group("w"))
            cat["z"].extend(frag.group("z"))
        return frag

    def wire6(self, src, dst):
        self.wires.extend(zip(src, dst))

    def finish(self, categories, external_in, external_out, groups):
        entries, w, z = [], [], []
        for cat in categories:
            if cat in self._cats:
                entries.extend(self._cats[cat]["entries"])
                w.extend(self._cats[cat]["w"])
                z.extend(self._cats[cat]["z"])
        core = connect(self.blocks, self.wires,
                       list(w) + list(external_in),
                       list(z) + list(external_out))
        all_groups = {"w": tuple(w), "z": tuple(z)}
        all_groups.update(groups)
        return LfrModel(core, tuple(entries), all_groups)


def _gain6(name, mat):
    return gain(mat, tuple(f"{name}.in.{i}" for i in range(6)),
                tuple(f"{name}.out.{i}" for i in range(6)))


def _gain_labels(name):
    return (tuple(f"{name}.in.{i}" for i in range(6)),
            tuple(f"{name}.out.{i}" for i in range(6)))


def _rotation_pair(joint, axis, parameterize, angle=0.0):
    """Coordinate-change pair across a revolute joint.

    fwd maps parent-frame twists into the child frame (transposed rotation),
    ret maps child-frame wrenches back into the parent frame.
    """
    if parameterize:
        fwd = tilt_transform(axis, name=f"{joint}.fwd", delta_name=f"{joint}.tau", transposed=True)
        ret = tilt_transform(axis, name=f"{joint}.ret", delta_name=f"{joint}.tau", transposed=False)
        return fwd, ret
    T = frame_transform(rotation_dcm(axis, angle))
    return _gain6(f"{joint}.fwd", T.T), _gain6(f"{joint}.ret", T)


def _in6(block):
    return tuple(l for l in block.input_labels if ".in." in l)


def _out6(block):
    return tuple(l for l in block.output_labels if ".out." in l)


def _add_array(asm, sa, hub_name, uncertain, parameterize, theta):
    """Wire one solar array onto its hub port."""
    app = asm.add(appendage_effective_mass(sa.appendage, uncertain_mode1=uncertain, name=sa.name),
                  category="omega")
    mount_t = asm.add(_gain6(f"{sa.name}.mountT", frame_transform(sa.mount_dcm.T)))
    mount_r = asm.add(_gain6(f"{sa.name}.mountR", frame_transform(sa.mount_dcm)))
    react = asm.add(_gain6(f"{sa.name}.react", -np.eye(6)))
    fwd, ret = _rotation_pair(sa.tilt_joint, sa.tilt_axis, parameterize, theta)
    asm.add(fwd, category="theta")
    asm.add(ret, category="theta")

    hub_acc = accel_labels(hub_name, sa.mount_point)
    hub_wr = wrench_labels(hub_name, sa.mount_point)
    fwd_core = fwd.core if isinstance(fwd, LfrModel) else fwd
    ret_core = ret.core if isinstance(ret, LfrModel) else ret
    asm.wire6(hub_acc, _in6(mount_t))
    asm.wire6(_out6(mount_t), _in6(fwd_core))
    asm.wire6(_out6(fwd_core), accel_labels(sa.name, "P"))
    asm.wire6(wrench_labels(sa.name, "P"), _in6(react))
    asm.wire6(_out6(react), _in6(ret_core))
    asm.wire6(_out6(ret_core), _in6(mount_r))
    asm.wire6(_out6(mount_r), hub_wr)


def _add_arm(asm, config, parameterize, alpha):
    """Wire the robotic arm chain onto the chaser hub; returns tip labels."""
    arm = config.arm
    base_t = asm.add(_gain6("armbase.fwd", frame_transform(arm.base_dcm.T)))
    base_r = asm.add(_gain6("armbase.ret", frame_transform(arm.base_dcm)))
    asm.wire6(accel_labels("rh1", arm.base_point), _in6(base_t))
    asm.wire6(_out6(base_r), wrench_labels("rh1", arm.base_point))

    prev_acc = _out6(base_t)
    prev_wr = _in6(base_r)
    for i, link in enumerate(arm.links):
        name = link.name
        asm.add(titop_link(link.body, "parent", "child", name=name))
        asm.wire6(prev_acc, accel_labels(name, "parent"))
        asm.wire6(wrench_labels(name, "parent"), prev_wr)
        if link.joint_axis is not None:
            joint = ARM_JOINTS[i]
            fwd, ret = _rotation_pair(joint, link.joint_axis, parameterize, alpha[i])
            asm.add(fwd, category="alpha")
            asm.add(ret, category="alpha")
            fwd_core = fwd.core if isinstance(fwd, LfrModel) else fwd
            ret_core = ret.core if isinstance(ret, LfrModel) else ret
            asm.wire6(accel_labels(name, "child"), _in6(fwd_core))
            prev_acc = _out6(fwd_core)
            prev_wr = _in6(ret_core)
            asm.wire6(_out6(ret_core), wrench_labels(name, "child"))
    tip = arm.links[-1].name
    return accel_labels(tip, "child"), wrench_labels(tip, "child")


def _chaser_side(asm, config, uncertain, parameterize, pose, arm_parameterize=None):
    hub = asm.add(rigid_multiport(config.chaser_hub, ["G1", "P1", "P2", "J0", "D1"], name="rh1"))
    theta = dict(zip(TILT_JOINTS, pose.theta if pose is not None else np.zeros(4)))
    for sa in config.solar_arrays.values():
        if sa.hub == "chaser":
            _add_array(asm, sa, "rh1", uncertain, parameterize, theta[sa.tilt_joint])
    tip_acc, tip_wr = _add_arm(asm, config,
                               parameterize if arm_parameterize is None else arm_parameterize,
                               pose.alpha if pose is not None else np.zeros(6))
    return hub, tip_acc, tip_wr


def _add_target_arrays(asm, config, uncertain, parameterize, pose):
    theta = dict(zip(TILT_JOINTS, pose.theta if pose is not None else np.zeros(4)))
    for sa in config.solar_arrays.values():
        if sa.hub == "target":
            _add_array(asm, sa, "rh2", uncertain, parameterize, theta[sa.tilt_joint])


def _grasp_gains(asm, config):
    g = config.docking.grasp_dcm
    fwd = asm.add(_gain6("grasp.fwd", frame_transform(g)))
    ret = asm.add(_gain6("grasp.ret", frame_transform(g.T)))
    return fwd, ret


def _docked_gains(asm, config):
    r12 = config.docking.docked_dcm
    fwd = asm.add(_gain6("docked.fwd", frame_transform(r12.T)))
    ret = asm.add(_gain6("docked.ret", frame_transform(r12)))
    return fwd, ret


def _external_groups():
    return {"exogenous_in": W_EXT_IN, "exogenous_out": TWIST_OUT,
            "torque_in": TORQUE_IN, "rate_out": RATE_OUT}


def _assemble_switched(config, uncertain, parameterize, pose):
    asm = _Assembly()
    _, tip_acc, tip_wr = _chaser_side(asm, config, uncertain, parameterize, pose)

    sw = pose.switches if pose is not None else (0.0, 0.0)
    if parameterize:
        c1 = asm.add(coupling_switch("c1", "delta_C1"), category="c1")
        c2 = asm.add(coupling_switch("c2", "delta_C2"), category="c2")
        c1_core, c2_core = c1.core, c2.core
        sp = asm.add(shared_port_kinematics(config.target_hub.point("D2"),
                                            config.target_hub.point("D3"),
                                            name="rh2sp"), category="rh2")
        sp_core = sp.core
    else:
        d1v, d2v = sw
        eye12 = np.eye(12)
        c1_core = asm.add(gain(d1v * eye12,
                               accel_labels("c1", "in") + wrench_labels("c1", "in"),
                               accel_labels("c1", "out") + wrench_labels("c1", "out")))
        c2_core = asm.add(gain(d2v * eye12,
                               accel_labels("c2", "in") + wrench_labels("c2", "in"),
                               accel_labels("c2", "out") + wrench_labels("c2", "out")))
        p = d1v * config.target_hub.point("D2") + d2v * config.target_hub.point("D3")
        tau = kinematic_model(p)
        D = np.zeros((12, 12))
        D[:6, :6] = tau
        D[6:, 6:] = tau.T
        sp_core = asm.add(gain(
            D,
            accel_labels("rh2sp", "D23") + wrench_labels("rh2sp", "G.out"),
            accel_labels("rh2sp", "G.in") + wrench_labels("rh2sp", "D23")))

    rh2 = asm.add(rigid_multiport(config.target_hub, ["G2", "P3", "P4"],
                                  inverted_port="G2", uncertain=uncertain, name="rh2"),
                  category="rh2")
    _add_target_arrays(asm, config, uncertain, parameterize, pose)

    grasp_fwd, grasp_ret = _grasp_gains(asm, config)
    dock_fwd, dock_ret = _docked_gains(asm, config)
    adder = asm.add(gain(np.hstack([np.eye(6), np.eye(6)]),
                         tuple(f"dockadd.a.{i}" for i in range(6)) +
                         tuple(f"dockadd.b.{i}" for i in range(6)),
                         tuple(f"dockadd.out.{i}" for i in range(6))))
    split = asm.add(gain(np.vstack([np.eye(6), np.eye(6)]),
                         tuple(f"docksplit.in.{i}" for i in range(6)),
                         tuple(f"docksplit.a.{i}" for i in range(6)) +
                         tuple(f"docksplit.b.{i}" for i in range(6))))

    # arm tip -> grasp frame -> gate C1 -> adder
    asm.wire6(tip_acc, _in6(grasp_fwd))
    asm.wire6(_out6(grasp_fwd), accel_labels("c1", "in"))
    asm.wire6(accel_labels("c1", "out"), adder.input_labels[:6])
    # chaser D1 -> docked frame -> gate C2 -> adder
    asm.wire6(accel_labels("rh1", "D1"), _in6(dock_fwd))
    asm.wire6(_out6(dock_fwd), accel_labels("c2", "in"))
    asm.wire6(accel_labels("c2", "out"), adder.input_labels[6:])
    # adder -> shared docking port -> target hub core
    asm.wire6(adder.output_labels, accel_labels("rh2sp", "D23"))
    asm.wire6(accel_labels("rh2sp", "G.in"), accel_labels("rh2", "G2"))
    asm.wire6(wrench_labels("rh2", "G2"), wrench_labels("rh2sp", "G.out"))
    # returned wrench fans back through both gates
    asm.wire6(wrench_labels("rh2sp", "D23"), split.input_labels)
    asm.wire6(split.output_labels[:6], wrench_labels("c1", "in"))
    asm.wire6(wrench_labels("c1", "out"), _in6(grasp_ret))
    asm.wire6(_out6(grasp_ret), tip_wr)
    asm.wire6(split.output_labels[6:], wrench_labels("c2", "in"))
    asm.wire6(wrench_labels("c2", "out"), _in6(dock_ret))
    asm.wire6(_out6(dock_ret), wrench_labels("rh1", "D1"))

    return asm.finish(("omega", "theta", "alpha", "c1", "c2", "rh2"),
                      W_EXT_IN, TWIST_OUT, _external_groups())


def _assemble_dock7(config, uncertain, parameterize, pose):
    asm = _Assembly()
    _, tip_acc, tip_wr = _chaser_side(asm, config, uncertain, parameterize, pose)
    rh2 = asm.add(rigid_multiport(config.target_hub, ["D2", "P3", "P4"],
                                  uncertain=uncertain, name="rh2"), category="rh2")
    _add_target_arrays(asm, config, uncertain, parameterize, pose)
    sm1 = asm.add(spring_damper(0.0, 0.0, 0.0, 0.0, uncertain=True, name="sm1"),
                  category="sm1")
    grasp_fwd, grasp_ret = _grasp_gains(asm, config)

    asm.wire6(tip_acc, _in6(grasp_fwd))
    asm.wire6(_out6(grasp_fwd), accel_labels("sm1", "C"))
    asm.wire6(accel_labels("rh2", "D2"), accel_labels("sm1", "P"))
    asm.wire6(wrench_labels("sm1", "C"), _in6(grasp_ret))
    asm.wire6(_out6(grasp_ret), tip_wr)
    asm.wire6(wrench_labels("sm1", "P"), wrench_labels("rh2", "D2"))

    return asm.finish(("omega", "theta", "alpha", "sm1", "rh2"),
                      W_EXT_IN, TWIST_OUT, _external_groups())


def _assemble_dock8(config, uncertain, parameterize, pose):
    alpha_ref = config.docking.alpha_ref
    pos_res, ang_res = loop_closure_check(config, alpha_ref)
    if pos_res > LOOP_CLOSURE_TOL or ang_res > LOOP_CLOSURE_TOL:
        raise LoopClosureViolationError(
            f"alpha_ref violates loop closure (pos {pos_res:.3e} m, ang {ang_res:.3e} rad)")

    asm = _Assembly()
    # joint angles are frozen at the consistent reference configuration
    asm_pose = Pose(alpha=alpha_ref,
                    theta=pose.theta if pose is not None else np.zeros(4),
                    switches=(0.0, 0.0))
    _, tip_acc, tip_wr = _chaser_side(asm, config, uncertain, parameterize, asm_pose,
                                      arm_parameterize=False)

    rh2 = asm.add(rigid_multiport(config.target_hub, ["D2", "D3", "P3", "P4"],
                                  uncertain=uncertain, name="rh2"), category="rh2")
    _add_target_arrays(asm, config, uncertain, parameterize, asm_pose)
    sm1 = asm.add(spring_damper(0.0, 0.0, 0.0, 0.0, uncertain=True, name="sm1"),
                  category="sm1")
    sm2 = asm.add(spring_damper(0.0, 0.0, 0.0, 0.0, uncertain=True, name="sm2"),
                  category="sm2")
    grasp_fwd, grasp_ret = _grasp_gains(asm, config)
    dock_fwd, dock_ret = _docked_gains(asm, config)

    asm.wire6(tip_acc, _in6(grasp_fwd))
    asm.wire6(_out6(grasp_fwd), accel_labels("sm1", "C"))
    asm.wire6(accel_labels("rh2", "D2"), accel_labels("sm1", "P"))
    asm.wire6(wrench_labels("sm1", "C"), _in6(grasp_ret))
    asm.wire6(_out6(grasp_ret), tip_wr)
    asm.wire6(wrench_labels("sm1", "P"), wrench_labels("rh2", "D2"))

    asm.wire6(accel_labels("rh2", "D3"), accel_labels("sm2", "C"))
    asm.wire6(accel_labels("rh1", "D1"), _in6(dock_fwd))
    asm.wire6(_out6(dock_fwd), accel_labels("sm2", "P"))
    asm.wire6(wrench_labels("sm2", "C"), wrench_labels("rh2", "D3"))
    asm.wire6(wrench_labels("sm2", "P"), _in6(dock_ret))
    asm.wire6(_out6(dock_ret), wrench_labels("rh1", "D1"))

    return asm.finish(("omega", "theta", "sm1", "sm2", "rh2"),
                      W_EXT_IN, TWIST_OUT, _external_groups())


def assemble_plant(config, mode="switched", uncertain=True, pose=None,
                   parameterize_geometry=True):
    """Assemble one plant variant as an LfrModel.

    With `parameterize_geometry` the tilt/joint angles and coupling gates stay
    in the uncertainty structure (substitute later via `evaluate_plant`);
    otherwise they are baked numerically from `pose`.  External channels are
    the 6-wide wrench at G1 in and the 6-wide acceleration twist of G1 out.
    """
    if mode not in MODES:
        raise InvalidModeError(f"mode must be one of {MODES}, got {mode!r}")
    if not parameterize_geometry and pose is None and mode != "dock8":
        raise InvalidModeError("baked assembly needs a pose")
    if mode == "switched":
        return _assemble_switched(config, uncertain, parameterize_geometry, pose)
    if mode == "dock7":
        return _assemble_dock7(config, uncertain, parameterize_geometry, pose)
    return _assemble_dock8(config, uncertain, parameterize_geometry, pose)


def geometry_values(config, pose, mode="switched"):
    """Block substitution values realizing a pose in a parameterized plant."""
    vals = {}
    for j, th in zip(TILT_JOINTS, pose.theta):
        vals[f"{j}.tau"] = tan_quarter(th)
    if mode != "dock8":
        for j, a in zip(ARM_JOINTS, pose.alpha):
            vals[f"{j}.tau"] = tan_quarter(a)
    if mode == "switched":
        vals["delta_C1"] = float(pose.switches[0])
        vals["delta_C2"] = float(pose.switches[1])
    return vals


def evaluate_plant(plant, config, pose, mode="switched", uncertain=True):
    """Close the geometry blocks of a parameterized plant at one pose.

    Real parametric blocks (mass, inertia, modal frequencies, spring
    coefficients) stay open when `uncertain`.
    """
    vals = geometry_values(config, pose, mode)
    vals = {k: v for k, v in vals.items() if k in set(plant.block_names())}
    out = close_blocks(plant, vals)
    if not uncertain:
        zero = {n: 0.0 for n in out.block_names()
                if not (n.startswith("sm1.") or n.startswith("sm2."))}
        out = close_blocks(out, zero, _clip_zero=True)
    return out


def grid_times(config, n):
    return np.linspace(0.0, config.timeline.duration, int(n))


def model_grid(config, trajectory, n, uncertain=False, plant=None, mode="switched"):
    """Plant samples at n equally spaced mission times.

    The parameterized plant is assembled once and the geometry blocks are
    substituted per sample; pass `plant` to reuse an existing assembly.
    """
    if n < 2:
        raise ValueError("need at least two grid samples")
    if plant is None:
        plant = assemble_plant(config, mode=mode, uncertain=True)
    out = []
    for t in grid_times(config, n):
        pose = pose_at(config, trajectory, t)
        out.append(evaluate_plant(plant, config, pose, mode=mode, uncertain=uncertain))
    return out


# ---------------------------------------------------------------------------
# rigid composite bookkeeping
# ---------------------------------------------------------------------------


def _parallel_axis(mass, j_com, r):
    return j_com + mass * (float(r @ r) * np.eye(3) - np.outer(r, r))


def rigid_snapshot(config, trajectory, t):
    """All rigid bodies present at time t: (mass, com position, dcm, J_com)."""
    bodies = []
    hub = config.chaser_hub
    bodies.append((hub.mass, hub.com, np.eye(3), hub.inertia_at_com))

    theta = {j: trajectory.value(j, t) for j in TILT_JOINTS}
    pose_t = target_pose(config, trajectory, t)
    for sa in config.solar_arrays.values():
        if sa.hub == "chaser":
            r_hub, p_hub = np.eye(3), hub.point(sa.mount_point)
        else:
            if pose_t is None:
                continue
            r_hub, g2 = pose_t
            p_hub = g2 + r_hub @ config.target_hub.point(sa.mount_point)
        r_arr = r_hub @ sa.mount_dcm @ rotation_dcm(sa.tilt_axis, theta[sa.tilt_joint])
        com = p_hub + r_arr @ sa.appendage.rigid.com
        bodies.append((sa.appendage.rigid.mass, com, r_arr, sa.appendage.rigid.inertia_at_com))

    alpha = np.array([trajectory.value(j, t) for j in ARM_JOINTS])
    frames, _, _ = arm_frames(config, alpha)
    for (dcm, origin), link in zip(frames, config.arm.links):
        com = origin + dcm @ link.body.com
        bodies.append((link.body.mass, com, dcm, link.body.inertia_at_com))

    if pose_t is not None:
        r12, g2 = pose_t
        tgt = config.target_hub
        bodies.append((tgt.mass, g2 + r12 @ tgt.com, r12, tgt.inertia_at_com))
    return bodies


def composite_inertia(config, trajectory, t):
    """Rigid composite inertia tensor at G1 in the chaser frame at time t."""
    J = np.zeros((3, 3))
    for mass, com, dcm, j_com in rigid_snapshot(config, trajectory, t):
        J += _parallel_axis(mass, dcm @ j_com @ dcm.T, com)
    return J


def composite_d_matrix(config, trajectory, t):
    """Rigid composite 6x6 direct dynamic model at G1 at time t.

    The inverse of this matrix is the DC gain of the assembled plant's
    W_ext -> twist channels (the composite CoM offset couples forces and
    rotations, so the torque/rate block differs from inv(J) at G1).
    """
    D = np.zeros((6, 6))
    for mass, com, dcm, j_com in rigid_snapshot(config, trajectory, t):
        T = kinematic_model(-com)  # twist at G1 -> twist at the body CoM
        Dc = np.zeros((6, 6))
        Dc[:3, :3] = mass * np.eye(3)
        Dc[3:, 3:] = dcm @ j_com @ dcm.T
        D += T.T @ Dc @ T
    return D


def inertia_evolution(config, trajectory, times):
    """Composite inertia tensors at G1 along the mission timeline."""
    return [composite_inertia(config, trajectory, t) for t in np.atleast_1d(times)]
