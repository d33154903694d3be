"""Independent brute-force reference computations for the test suite.

Everything here is written from first principles (component loops, explicit
formulas) on purpose, so the package's vectorized transports and assemblies
are checked against a genuinely separate route.
"""

import numpy as np


def cross_matrix(v):
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rodrigues(axis, angle):
    """Rotation matrix from the explicit Rodrigues formula."""
    a = np.asarray(axis, dtype=float)
    a = a / np.sqrt(a @ a)
    c, s = np.cos(angle), np.sin(angle)
    R = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            R[i, j] = c * (i == j) + (1 - c) * a[i] * a[j]
    R += s * cross_matrix(a)
    return R


def transport_wrench(force, torque, at_point, to_point):
    """Equivalent (force, torque) of a wrench moved to another point."""
    arm = np.asarray(at_point, float) - np.asarray(to_point, float)
    return np.asarray(force, float), np.asarray(torque, float) + np.cross(arm, force)


def twist_at(accel_ref, alpha_ref, ref_point, point):
    """Linear acceleration at `point` of a rigid body with linear/angular
    acceleration given at `ref_point` (linearized, zero rates)."""
    r = np.asarray(point, float) - np.asarray(ref_point, float)
    return np.asarray(accel_ref, float) + np.cross(alpha_ref, r), np.asarray(alpha_ref, float)


def parallel_axis(mass, inertia_at_com, offset):
    """Inertia about a point displaced by `offset` from the CoM."""
    r = np.asarray(offset, float)
    return np.asarray(inertia_at_com, float) + mass * ((r @ r) * np.eye(3) - np.outer(r, r))


def composite_d_matrix(bodies, at_point):
    """Rigid composite 6x6 at a point from (mass, com_pos, dcm, J_com) tuples."""
    D = np.zeros((6, 6))
    for mass, com, dcm, j_com in bodies:
        r = np.asarray(com, float) - np.asarray(at_point, float)
        J = parallel_axis(mass, dcm @ np.asarray(j_com, float) @ dcm.T, r)
        S = cross_matrix(r)
        D[:3, :3] += mass * np.eye(3)
        D[:3, 3:] += -mass * S
        D[3:, :3] += mass * S
        D[3:, 3:] += J
    return D


def arm_forward_kinematics(config, alpha):
    """Joint origins and link DCMs from the chaser frame, loop-by-loop."""
    arm = config.arm
    R = np.array(arm.base_dcm, dtype=float)
    p = np.array(config.chaser_hub.connection_points[arm.base_point], dtype=float)
    frames = []
    for i, link in enumerate(arm.links):
        frames.append((R.copy(), p.copy()))
        p = p + R @ np.asarray(link.child_offset, float)
        if link.joint_axis is not None:
            R = R @ rodrigues(link.joint_axis, alpha[i])
    return frames, p, R


def scenario_bodies(config, trajectory, t):
    """(mass, com position, dcm, J_com) of every body present at time t."""
    out = []
    hub = config.chaser_hub
    out.append((hub.mass, np.asarray(hub.com, float), np.eye(3),
                np.asarray(hub.inertia_at_com, float)))
    alpha = [trajectory.value(j, t) for j in
             ("alpha1", "alpha2", "alpha3", "alpha4", "alpha5", "alpha6")]
    frames, tip, r_tip = arm_forward_kinematics(config, alpha)
    for (dcm, origin), link in zip(frames, config.arm.links):
        out.append((link.body.mass, origin + dcm @ link.body.com, dcm,
                    np.asarray(link.body.inertia_at_com, float)))

    tl = config.timeline
    target_pose = None
    if t >= tl.second_dock:
        r12 = np.asarray(config.docking.docked_dcm, float)
        g2 = np.asarray(hub.connection_points["D1"], float) \
            - r12 @ np.asarray(config.target_hub.connection_points["D3"], float)
        target_pose = (r12, g2)
    elif t >= tl.first_dock:
        r12 = r_tip @ np.asarray(config.docking.grasp_dcm, float).T
        g2 = tip - r12 @ np.asarray(config.target_hub.connection_points["D2"], float)
        target_pose = (r12, g2)

    for sa in config.solar_arrays.values():
        theta = trajectory.value(sa.tilt_joint, t)
        if sa.hub == "chaser":
            r_hub, p_hub = np.eye(3), np.asarray(hub.connection_points[sa.mount_point], float)
        else:
            if target_pose is None:
                continue
            r_hub = target_pose[0]
            p_hub = target_pose[1] + r_hub @ np.asarray(
                config.target_hub.connection_points[sa.mount_point], float)
        r_arr = r_hub @ np.asarray(sa.mount_dcm, float) @ rodrigues(sa.tilt_axis, theta)
        body = sa.appendage.rigid
        out.append((body.mass, p_hub + r_arr @ body.com, r_arr,
                    np.asarray(body.inertia_at_com, float)))

    if target_pose is not None:
        tgt = config.target_hub
        out.append((tgt.mass, target_pose[1] + target_pose[0] @ tgt.com, target_pose[0],
                    np.asarray(tgt.inertia_at_com, float)))
    return out
