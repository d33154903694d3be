"""Elementary mechanical blocks for port-based multibody assembly.

All blocks exchange 6-wide wrenches (force, torque) and 6-wide acceleration
twists (linear, angular), DOF-ordered (x, y, z translations then x, y, z
rotations).  Rigid bodies are static multiport maps, flexible appendages are
effective-mass models with second-order modal channels, and the varying
geometry (tilt angles, joint angles, coupling gates, shared docking port) is
pulled out into structured uncertainty channels with minimal occurrence
counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NonPdInertiaError,
    NonPsdResidualError,
    TooManyInvertedPortsError,
    UnknownPortError,
    ValidationError,
)
from .lfr import REAL_SCALAR, LfrModel, UncertaintyBlock
from .statespace import StateSpaceModel, gain

WRENCH_AXES = ("fx", "fy", "fz", "tx", "ty", "tz")
ACCEL_AXES = ("ax", "ay", "az", "wx", "wy", "wz")


def wrench_labels(body, point):
    return tuple(f"{body}.{point}.wrench.{a}" for a in WRENCH_AXES)


def accel_labels(body, point):
    return tuple(f"{body}.{point}.accel.{a}" for a in ACCEL_AXES)


def _w_labels(tag, count):
    return tuple(f"{tag}.w{i}" for i in range(count))


def _z_labels(tag, count):
    return tuple(f"{tag}.z{i}" for i in range(count))


def skew(r):
    x, y, z = np.asarray(r, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def kinematic_model(r):
    """Rigid kinematic transport [[I, skew(r)], [0, I]] for the vector r.

    With r the vector from P to B, the matrix maps an acceleration twist at B
    to the twist at P, and its transpose transports wrenches from P to B.
    """
    t = np.eye(6)
    t[:3, 3:] = skew(r)
    return t


def twist_map(p_from, p_to):
    """Twist map from point X to point Y on the same rigid body: tau(X - Y)."""
    return kinematic_model(np.asarray(p_from, float) - np.asarray(p_to, float))


def wrench_map(p_from, p_to):
    """Equivalent-wrench transport from X to Y: tau(Y - X)^T."""
    return kinematic_model(np.asarray(p_to, float) - np.asarray(p_from, float)).T


def rotation_dcm(axis, angle):
    """Rodrigues rotation matrix about a unit axis."""
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    U = skew(u)
    return np.eye(3) + np.sin(angle) * U + (1.0 - np.cos(angle)) * (U @ U)


def frame_transform(dcm):
    """6x6 block-diagonal coordinate change for twists and wrenches."""
    t = np.zeros((6, 6))
    t[:3, :3] = dcm
    t[3:, 3:] = dcm
    return t


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RigidBodyData:
    """Mass properties and connection points of one rigid body.

    `com` and every connection point are expressed in the body frame from the
    body's reference point; `inertia_at_com` is taken at the center of mass.
    """

    mass: float
    com: np.ndarray
    inertia_at_com: np.ndarray
    connection_points: dict = field(default_factory=dict)
    mass_uncertainty: float = 0.0
    inertia_uncertainty: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        J = np.asarray(self.inertia_at_com, dtype=float)
        if J.shape != (3, 3) or np.max(np.abs(J - J.T)) > 1e-9 * max(1.0, np.max(np.abs(J))):
            raise NonPdInertiaError("inertia tensor must be symmetric 3x3")
        if np.min(np.linalg.eigvalsh(J)) <= 0.0:
            raise NonPdInertiaError("inertia tensor must be positive definite")
        if not self.mass > 1e-12:
            raise ValidationError("mass", f"mass {self.mass} below 1e-12 kg")
        if not 0.0 <= self.mass_uncertainty < 1.0:
            raise ValidationError("mass_uncertainty", "fraction must lie in [0, 1)")
        for f in self.inertia_uncertainty:
            if not 0.0 <= f < 1.0:
                raise ValidationError("inertia_uncertainty", "fractions must lie in [0, 1)")
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))
        object.__setattr__(self, "inertia_at_com", J)
        object.__setattr__(self, "connection_points",
                           {k: np.asarray(v, dtype=float) for k, v in self.connection_points.items()})
        object.__setattr__(self, "inertia_uncertainty", tuple(float(f) for f in self.inertia_uncertainty))

    def point(self, name):
        try:
            return self.connection_points[name]
        except KeyError:
            raise UnknownPortError(f"body has no connection point {name!r}") from None

    def d_matrix_at_com(self):
        D = np.zeros((6, 6))
        D[:3, :3] = self.mass * np.eye(3)
        D[3:, 3:] = self.inertia_at_com
        return D

    def d_matrix_at(self, point):
        """Direct dynamic model transported to an arbitrary point."""
        p = np.asarray(point, dtype=float)
        T = twist_map(p, self.com)  # twist at point -> twist at CoM
        return T.T @ self.d_matrix_at_com() @ T


@dataclass(frozen=True)
class FlexibleAppendageData:
    """Cantilevered appendage: rigid data plus modal content at the mount P.

    `rigid.com` holds the P -> CoM offset; `participation` is the 6 x N matrix
    of mode participation vectors, rows DOF-ordered (translations, rotations).
    The residual mass D_P - L L^T must be positive semidefinite.
    """

    rigid: RigidBodyData
    frequencies_hz: tuple
    dampings: tuple
    participation: np.ndarray
    freq_uncertainty: float = 0.0

    def __post_init__(self):
        f = tuple(float(x) for x in self.frequencies_hz)
        if any(x <= 0.0 for x in f) or any(b <= a for a, b in zip(f, f[1:])):
            raise ValidationError("frequencies_hz", "must be strictly positive and ascending")
        d = tuple(float(x) for x in self.dampings)
        if len(d) != len(f) or any(not 0.0 < x < 1.0 for x in d):
            raise ValidationError("dampings", "need one ratio in (0, 1) per mode")
        L = np.asarray(self.participation, dtype=float)
        if L.shape != (6, len(f)):
            raise ValidationError("participation", f"expected 6x{len(f)}, got {L.shape}")
        if not 0.0 <= self.freq_uncertainty < 1.0:
            raise ValidationError("freq_uncertainty", "fraction must lie in [0, 1)")
        D0 = self.residual_mass(_L=L)
        lam = np.linalg.eigvalsh(D0)
        if lam.min() < -1e-8 * max(1.0, lam.max()):
            raise NonPsdResidualError(f"residual mass indefinite (min eig {lam.min():.3e})")
        object.__setattr__(self, "frequencies_hz", f)
        object.__setattr__(self, "dampings", d)
        object.__setattr__(self, "participation", L)

    def d_p(self):
        """Rigid direct dynamic model at the mounting point P."""
        return self.rigid.d_matrix_at(np.zeros(3))

    def residual_mass(self, _L=None):
        L = self.participation if _L is None else _L
        return self.d_p() - L @ L.T


# ---------------------------------------------------------------------------
# rigid multiport bodies
# ---------------------------------------------------------------------------


def _mec_entries(body, name):
    """Uncertainty entries and input-scaling matrix for an uncertain D_G."""
    rm = body.mass_uncertainty
    rj = body.inertia_uncertainty
    J0 = np.diag(body.inertia_at_com)
    cols = np.zeros((6, 6))
    cols[:3, :3] = body.mass * rm * np.eye(3)
    for k in range(3):
        cols[3 + k, 3 + k] = rj[k] * J0[k]
    entries = [
        UncertaintyBlock(f"{name}.delta_m", REAL_SCALAR, repetitions=3),
        UncertaintyBlock(f"{name}.delta_Jxx", REAL_SCALAR, repetitions=1),
        UncertaintyBlock(f"{name}.delta_Jyy", REAL_SCALAR, repetitions=1),
        UncertaintyBlock(f"{name}.delta_Jzz", REAL_SCALAR, repetitions=1),
    ]
    return entries, cols


def rigid_multiport(body, ports, inverted_port=None, uncertain=False, name="body"):
    """Static multiport model of one rigid body.

    Non-inverted ports take applied wrenches and emit acceleration twists;
    the (single, optional) inverted port takes an imposed acceleration twist
    and emits the wrench the body transmits back.  With `uncertain`, the mass
    enters the structure with 3 occurrences and each diagonal inertia term
    with 1 occurrence.
    """
    ports = list(ports)
    if isinstance(inverted_port, (list, tuple, set)):
        if len(inverted_port) > 1:
            raise TooManyInvertedPortsError("only one port can be inverted")
        inverted_port = next(iter(inverted_port), None)
    if inverted_port is not None and inverted_port not in ports:
        raise UnknownPortError(f"inverted port {inverted_port!r} not among ports")
    pts = {p: body.point(p) for p in ports}

    # twist map CoM -> port, and its wrench counterpart port -> CoM
    phi = {p: twist_map(body.com, pts[p]) for p in ports}
    D0 = body.d_matrix_at_com()
    entries, bcols = _mec_entries(body, name) if uncertain else ([], np.zeros((6, 0)))
    nw = bcols.shape[1] if uncertain else 0

    in_labels, out_labels = [], []
    w_lab = tuple(f"{name}.mec.w{i}" for i in range(nw))
    z_lab = tuple(f"{name}.mec.z{i}" for i in range(nw))
    in_labels.extend(w_lab)
    out_labels.extend(z_lab)
    for p in ports:
        if p == inverted_port:
            in_labels.extend(accel_labels(name, p))
            out_labels.extend(wrench_labels(name, p))
        else:
            in_labels.extend(wrench_labels(name, p))
            out_labels.extend(accel_labels(name, p))

    m_tot = len(in_labels)
    p_tot = len(out_labels)
    D = np.zeros((p_tot, m_tot))
    cols = {}
    off = nw
    for p in ports:
        cols[p] = slice(off, off + 6)
        off += 6
    rows = {}
    off = nw
    for p in ports:
        rows[p] = slice(off, off + 6)
        off += 6

    if inverted_port is None:
        Minv = np.linalg.inv(D0)
        # acceleration of CoM from every wrench input / uncertainty input
        for src in ports:
            blk = Minv @ phi[src].T
            for dst in ports:
                D[rows[dst], cols[src]] = phi[dst] @ blk
            if nw:
                D[0:nw, cols[src]] = blk
        if nw:
            blk = -Minv @ bcols
            for dst in ports:
                D[rows[dst], 0:nw] = phi[dst] @ blk
            D[0:nw, 0:nw] = blk
    else:
        q = inverted_port
        psi = np.linalg.inv(phi[q])  # twist at q -> twist at CoM
        others = [p for p in ports if p != q]
        # wrench returned at the inverted port
        D[rows[q], cols[q]] = -psi.T @ D0 @ psi
        for src in others:
            D[rows[q], cols[src]] = psi.T @ phi[src].T
            D[rows[src], cols[q]] = phi[src] @ psi
        if nw:
            D[rows[q], 0:nw] = -psi.T @ bcols
            D[0:nw, cols[q]] = psi
    model = gain(D, in_labels, out_labels)
    groups = {"w": w_lab, "z": z_lab}
    return LfrModel(model, tuple(entries), groups)


def titop_link(link, parent_point, child_point, name="link"):
    """Double-port model of a rigid chain link.

    Inputs: wrench applied by the child at C, acceleration twist imposed at P.
    Outputs: acceleration twist at C, wrench transmitted to the parent at P.
    """
    frag = rigid_multiport(link, [parent_point, child_point],
                           inverted_port=parent_point, name=name)
    core = frag.core.pick(
        inputs=wrench_labels(name, child_point) + accel_labels(name, parent_point),
        outputs=accel_labels(name, child_point) + wrench_labels(name, parent_point))
    return core


def shared_port_kinematics(d2, d3, name="rh2", delta_names=("delta_C1", "delta_C2")):
    """Switched moment-arm transport for a shared docking port.

    The transported point sits at delta_C1*(G->D2) + delta_C2*(G->D3); the
    twist path carries the kinematic map and the wrench path its transpose,
    so each coupling scalar appears 4 times (rank-2 skew, both paths).
    Channels: accel in at the shared port -> accel out at G;
    wrench in at G -> wrench out at the shared port.
    """
    d2 = np.asarray(d2, dtype=float)
    d3 = np.asarray(d3, dtype=float)

    def rank2(d):
        nrm = np.linalg.norm(d)
        if nrm == 0.0:
            return np.zeros((3, 2)), np.zeros((2, 3))
        dh = d / nrm
        e = np.eye(3)[int(np.argmin(np.abs(dh)))]
        p = e - (e @ dh) * dh
        p /= np.linalg.norm(p)
        q = np.cross(dh, p)
        U = np.column_stack([q, -p]) * nrm
        V = np.vstack([p, q])
        return U, V

    U2, V2 = rank2(d2)
    U3, V3 = rank2(d3)

    acc_in = accel_labels(name, "D23")
    acc_out = accel_labels(name, "G.in")
    wr_in = wrench_labels(name, "G.out")
    wr_out = wrench_labels(name, "D23")
    w_lab, z_lab = [], []
    for dn in delta_names:
        w_lab.extend(f"{name}.{dn}.w{i}" for i in range(4))
        z_lab.extend(f"{name}.{dn}.z{i}" for i in range(4))

    m = 8 + 12
    p = 8 + 12
    D = np.zeros((p, m))
    # channel layout: inputs [w(8), acc_in(6), wr_in(6)], outputs [z(8), acc_out(6), wr_out(6)]
    iw = {delta_names[0]: slice(0, 4), delta_names[1]: slice(4, 8)}
    i_acc = slice(8, 14)
    i_wr = slice(14, 20)
    o_acc = slice(8, 14)
    o_wr = slice(14, 20)

    D[o_acc, i_acc] = np.eye(6)
    D[o_wr, i_wr] = np.eye(6)
    for dn, (U, V) in zip(delta_names, ((U2, V2), (U3, V3))):
        s = iw[dn].start
        # twist path: a_G += U w, z = V * (rotational part of acc_in)
        D[8:11, s:s + 2] = U
        D[s:s + 2, 11:14] = V
        # wrench path (transpose): t_out -= U w', z' = V * (force part of wrench in)
        D[17:20, s + 2:s + 4] = -U
        D[s + 2:s + 4, 14:17] = V

    core = gain(D, tuple(w_lab) + acc_in + wr_in, tuple(z_lab) + acc_out + wr_out)
    entries = tuple(UncertaintyBlock(dn, REAL_SCALAR, repetitions=4, range=(0.0, 1.0))
                    for dn in delta_names)
    return LfrModel(core, entries, {"w": tuple(w_lab), "z": tuple(z_lab)})


# ---------------------------------------------------------------------------
# flexible appendage
# ---------------------------------------------------------------------------


def appendage_effective_mass(data, uncertain_mode1=False, name="sa"):
    """Effective-mass model of a cantilevered appendage at its mount P.

    6 inputs (acceleration twist at P) to 6 outputs (wrench applied by the
    parent to the appendage at P): residual feedthrough plus one second-order
    channel per mode with rank-1 residue.  With `uncertain_mode1` the first
    natural frequency enters the structure with exactly 2 occurrences.
    """
    n_modes = len(data.frequencies_hz)
    omegas = 2.0 * np.pi * np.asarray(data.frequencies_hz)
    xis = np.asarray(data.dampings)
    L = data.participation
    D0 = data.residual_mass()
    lam = np.linalg.eigvalsh(D0)
    if lam.min() < -1e-8 * max(1.0, lam.max()):
        raise NonPsdResidualError("residual mass indefinite")

    n = 2 * n_modes
    r = data.freq_uncertainty if uncertain_mode1 else 0.0
    nw = 2 if uncertain_mode1 else 0
    A = np.zeros((n, n))
    B = np.zeros((n, nw + 6))
    C = np.zeros((nw + 6, n))
    D = np.zeros((nw + 6, nw + 6))
    for i in range(n_modes):
        w0, xi = omegas[i], xis[i]
        li = L[:, i]
        s1, s2 = 2 * i, 2 * i + 1
        # scaled modal states: x1 = w*eta, x2 = etadot
        A[s1, s2] = w0
        A[s2, s1] = -w0
        A[s2, s2] = -2.0 * xi * w0
        B[s2, nw:] = li
        C[nw:, s1] += li * w0
        C[nw:, s2] += li * (2.0 * xi * w0)
    D[nw:, nw:] = D0

    entries = ()
    w_lab = z_lab = ()
    if uncertain_mode1:
        w0, xi = omegas[0], xis[0]
        l1 = L[:, 0]
        # w1 perturbs x1dot, w2 perturbs both x2dot and the output residue
        B[0, 0] = w0 * r
        B[1, 1] = -w0 * r
        C[0, 1] = 1.0                    # z1 = x2
        C[1, 0] = 1.0                    # z2 = x1 + 2 xi x2
        C[1, 1] = 2.0 * xi
        D[nw:, 1] = l1 * (w0 * r)
        entries = (UncertaintyBlock(f"{name}.delta_omega1", REAL_SCALAR, repetitions=2),)
        w_lab = _w_labels(f"{name}.delta_omega1", 2)
        z_lab = _z_labels(f"{name}.delta_omega1", 2)

    in_labels = w_lab + accel_labels(name, "P")
    out_labels = z_lab + wrench_labels(name, "P")
    core = StateSpaceModel(A, B, C, D, in_labels, out_labels)
    return LfrModel(core, entries, {"w": w_lab, "z": z_lab})


# ---------------------------------------------------------------------------
# parameterized rotations
# ---------------------------------------------------------------------------


def _plane_basis(axis):
    u = np.asarray(axis, dtype=float)
    u = u / np.linalg.norm(u)
    e = np.eye(3)[int(np.argmin(np.abs(u)))]
    p = e - (e @ u) * u
    p /= np.linalg.norm(p)
    q = np.cross(u, p)
    return p, q


def tilt_transform(axis, name, delta_name=None, transposed=False):
    """Rational 6-DOF rotation about `axis`, parameterized by tan(angle/4).

    Two cascaded Cayley half-rotations give the exact rotation matrix at any
    angle while the parameter appears exactly 8 times in the structure.  The
    `transposed` variant realizes the transposed map with the same parameter
    (used on wrench return paths).
    """
    p, q = _plane_basis(axis)
    E = np.column_stack([p, q])          # 3x2, U = E J E^T
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    JE = J @ E.T

    delta_name = delta_name or f"{name}.tau"
    w_lab = _w_labels(name, 8)
    z_lab = _z_labels(name, 8)
    in_labels = w_lab + tuple(f"{name}.in.{i}" for i in range(6))
    out_labels = z_lab + tuple(f"{name}.out.{i}" for i in range(6))

    # channel layout per half h and part p(trans/rot): w[h,p] 2-wide
    M11 = np.zeros((8, 8))
    M12 = np.zeros((8, 6))
    M21 = np.zeros((6, 8))
    M22 = np.eye(6)
    for part, sl_u in ((0, slice(0, 3)), (1, slice(3, 6))):
        w1 = slice(4 * 0 + 2 * part, 4 * 0 + 2 * part + 2)
        w2 = slice(4 * 1 + 2 * part, 4 * 1 + 2 * part + 2)
        M11[w1, w1] = J
        M11[w2, w1] = 2.0 * J
        M11[w2, w2] = J
        M12[w1, sl_u] = JE
        M12[w2, sl_u] = JE
        M21[sl_u, w1] = 2.0 * E
        M21[sl_u, w2] = 2.0 * E
    if transposed:
        M11, M12, M21, M22 = M11.T, M21.T, M12.T, M22.T

    D = np.zeros((14, 14))
    D[:8, :8] = M11
    D[:8, 8:] = M12
    D[8:, :8] = M21
    D[8:, 8:] = M22
    core = gain(D, in_labels, out_labels)
    entry = UncertaintyBlock(delta_name, REAL_SCALAR, repetitions=8, range=(-1.0, 1.0))
    return LfrModel(core, (entry,), {"w": w_lab, "z": z_lab})


def tan_quarter(angle):
    """Rotation parameter tan(angle/4), with the angle wrapped to (-pi, pi]."""
    a = float(angle)
    a = np.arctan2(np.sin(a), np.cos(a))
    return float(np.tan(a / 4.0))


# ---------------------------------------------------------------------------
# connections
# ---------------------------------------------------------------------------


def spring_damper(k_shear, k_tors, d_shear, d_tors, uncertain=False, name="sm",
                  coeff_max=1e9):
    """Massless 6-DOF spring-damper closing a kinematic loop between C and P.

    Integrates the relative acceleration twice and returns the two opposite
    wrenches -/+ (K dx + D dv).  With `uncertain` the four coefficient groups
    (shear/torsional stiffness and damping) become structure blocks holding
    the physical coefficient values.
    """
    for v in (k_shear, k_tors, d_shear, d_tors):
        if v < 0.0:
            raise ValidationError("spring_damper", "coefficients must be >= 0")
    n = 12
    nw = 12 if uncertain else 0
    A = np.zeros((n, n))
    A[:6, 6:] = np.eye(6)
    B = np.zeros((n, nw + 12))
    B[6:, nw:nw + 6] = np.eye(6)
    B[6:, nw + 6:] = -np.eye(6)
    C = np.zeros((nw + 12, n))
    D = np.zeros((nw + 12, nw + 12))

    if uncertain:
        # z = (dx_shear, dx_tors, dv_shear, dv_tors); force = w_K + w_D
        C[0:3, 0:3] = np.eye(3)
        C[3:6, 3:6] = np.eye(3)
        C[6:9, 6:9] = np.eye(3)
        C[9:12, 9:12] = np.eye(3)
        F = np.zeros((6, 12))
        F[0:3, 0:3] = np.eye(3)
        F[3:6, 3:6] = np.eye(3)
        F[0:3, 6:9] = np.eye(3)
        F[3:6, 9:12] = np.eye(3)
        D[nw:nw + 6, 0:12] = -F
        D[nw + 6:, 0:12] = F
        entries = tuple(
            UncertaintyBlock(f"{name}.{tag}", REAL_SCALAR, repetitions=3, range=(0.0, coeff_max))
            for tag in ("k_shear", "k_tors", "d_shear", "d_tors"))
        w_lab = tuple(f"{name}.{tag}.w{i}" for tag in ("k_shear", "k_tors", "d_shear", "d_tors")
                      for i in range(3))
        z_lab = tuple(f"{name}.{tag}.z{i}" for tag in ("k_shear", "k_tors", "d_shear", "d_tors")
                      for i in range(3))
    else:
        K = np.diag([k_shear] * 3 + [k_tors] * 3)
        Dd = np.diag([d_shear] * 3 + [d_tors] * 3)
        C[0:6, :6] = -K
        C[0:6, 6:] = -Dd
        C[6:12, :6] = K
        C[6:12, 6:] = Dd
        entries = ()
        w_lab = z_lab = ()

    in_labels = w_lab + accel_labels(name, "C") + accel_labels(name, "P")
    out_labels = z_lab + wrench_labels(name, "C") + wrench_labels(name, "P")
    core = StateSpaceModel(A, B, C, D, in_labels, out_labels)
    return LfrModel(core, entries, {"w": w_lab, "z": z_lab})


def coupling_switch(name, delta_name):
    """12-channel scalar gate (6 accel forward + 6 wrench return).

    The gate scalar lives in [0, 1]: 0 annihilates the connection, 1 passes
    it through unchanged.
    """
    w_lab = _w_labels(name, 12)
    z_lab = _z_labels(name, 12)
    in_labels = w_lab + accel_labels(name, "in") + wrench_labels(name, "in")
    out_labels = z_lab + accel_labels(name, "out") + wrench_labels(name, "out")
    D = np.zeros((24, 24))
    D[0:12, 12:24] = np.eye(12)   # z = u
    D[12:24, 0:12] = np.eye(12)   # y = w
    core = gain(D, in_labels, out_labels)
    entry = UncertaintyBlock(delta_name, REAL_SCALAR, repetitions=12, range=(0.0, 1.0))
    return LfrModel(core, (entry,), {"w": w_lab, "z": z_lab})
