"""Weighted design interconnection and static attitude-gain tuning.

The design plant wraps the assembled stack's torque -> angular-acceleration
channels with sensor/actuator dynamics, noise and performance weights, and a
roll-off filter, leaving the 3x6 static controller slot open.  `synthesize`
tunes the 18 gains by derivative-free direct search of the worst-case (over
a model grid, optionally over sampled uncertainty vertices) closed-loop peak
gain between the normalized disturbances and performance outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .assembly import RATE_OUT, TORQUE_IN
from .errors import (
    InitialGainsUnstableError,
    MissingChannelsError,
    NonPdInertiaError,
)
from .lfr import LfrModel, close_blocks, lft_lower
from .statespace import StateSpaceModel, connect, gain, hinf_norm, integrator_bank

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# weights, hardware, gains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSet:
    wn_gyro: float
    wn_sst: float
    wn_ext_gains: tuple
    wn_ext_den: tuple
    wu: float
    wp: float
    rolloff_order: int
    rolloff_cutoff_hz: float
    # commanded reorientations are slow: the attitude reference channel is
    # shaped by a first-order lag (DC gain wp) so the tracking-error channel
    # stays normalized without pinning gamma to the raw sensitivity peak
    ref_cutoff_rad: float = 0.02

    @classmethod
    def from_config(cls, config):
        w = config.weights
        return cls(
            wn_gyro=float(w["wn_gyro"]),
            wn_sst=float(w["wn_sst"]),
            wn_ext_gains=tuple(float(x) for x in w["wn_ext_gains"]),
            wn_ext_den=tuple(float(x) for x in w["wn_ext_den"]),
            wu=float(w["wu"]),
            wp=float(w["wp"]),
            rolloff_order=int(w["rolloff_order"]),
            rolloff_cutoff_hz=float(w["rolloff_cutoff_hz"]),
            ref_cutoff_rad=float(w.get("wref_cutoff_rad", 0.02)),
        )

    def __post_init__(self):
        if self.wu <= 0 or self.wp <= 0 or self.wn_gyro <= 0 or self.wn_sst <= 0:
            raise ValueError("static weights must be positive")


@dataclass(frozen=True)
class SensorActuatorSet:
    sst_cutoff_hz: float
    gyro_cutoff_hz: float
    rw_damping: float
    rw_natural_hz: float

    @classmethod
    def from_config(cls, config):
        s = config.sensors
        return cls(float(s["sst_cutoff_hz"]), float(s["gyro_cutoff_hz"]),
                   float(s["rw_damping"]), float(s["rw_natural_hz"]))


@dataclass(frozen=True)
class ControllerGains:
    """Static 3x6 attitude gain matrix [k_att | c_att] on (phi err, rate err)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 6) or not np.all(np.isfinite(m)):
            raise ValueError("controller gains must be a finite 3x6 matrix")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def attitude_gains(self):
        return self.matrix[:, :3]

    @property
    def rate_gains(self):
        return self.matrix[:, 3:]

    def to_model(self, input_labels=None, output_labels=None):
        ins = input_labels or tuple(f"K.y{i}" for i in range(6))
        outs = output_labels or tuple(f"K.u{i}" for i in range(3))
        return gain(self.matrix, ins, outs)

    def save(self, path, extra=None):
        doc = {"gains": [[float(f"{v:.15g}") for v in row] for row in self.matrix]}
        if extra:
            doc.update(extra)
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            doc = json.load(fh)
        return cls(np.asarray(doc["gains"], dtype=float))


def baseline_controller(j_tot, xi=1.0, natural_hz=0.01):
    """Critically-damped rigid-body tuning: k = w^2 J, c = 2 xi w J.

    `natural_hz` is converted to rad/s; J must be symmetric positive definite.
    """
    J = np.asarray(j_tot, dtype=float)
    if J.shape != (3, 3) or np.max(np.abs(J - J.T)) > 1e-9 * max(1.0, np.abs(J).max()):
        raise NonPdInertiaError("inertia must be symmetric 3x3")
    if np.min(np.linalg.eigvalsh(J)) <= 0.0:
        raise NonPdInertiaError("inertia must be positive definite")
    w = TWO_PI * natural_hz
    return ControllerGains(np.hstack([w * w * J, 2.0 * xi * w * J]))


# ---------------------------------------------------------------------------
# filter realizations
# ---------------------------------------------------------------------------


def _series(a, b):
    """Series composition b(s) * a(s) of two SISO (A, B, C, D) tuples."""
    A1, B1, C1, D1 = a
    A2, B2, C2, D2 = b
    n1, n2 = A1.shape[0], A2.shape[0]
    A = np.zeros((n1 + n2, n1 + n2))
    A[:n1, :n1] = A1
    A[n1:, n1:] = A2
    A[n1:, :n1] = B2 @ C1
    B = np.vstack([B1, B2 @ D1])
    C = np.hstack([D2 @ C1, C2])
    D = D2 @ D1
    return A, B, C, D


def butterworth_rolloff(order, cutoff_hz, name="ro"):
    """Analog Butterworth low-pass (unity DC), one filter per axis.

    Poles sit at wc * exp(j pi (2k + n - 1) / (2n)), realized as cascaded
    first/second-order sections.
    """
    if order < 1 or cutoff_hz <= 0.0:
        raise ValueError("order must be >= 1 and cutoff positive")
    wc = TWO_PI * cutoff_hz
    k = np.arange(1, order + 1)
    poles = wc * np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    sections = []
    used = np.zeros(order, dtype=bool)
    for i, p in enumerate(poles):
        if used[i]:
            continue
        used[i] = True
        if abs(p.imag) < 1e-12 * wc:
            sections.append((np.array([[p.real]]), np.array([[1.0]]),
                             np.array([[-p.real]]), np.array([[0.0]])))
        else:
            j = int(np.argmin(np.abs(poles - np.conj(p)) + used * 1e9))
            used[j] = True
            w2 = float(abs(p) ** 2)
            tz = float(-2.0 * p.real)
            sections.append((np.array([[0.0, 1.0], [-w2, -tz]]),
                             np.array([[0.0], [w2]]),
                             np.array([[1.0, 0.0]]), np.array([[0.0]])))
    sys = sections[0]
    for sec in sections[1:]:
        sys = _series(sys, sec)
    return _per_axis(sys, name)


def _per_axis(siso, name, axes=3):
    """Replicate a SISO (A, B, C, D) on three labeled channels."""
    A1, B1, C1, D1 = siso
    n = A1.shape[0]
    A = np.kron(np.eye(axes), A1)
    B = np.kron(np.eye(axes), B1)
    C = np.kron(np.eye(axes), C1)
    D = np.kron(np.eye(axes), D1)
    return StateSpaceModel(A, B, C, D,
                           tuple(f"{name}.in.{i}" for i in range(axes)),
                           tuple(f"{name}.out.{i}" for i in range(axes)))


def first_order_lowpass(cutoff_hz, name):
    w = TWO_PI * cutoff_hz
    return _per_axis((np.array([[-w]]), np.array([[1.0]]), np.array([[w]]),
                      np.array([[0.0]])), name)


def second_order_lowpass(damping, natural_hz, name):
    w = TWO_PI * natural_hz
    return _per_axis((np.array([[0.0, 1.0], [-w * w, -2.0 * damping * w]]),
                      np.array([[0.0], [w * w]]),
                      np.array([[1.0, 0.0]]), np.array([[0.0]])), name)


def _ext_disturbance_filter(weights, name="wext"):
    """Per-axis first-order bound on residual external torques."""
    a, b = weights.wn_ext_den
    secs = []
    for g in weights.wn_ext_gains:
        secs.append((np.array([[-b / a]]), np.array([[1.0]]),
                     np.array([[g / a]]), np.array([[0.0]])))
    n = len(secs)
    A = np.zeros((n, n))
    B = np.zeros((n, n))
    C = np.zeros((n, n))
    for i, (Ai, Bi, Ci, Di) in enumerate(secs):
        A[i, i] = Ai[0, 0]
        B[i, i] = Bi[0, 0]
        C[i, i] = Ci[0, 0]
    return StateSpaceModel(A, B, C, np.zeros((n, n)),
                           tuple(f"{name}.in.{i}" for i in range(n)),
                           tuple(f"{name}.out.{i}" for i in range(n)))


# ---------------------------------------------------------------------------
# design interconnection
# ---------------------------------------------------------------------------

D_LABELS = tuple(f"d.ref.{i}" for i in range(3)) + tuple(f"d.ext.{i}" for i in range(3)) \
    + tuple(f"d.gyro.{i}" for i in range(3)) + tuple(f"d.sst.{i}" for i in range(3))
E_LABELS = tuple(f"e.p.{i}" for i in range(3)) + tuple(f"e.u.{i}" for i in range(3))
Y_LABELS = tuple(f"y.att.{i}" for i in range(3)) + tuple(f"y.rate.{i}" for i in range(3))
U_LABELS = tuple(f"u.cmd.{i}" for i in range(3))


def build_design_interconnection(plant, weights, hw):
    """Weighted synthesis interconnection around the torque -> rate channels.

    Normalized disturbances d = (attitude reference, external torque, gyro
    noise, star-tracker noise); performance e = (pointing error over the
    accuracy weight, actuator command times its weight); measurements y =
    (filtered attitude error, filtered rate error); the controller slot
    (y -> u) is left open.  Uncertainty channels of the plant pass through.
    """
    groups = plant.channel_groups
    if "torque_in" not in groups or "rate_out" not in groups:
        raise MissingChannelsError("plant must expose torque_in / rate_out channel groups")
    t_in = groups["torque_in"]
    r_out = groups["rate_out"]
    w_lab = groups.get("w", ())
    z_lab = groups.get("z", ())
    core = plant.core.pick(inputs=list(w_lab) + list(t_in),
                           outputs=list(z_lab) + list(r_out))

    eye = np.eye(3)
    blocks = [core]
    blocks.append(butterworth_rolloff(weights.rolloff_order, weights.rolloff_cutoff_hz, "ro"))
    blocks.append(second_order_lowpass(hw.rw_damping, hw.rw_natural_hz, "rw"))
    blocks.append(first_order_lowpass(hw.gyro_cutoff_hz, "gyro"))
    blocks.append(first_order_lowpass(hw.sst_cutoff_hz, "sst"))
    wext = _ext_disturbance_filter(weights, "wext").relabeled(
        inputs=list(D_LABELS[3:6]))
    blocks.append(wext)
    blocks.append(integrator_bank([f"int1.in.{i}" for i in range(3)],
                                  [f"int1.out.{i}" for i in range(3)]))
    blocks.append(integrator_bank([f"int2.in.{i}" for i in range(3)],
                                  [f"int2.out.{i}" for i in range(3)]))
    # fan-outs and sums
    blocks.append(gain(np.vstack([eye, eye]), U_LABELS,
                       tuple(f"usplit.a.{i}" for i in range(3)) +
                       tuple(f"usplit.b.{i}" for i in range(3))))
    blocks.append(gain(np.hstack([eye, eye]),
                       tuple(f"tsum.a.{i}" for i in range(3)) +
                       tuple(f"tsum.b.{i}" for i in range(3)),
                       tuple(f"tsum.out.{i}" for i in range(3))))
    blocks.append(gain(np.vstack([eye, eye]),
                       tuple(f"wsplit.in.{i}" for i in range(3)),
                       tuple(f"wsplit.a.{i}" for i in range(3)) +
                       tuple(f"wsplit.b.{i}" for i in range(3))))
    blocks.append(gain(np.vstack([eye, eye]),
                       tuple(f"phisplit.in.{i}" for i in range(3)),
                       tuple(f"phisplit.a.{i}" for i in range(3)) +
                       tuple(f"phisplit.b.{i}" for i in range(3))))
    # reference shaping (slow commanded reorientations, DC gain wp) + fan-out
    wr = weights.ref_cutoff_rad
    refshape = _per_axis((np.array([[-wr]]), np.array([[1.0]]),
                          np.array([[weights.wp * wr]]), np.array([[0.0]])), "refshape")
    blocks.append(refshape.relabeled(inputs=[f"d.ref.{i}" for i in range(3)]))
    blocks.append(gain(np.vstack([eye, eye]),
                       tuple(f"refsplit.in.{i}" for i in range(3)),
                       tuple(f"ref.a.{i}" for i in range(3)) +
                       tuple(f"ref.b.{i}" for i in range(3))))
    # measurements: y_att = phi_ref - sst(phi) - wn_sst * n;  y_rate = -gyro(w) - wn_gyro * n
    blocks.append(gain(np.hstack([eye, -eye, -weights.wn_sst * eye]),
                       tuple(f"yatt.ref.{i}" for i in range(3)) +
                       tuple(f"yatt.meas.{i}" for i in range(3)) +
                       tuple(f"d.sst.{i}" for i in range(3)),
                       Y_LABELS[:3]))
    blocks.append(gain(np.hstack([-eye, -weights.wn_gyro * eye]),
                       tuple(f"yrate.meas.{i}" for i in range(3)) +
                       tuple(f"d.gyro.{i}" for i in range(3)),
                       Y_LABELS[3:]))
    # performance: e_p = (phi_ref - phi) / wp;  e_u = wu * u
    blocks.append(gain(np.hstack([eye / weights.wp, -eye / weights.wp]),
                       tuple(f"ep.ref.{i}" for i in range(3)) +
                       tuple(f"ep.phi.{i}" for i in range(3)),
                       E_LABELS[:3]))
    blocks.append(gain(weights.wu * eye,
                       tuple(f"eu.in.{i}" for i in range(3)), E_LABELS[3:]))

    wires = []

    def w6(src, dst):
        wires.extend(zip(src, dst))

    w6([f"usplit.a.{i}" for i in range(3)], [f"ro.in.{i}" for i in range(3)])
    w6([f"usplit.b.{i}" for i in range(3)], [f"eu.in.{i}" for i in range(3)])
    w6([f"ro.out.{i}" for i in range(3)], [f"rw.in.{i}" for i in range(3)])
    w6([f"rw.out.{i}" for i in range(3)], [f"tsum.a.{i}" for i in range(3)])
    w6([f"wext.out.{i}" for i in range(3)], [f"tsum.b.{i}" for i in range(3)])
    w6([f"tsum.out.{i}" for i in range(3)], t_in)
    w6(r_out, [f"int1.in.{i}" for i in range(3)])
    w6([f"int1.out.{i}" for i in range(3)], [f"wsplit.in.{i}" for i in range(3)])
    w6([f"wsplit.a.{i}" for i in range(3)], [f"gyro.in.{i}" for i in range(3)])
    w6([f"wsplit.b.{i}" for i in range(3)], [f"int2.in.{i}" for i in range(3)])
    w6([f"int2.out.{i}" for i in range(3)], [f"phisplit.in.{i}" for i in range(3)])
    w6([f"phisplit.a.{i}" for i in range(3)], [f"sst.in.{i}" for i in range(3)])
    w6([f"phisplit.b.{i}" for i in range(3)], [f"ep.phi.{i}" for i in range(3)])
    w6([f"refshape.out.{i}" for i in range(3)], [f"refsplit.in.{i}" for i in range(3)])
    w6([f"ref.a.{i}" for i in range(3)], [f"yatt.ref.{i}" for i in range(3)])
    w6([f"ref.b.{i}" for i in range(3)], [f"ep.ref.{i}" for i in range(3)])
    w6([f"sst.out.{i}" for i in range(3)], [f"yatt.meas.{i}" for i in range(3)])
    w6([f"gyro.out.{i}" for i in range(3)], [f"yrate.meas.{i}" for i in range(3)])

    ext_in = list(w_lab) + [f"d.ref.{i}" for i in range(3)] + list(D_LABELS[3:6]) \
        + list(D_LABELS[6:9]) + list(D_LABELS[9:12]) + list(U_LABELS)
    ext_out = list(z_lab) + list(E_LABELS) + list(Y_LABELS)
    ic = connect(blocks, wires, ext_in, ext_out)

    groups_out = {
        "w": tuple(w_lab), "z": tuple(z_lab),
        "disturbance": D_LABELS, "performance": E_LABELS,
        "measurement": Y_LABELS, "control": U_LABELS,
    }
    return LfrModel(ic, plant.structure, groups_out)


def close_controller(design, gains):
    """Closed loop F_l(design, K) for a static gain set."""
    K = gains.to_model(design.group("measurement"), design.group("control"))
    return lft_lower(design, K)


# ---------------------------------------------------------------------------
# uncertainty vertex sampling
# ---------------------------------------------------------------------------


def _hadamard(n):
    H = np.array([[1.0]])
    while H.shape[0] < n:
        H = np.block([[H, H], [H, -H]])
    return H


def vertex_samples(model, cap=17):
    """Nominal plus deterministic sign-vertex closures of the real blocks.

    Only parametric blocks with range [-1, 1] are sampled (mass, inertia,
    modal frequencies); anything else must be closed beforehand.
    """
    names = [b.name for b in model.structure
             if b.kind == "real-scalar-repeated" and b.range == (-1.0, 1.0)]
    names = list(dict.fromkeys(names))
    if not names:
        return [model]
    H = _hadamard(8)
    rows = []
    for r in range(8):
        rows.append(H[r, :len(names)] if len(names) <= 8 else
                    np.tile(H[r], int(np.ceil(len(names) / 8)))[:len(names)])
    signs = rows + [-r for r in rows]
    out = [close_blocks(model, {n: 0.0 for n in names}, _clip_zero=True)]
    for s in signs[:max(0, cap - 1)]:
        out.append(close_blocks(model, dict(zip(names, s))))
    return out


# ---------------------------------------------------------------------------
# fast closed-loop norm evaluation
# ---------------------------------------------------------------------------


class _GridEvaluator:
    """Caches open-loop frequency data of design interconnections so that the
    worst-case closed-loop grid norm of a candidate gain matrix is a handful
    of batched matrix products."""

    def __init__(self, models, omegas):
        self.omegas = np.asarray(omegas, dtype=float)
        self.models = models
        ped, peu, pyd, pyu = [], [], [], []
        self._ss = []
        for m in models:
            core = m.core
            d_idx = [core.input_index(l) for l in m.group("disturbance")]
            u_idx = [core.input_index(l) for l in m.group("control")]
            e_idx = [core.output_index(l) for l in m.group("performance")]
            y_idx = [core.output_index(l) for l in m.group("measurement")]
            resp = _modal_response(core, self.omegas)
            ped.append(resp[:, e_idx][:, :, d_idx])
            peu.append(resp[:, e_idx][:, :, u_idx])
            pyd.append(resp[:, y_idx][:, :, d_idx])
            pyu.append(resp[:, y_idx][:, :, u_idx])
            Bu = core.B[:, u_idx]
            Cy = core.C[y_idx, :]
            self._ss.append((core.A, Bu, Cy))
        self.P_ed = np.stack(ped).astype(np.complex64)
        self.P_eu = np.stack(peu).astype(np.complex64)
        self.P_yd = np.stack(pyd).astype(np.complex64)
        self.P_yu = np.stack(pyu).astype(np.complex64)

    def norms(self, K):
        """Per-model grid peak gain of the closed d -> e map."""
        K = K.astype(np.complex64)
        KP = np.einsum("uy,mwyv->mwuv", K, self.P_yu)
        S = np.linalg.inv(np.broadcast_to(np.eye(3, dtype=np.complex64), KP.shape) - KP)
        KPyd = np.einsum("uy,mwyd->mwud", K, self.P_yd)
        M = self.P_ed + np.einsum("mweu,mwud->mwed", self.P_eu,
                                  np.einsum("mwuv,mwvd->mwud", S, KPyd))
        sv = np.linalg.svd(M, compute_uv=False)[..., 0]
        return sv.max(axis=1)

    def loop_radius(self, K, band_idx):
        """Largest loop spectral radius over the models on selected frequencies."""
        if len(band_idx) == 0:
            return 0.0
        KP = np.einsum("uy,mwyv->mwuv", K.astype(np.complex64), self.P_yu[:, band_idx])
        ev = np.linalg.eigvals(KP)
        return float(np.max(np.abs(ev)))

    def objective(self, K):
        return float(self.norms(K).max())

    def stable(self, K):
        for A, Bu, Cy in self._ss:
            Acl = A + Bu @ K @ Cy
            if np.max(np.linalg.eigvals(Acl).real) >= 0.0:
                return False
        return True

    def spectral_abscissas(self, K):
        return np.array([np.max(np.linalg.eigvals(A + Bu @ K @ Cy).real)
                         for A, Bu, Cy in self._ss])


def _modal_response(core, omegas):
    """(nw, p, m) frequency response via modal decomposition with fallback."""
    n = core.n_states
    if n == 0:
        return np.broadcast_to(core.D, (omegas.size, *core.D.shape)).astype(complex).copy()
    lam, V = np.linalg.eig(core.A)
    if np.linalg.cond(V) < 1e10:
        CV = core.C @ V
        VB = np.linalg.solve(V, core.B.astype(complex))
        denom = 1j * omegas[:, None] - lam[None, :]
        return np.einsum("pn,wnm->wpm", CV, VB[None, :, :] / denom[:, :, None]) + core.D
    out = np.empty((omegas.size, core.n_outputs, core.n_inputs), dtype=complex)
    eye = np.eye(n)
    for k, wk in enumerate(omegas):
        out[k] = core.C @ np.linalg.solve(1j * wk * eye - core.A, core.B) + core.D
    return out


def synthesis_frequency_grid(modal_hz=(), base=(1e-4, 1e3), per_decade=24):
    """Log grid plus densification around the control band and known modes."""
    lo, hi = base
    w = list(np.logspace(np.log10(lo), np.log10(hi),
                         int(np.log10(hi / lo) * per_decade) + 1))
    w += list(np.logspace(np.log10(5e-3), np.log10(3.0), 90))
    for f in modal_hz:
        w0 = TWO_PI * f
        w += list(w0 * np.linspace(0.9, 1.1, 17))
        w += list(w0 * np.linspace(0.995, 1.005, 9))
    return np.unique(np.asarray(w))


# ---------------------------------------------------------------------------
# direct search
# ---------------------------------------------------------------------------


@dataclass
class SynthesisResult:
    gains: ControllerGains
    gamma: float
    gamma_initial: float
    per_model: np.ndarray
    evaluations: int
    budget_exhausted: bool


def _smooth_max(values, tau):
    v = np.asarray(values)
    m = v.max()
    if tau <= 0.0:
        return float(m)
    return float(m + tau * np.log(np.mean(np.exp((v - m) / tau))))


def synthesize(grid, k0, budget=20000, vertices=False, vertex_cap=17,
               frequency_grid=None, modal_hz=(), flex_guard=None):
    """Tune the 18 static gains over a grid of design interconnections.

    Starts from `k0` (which must stabilize every nominal grid model) and
    minimizes a temperature-annealed soft maximum of the per-model peak
    closed-loop d -> e gains by coordinate-wise direct search with meta
    scalings of the two gain blocks.  `budget` counts closed-loop model-norm
    evaluations.  The reported gamma is recomputed with the refined peak-gain
    solver on every grid model, so it is exact for the returned gains.

    `flex_guard` = (lo_hz, hi_hz, limit) additionally caps the loop spectral
    radius across that band on every grid model, which gain-stabilizes the
    uncertain flexible modes instead of phase-stabilizing them.
    """
    models = []
    for m in grid:
        models.extend(vertex_samples(m, vertex_cap) if vertices else
                      [close_blocks(m, {n: 0.0 for n in m.block_names()}, _clip_zero=True)])
    omegas = frequency_grid if frequency_grid is not None else synthesis_frequency_grid(modal_hz)
    ev = _GridEvaluator(models, omegas)

    band_idx = np.zeros(0, dtype=int)
    limit = np.inf
    if flex_guard is not None:
        lo_hz, hi_hz, limit = flex_guard
        band_idx = np.where((omegas >= TWO_PI * lo_hz) & (omegas <= TWO_PI * hi_hz))[0]

    K0 = k0.matrix.copy()
    if not ev.stable(K0):
        raise InitialGainsUnstableError("initial gains do not stabilize every grid model")

    evals = [0]

    def cost(K):
        evals[0] += len(models)
        return ev.norms(K)

    def guard_excess(K):
        if not np.isfinite(limit):
            return 0.0
        return max(0.0, ev.loop_radius(K, band_idx) / limit - 1.0)

    def merit(norms, excess, tau):
        return _smooth_max(norms, tau) * (1.0 + 4.0 * excess) ** 2

    best_K = K0.copy()
    best_norms = cost(best_K)
    best_excess = guard_excess(best_K)
    best = float(best_norms.max())
    f0 = best

    def try_accept(K, current_best):
        nonlocal best_K, best_norms, best, best_excess
        norms = cost(K)
        excess = guard_excess(K)
        val = float(norms.max())
        better = (excess < best_excess - 1e-12) or \
                 (excess <= best_excess + 1e-12 and val < current_best)
        if better and ev.stable(K):
            best_K, best_norms, best, best_excess = K.copy(), norms, val, excess
            return val, True
        return val, False

    # meta scale search: multiplicative factors on the attitude / rate blocks
    factors = [4.0, 2.0, 1.4, 1.2, 1.1]
    for f in factors:
        improved = True
        while improved and evals[0] < budget * 0.35:
            improved = False
            for i in (0, 1):
                for direction in (f, 1.0 / f):
                    K = best_K.copy()
                    K[:, 3 * i:3 * i + 3] = K[:, 3 * i:3 * i + 3] * direction
                    _, ok = try_accept(K, best)
                    if ok:
                        improved = True

    # coordinate pattern search on an annealed soft maximum; the incumbent
    # walks the smoothed (guard-penalized) objective while the best true
    # guard-feasible peak is kept aside
    inc_K = best_K.copy()
    inc_norms = best_norms.copy()
    inc_excess = best_excess
    steps = 0.25 * np.maximum(np.abs(inc_K), 1e-3 * np.abs(inc_K).max())
    tau = 0.1 * best
    while evals[0] < budget:
        improved_any = False
        for i in range(3):
            for j in range(6):
                if evals[0] >= budget:
                    break
                base_merit = merit(inc_norms, inc_excess, tau)
                moved = False
                for sgn in (1.0, -1.0):
                    K = inc_K.copy()
                    K[i, j] += sgn * steps[i, j]
                    norms = cost(K)
                    excess = guard_excess(K)
                    # incumbent moves use a cheap blow-up guard; candidates for
                    # the returned optimum get the full eigenvalue check
                    if merit(norms, excess, tau) < base_merit and float(norms.max()) < 5.0 * max(f0, best):
                        inc_K, inc_norms, inc_excess = K, norms, excess
                        steps[i, j] *= 1.6
                        moved = True
                        improved_any = True
                        accept = (excess < best_excess - 1e-12) or \
                                 (excess <= best_excess + 1e-12 and float(norms.max()) < best)
                        if accept and ev.stable(K):
                            best_K, best_norms = K.copy(), norms
                            best, best_excess = float(norms.max()), excess
                        break
                if not moved:
                    steps[i, j] *= 0.55
        tau = max(tau * 0.6, 1e-4 * best)
        if not improved_any and np.max(steps / np.maximum(np.abs(inc_K), 1e-12)) < 1e-5:
            break

    # exact per-model norms for the returned gains; never hand back anything
    # worse than the starting point
    per_model, gamma = _exact_gamma(models, best_K)
    per0, gamma0 = (per_model, gamma) if np.array_equal(best_K, K0) else _exact_gamma(models, K0)
    if gamma > gamma0 and best_excess >= guard_excess(K0):
        best_K, per_model, gamma = K0.copy(), per0, gamma0
    return SynthesisResult(
        gains=ControllerGains(best_K),
        gamma=float(gamma),
        gamma_initial=float(gamma0),
        per_model=per_model,
        evaluations=evals[0],
        budget_exhausted=evals[0] >= budget,
    )


def _exact_gamma(models, K):
    gains = ControllerGains(K)
    per = np.empty(len(models))
    for i, m in enumerate(models):
        closed = close_controller(m, gains)
        per[i] = hinf_norm(closed.core.pick(inputs=m.group("disturbance"),
                                            outputs=m.group("performance")),
                           tol=1e-8)[0]
    return per, float(per.max())
