"""Structured-singular-value machinery and the robustness experiments.

The upper bound is the classical block-commuting D-scaling bound, optimized
per frequency by coordinate descent on logarithmic diagonal scalings; real
parametric blocks are treated as complex scalars (conservative, and reported
alongside the power-iteration lower bound so the gap stays visible).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    RATE_OUT,
    TORQUE_IN,
    Pose,
    assemble_plant,
    evaluate_plant,
    pose_at,
)
from .errors import (
    MissingChannelsError,
    NominalUnstableError,
    UnknownBlockError,
)
from .lfr import COMPLEX_FULL, REAL_SCALAR, LfrModel, UncertaintyBlock, close_blocks
from .statespace import StateSpaceModel, connect, gain
from .synthesis import (
    SensorActuatorSet,
    WeightSet,
    _modal_response,
    build_design_interconnection,
    close_controller,
)

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# augmented uncertainty
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AugmentedUncertainty:
    """Additive inverse-inertia cover plus multiplicative actuator cover."""

    w_add_db: float = -75.0
    w_mul_diag: float = 4e-2
    w_mul_offdiag: float = 4e-3

    @classmethod
    def from_config(cls, config):
        a = config.analysis
        return cls(float(a["w_add_db"]), float(a["w_mul_diag"]), float(a["w_mul_offdiag"]))

    @property
    def w_add(self):
        return 10.0 ** (self.w_add_db / 20.0)


MUL_NAMES = ("delta_mul_xx", "delta_mul_yy", "delta_mul_zz",
             "delta_mul_xy", "delta_mul_xz", "delta_mul_yx",
             "delta_mul_yz", "delta_mul_zx", "delta_mul_zy")
# off-diagonal scalars: (row they feed, torque component they read)
_MUL_OFFDIAG = {"delta_mul_xy": (0, 1), "delta_mul_xz": (0, 2),
                "delta_mul_yx": (1, 0), "delta_mul_yz": (1, 2),
                "delta_mul_zx": (2, 0), "delta_mul_zy": (2, 1)}


def augment_uncertainty(plant, aug):
    """Extend a plant with additive and multiplicative analysis uncertainty.

    The torque input is replaced by T_hat = (I + W_L Delta_L + W_R Delta_R) T
    and the angular-acceleration output by wdot + W_add * Delta_add(T); the
    structure is extended in the order (existing, additive, multiplicative).
    """
    groups = plant.channel_groups
    if "torque_in" not in groups or "rate_out" not in groups:
        raise MissingChannelsError("plant must expose torque_in / rate_out groups")
    t_in = groups["torque_in"]
    r_out = groups["rate_out"]
    core = plant.core

    eye = np.eye(3)
    # perturbation channels: additive (3x3 full) then the nine scalars
    in_w = [f"aug.add.w{i}" for i in range(3)] \
        + [f"aug.mulL.w{i}" for i in range(3)] \
        + [f"aug.mulR.w{i}" for i in range(6)]
    in_z = [f"aug.add.z{i}" for i in range(3)] \
        + [f"aug.mulL.z{i}" for i in range(3)] \
        + [f"aug.mulR.z{i}" for i in range(6)]
    t_cmd = [f"aug.T.{i}" for i in range(3)]
    t_out = [f"aug.Tout.{i}" for i in range(3)]

    # input wrapper: rows (add z, mulL z, mulR z, T out), cols (mulL w, mulR w, T)
    D_in = np.zeros((15, 12))
    D_in[0:3, 9:12] = eye              # z_add = T
    D_in[3:6, 9:12] = eye              # z_mulL = T
    for k, name in enumerate(MUL_NAMES[3:]):
        _, src = _MUL_OFFDIAG[name]
        D_in[6 + k, 9 + src] = 1.0     # z for each off-diagonal scalar
    D_in[12:15, 9:12] = eye            # T_out = T ...
    D_in[12:15, 0:3] = aug.w_mul_diag * eye
    for k, name in enumerate(MUL_NAMES[3:]):
        dst, _ = _MUL_OFFDIAG[name]
        D_in[12 + dst, 3 + k] = aug.w_mul_offdiag
    wrap_in = gain(D_in, in_w[3:] + t_cmd, in_z + t_out)

    # output wrapper: wdot_out = wdot + W_add * w_add
    r_new = [f"aug.rate.{i}" for i in range(3)]
    wrap_out = gain(np.hstack([np.eye(3), aug.w_add * np.eye(3)]),
                    [f"aug.rin.{i}" for i in range(3)] + in_w[:3], r_new)

    wires = list(zip(t_out, t_in)) + list(zip(r_out, [f"aug.rin.{i}" for i in range(3)]))
    old_w = list(groups.get("w", ()))
    old_z = list(groups.get("z", ()))
    new_w = old_w + in_w
    new_z = old_z + in_z
    other_in = [l for l in core.input_labels if l not in set(old_w) and l not in set(t_in)]
    other_out = [l for l in core.output_labels if l not in set(old_z) and l not in set(r_out)]
    ic = connect([core, wrap_in, wrap_out], wires,
                 new_w + t_cmd + other_in, new_z + r_new + other_out)

    entries = list(plant.structure)
    entries.append(UncertaintyBlock("delta_add", COMPLEX_FULL, shape=(3, 3)))
    for name in MUL_NAMES:
        entries.append(UncertaintyBlock(name, COMPLEX_FULL, shape=(1, 1)))

    new_groups = {k: v for k, v in groups.items()}
    new_groups["w"] = tuple(new_w)
    new_groups["z"] = tuple(new_z)
    new_groups["torque_in"] = tuple(t_cmd)
    new_groups["rate_out"] = tuple(r_new)
    return LfrModel(ic, tuple(entries), new_groups)


# ---------------------------------------------------------------------------
# mu machinery
# ---------------------------------------------------------------------------


def _channel_layout(structure):
    """Scaling variables and scalar groups for a block structure.

    Returns (vars, scalars, w_total, z_total) where each var is a pair of
    (w indices, z indices) sharing one positive scaling, and scalars maps a
    real block name to its paired channel indices (for lower-bound updates).
    """
    vars_, scalars = [], {}
    wo = zo = 0
    for b in structure:
        if b.kind == REAL_SCALAR:
            for k in range(b.repetitions):
                vars_.append(([wo + k], [zo + k]))
            scalars.setdefault(b.name, []).extend(
                (wo + k, zo + k) for k in range(b.repetitions))
            wo += b.repetitions
            zo += b.repetitions
        else:
            vars_.append((list(range(wo, wo + b.rows)), list(range(zo, zo + b.cols))))
            wo += b.rows
            zo += b.cols
    return vars_, scalars, wo, zo


def _scaled_sigma(M, dz, dw):
    return np.linalg.svd(M * (dz[..., :, None] / dw[..., None, :]),
                         compute_uv=False)[..., 0]


def mu_upper(M, structure, tol=1e-9, max_sweeps=60):
    """D-scaling upper bound on the structured singular value of one matrix."""
    M = np.asarray(M, dtype=complex)
    if M.size == 0 or not np.any(M):
        return 0.0
    mu, _ = mu_upper_batch(M[None, :, :], structure, tol=tol, max_sweeps=max_sweeps,
                           golden_polish=True)
    return float(mu[0])


def mu_upper_batch(Ms, structure, tol=1e-6, max_sweeps=24, d_init=None,
                   golden_polish=False):
    """Frequency-batched D-scaling bound; returns (mu array, scalings).

    Coordinate descent on log-diagonal scalings with a shrinking
    multiplicative step schedule, optionally polished by per-variable golden
    sections.  `d_init` warm-starts the scaling vectors.
    """
    Ms = np.asarray(Ms, dtype=complex)
    nb, zdim, wdim = Ms.shape
    vars_, _, w_total, z_total = _channel_layout(structure)
    if (z_total, w_total) != (zdim, wdim):
        raise ValueError(f"matrix is {zdim}x{wdim}, structure wants {z_total}x{w_total}")
    if zdim == 0 or wdim == 0:
        return np.zeros(nb), (np.ones((nb, wdim)), np.ones((nb, zdim)))
    if d_init is not None:
        dw, dz = d_init[0].copy(), d_init[1].copy()
    else:
        dw = np.ones((nb, wdim))
        dz = np.ones((nb, zdim))
    best = _scaled_sigma(Ms, dz, dw)
    if len(vars_) <= 1:
        return best, (dw, dz)

    factors = [4.0, 2.0, 1.5, 1.25, 1.12, 1.06, 1.03, 1.015, 1.007, 1.003]
    sweeps = 0
    for f in factors:
        improved = True
        while improved and sweeps < max_sweeps:
            improved = False
            sweeps += 1
            prev = best.copy()
            for wi, zi in vars_:
                for step in (f, 1.0 / f):
                    dw_t = dw.copy()
                    dz_t = dz.copy()
                    dw_t[:, wi] *= step
                    dz_t[:, zi] *= step
                    cand = _scaled_sigma(Ms, dz_t, dw_t)
                    mask = cand < best
                    if np.any(mask):
                        dw[mask] = dw_t[mask]
                        dz[mask] = dz_t[mask]
                        best[mask] = cand[mask]
            if np.max(prev - best) > tol * np.max(best):
                improved = True

    if golden_polish:
        phi = (np.sqrt(5.0) - 1.0) / 2.0
        for _ in range(6):
            prev = best.copy()
            for wi, zi in vars_:
                a = np.full(nb, -1.5)
                b = np.full(nb, 1.5)

                def eval_at(x):
                    s = 10.0 ** x
                    dw_t = dw.copy()
                    dz_t = dz.copy()
                    dw_t[:, wi] *= s[:, None]
                    dz_t[:, zi] *= s[:, None]
                    return _scaled_sigma(Ms, dz_t, dw_t), dw_t, dz_t

                x1 = b - phi * (b - a)
                x2 = a + phi * (b - a)
                f1, _, _ = eval_at(x1)
                f2, _, _ = eval_at(x2)
                for _ in range(48):
                    m1 = f1 < f2
                    b = np.where(m1, x2, b)
                    a = np.where(m1, a, x1)
                    x2_new = np.where(m1, x1, a + phi * (b - a))
                    x1_new = np.where(m1, b - phi * (b - a), x2)
                    fn, _, _ = eval_at(np.where(m1, x1_new, x2_new))
                    f1, f2 = np.where(m1, fn, f2), np.where(m1, f1, fn)
                    x1, x2 = x1_new, x2_new
                xm = np.where(f1 < f2, x1, x2)
                cand, dw_t, dz_t = eval_at(xm)
                mask = cand < best
                dw[mask] = dw_t[mask]
                dz[mask] = dz_t[mask]
                best[mask] = cand[mask]
            if np.max(prev - best) <= tol * np.max(best):
                break
    return best, (dw, dz)


def _real_channels(structure):
    """Paired (w, z) channel indices of the real parametric scalars."""
    idx = []
    wo = zo = 0
    for b in structure:
        if b.kind == REAL_SCALAR:
            idx.extend((wo + k, zo + k) for k in range(b.repetitions))
            wo += b.repetitions
            zo += b.repetitions
        else:
            wo += b.rows
            zo += b.cols
    return idx


def _real_block_spans(structure):
    """(start, size) z-ranges of the real scalar blocks (w and z aligned)."""
    spans = []
    zo = 0
    for b in structure:
        if b.kind == REAL_SCALAR:
            spans.append((zo, b.repetitions))
            zo += b.repetitions
        else:
            zo += b.cols
    return spans


def mu_upper_mixed_batch(Ms, structure, complex_upper=None, d_init=None,
                         bisection_steps=16, sweeps=2, tol=1e-4):
    """Mixed real/complex upper bound with D scalings and skew G scalings.

    Real parametric blocks get the classical skew refinement: beta is
    feasible when min over (D, G) of sigma_max((I+G^2)^-1/4 (D M D^-1/beta
    - jG) (I+G^2)^-1/4) <= 1, with G Hermitian and supported on the real
    blocks (full Hermitian per repeated-scalar block, so the joint realness
    of repeated occurrences is exploited).  The complex D-scaling bound
    seeds the bisection from above, so the result is never worse than the
    complex bound.
    """
    Ms = np.asarray(Ms, dtype=complex)
    nb, zdim, wdim = Ms.shape
    if zdim != wdim:
        raise ValueError("mixed bound needs square uncertainty channels")
    if complex_upper is None:
        complex_upper, d_init = mu_upper_batch(Ms, structure, tol=tol, d_init=d_init)
    vars_, _, w_total, z_total = _channel_layout(structure)
    spans = _real_block_spans(structure)
    if not spans or not np.any(complex_upper > 0):
        return complex_upper.copy()
    dw = d_init[0].copy() if d_init is not None else np.ones((nb, wdim))
    dz = d_init[1].copy() if d_init is not None else np.ones((nb, zdim))
    G = np.zeros((nb, zdim, zdim), dtype=complex)

    # Hermitian basis moves per real block: the uniform diagonal direction
    # (dominant for repeated scalars), individual diagonal entries, and real
    # and imaginary off-diagonal pairs; each move updates a set of entries
    g_moves = []
    for (s, k) in spans:
        g_moves.append(tuple((s + i, s + i, 1.0) for i in range(k)))
        if k > 1:
            for i in range(k):
                g_moves.append(((s + i, s + i, 1.0),))
            for i in range(k):
                for jj in range(i + 1, k):
                    g_moves.append(((s + i, s + jj, 1.0),))
                    g_moves.append(((s + i, s + jj, 1.0j),))

    def sigma(beta, dw_, dz_, G_):
        T = Ms * (dz_[:, :, None] / dw_[:, None, :]) / beta[:, None, None] - 1j * G_
        lam, V = np.linalg.eigh(G_)
        wfac = (1.0 + lam ** 2) ** -0.25
        W = np.einsum("bik,bk,bjk->bij", V, wfac, V.conj())
        T = W @ T @ W
        return np.linalg.svd(T, compute_uv=False)[..., 0]

    # the skew scaling is capped: as G grows the scaled sigma approaches 1
    # from above, so an uncapped walk could fake feasibility within rounding
    G_CAP = 100.0
    MARGIN = 1e-7
    hi = np.maximum(complex_upper.copy(), 1e-12)
    lo = hi * 1e-4
    for _ in range(bisection_steps):
        beta = np.sqrt(hi * lo)
        val = sigma(beta, dw, dz, G)
        for _ in range(sweeps):
            for wi, zi in vars_:
                for step in (2.0, 0.5, 1.2, 1.0 / 1.2):
                    dw_t, dz_t = dw.copy(), dz.copy()
                    dw_t[:, wi] *= step
                    dz_t[:, zi] *= step
                    cand = sigma(beta, dw_t, dz_t, G)
                    mask = cand < val
                    dw[mask], dz[mask], val[mask] = dw_t[mask], dz_t[mask], cand[mask]
            for move in g_moves:
                cur = np.max([np.abs(G[:, i, jj]) for (i, jj, _) in move], axis=0)
                scale = np.maximum(cur, 0.5)
                for step in (1.0, -1.0, 0.25, -0.25, 8.0, -8.0):
                    G_t = G.copy()
                    over = np.zeros(nb, dtype=bool)
                    for (i, jj, unit) in move:
                        G_t[:, i, jj] = G[:, i, jj] + step * scale * unit
                        if i != jj:
                            G_t[:, jj, i] = np.conj(G_t[:, i, jj])
                        else:
                            G_t[:, i, i] = G_t[:, i, i].real + 0j
                        over |= np.abs(G_t[:, i, jj]) > G_CAP
                    if np.all(over):
                        continue
                    cand = sigma(beta, dw, dz, G_t)
                    mask = (cand < val) & ~over
                    G[mask], val[mask] = G_t[mask], cand[mask]
        feasible = val <= 1.0 - MARGIN
        hi = np.where(feasible, beta, hi)
        lo = np.where(feasible, lo, beta)
        if np.max(hi / np.maximum(lo, 1e-300)) < 1.0 + tol:
            break
    return hi


def _build_delta(structure, blocks_values):
    """Block-diagonal perturbation matrix (w x z) from per-entry values."""
    _, _, w_total, z_total = _channel_layout(structure)
    D = np.zeros((w_total, z_total), dtype=complex)
    wo = zo = 0
    for b, val in zip(structure, blocks_values):
        if b.kind == REAL_SCALAR:
            D[wo:wo + b.repetitions, zo:zo + b.cols] = val * np.eye(b.repetitions)
            wo += b.repetitions
            zo += b.cols
        else:
            D[wo:wo + b.rows, zo:zo + b.cols] = val
            wo += b.rows
            zo += b.cols
    return D


def mu_lower(M, structure, iters=80, tol=1e-12, init=None):
    """Power-iteration lower bound with a destabilizing witness.

    Returns (bound, witness, converged): the witness has maximum singular
    value 1/bound and makes I - M*witness singular; real scalar blocks carry
    complex phases (the real structure is relaxed to complex throughout).
    """
    M = np.asarray(M, dtype=complex)
    if M.size == 0 or not np.any(M):
        return 0.0, None, True
    scalars = {}
    fulls = []
    wo = zo = 0
    layout = []
    for b in structure:
        if b.kind == REAL_SCALAR:
            scalars.setdefault(b.name, []).append((wo, zo, b.repetitions))
            layout.append(("s", b.name, wo, zo, b.repetitions))
            wo += b.repetitions
            zo += b.repetitions
        else:
            layout.append(("f", b.name, wo, zo, b.shape))
            fulls.append((wo, zo, b.shape))
            wo += b.rows
            zo += b.cols

    rng = np.random.default_rng(0)
    if init is not None:
        delta = init.copy()
    else:
        U, _, _ = np.linalg.svd(M)
        x0 = U[:, 0]
        delta = _align_delta(layout, scalars, x0, M.conj().T @ x0, rng)

    def spectral(delta):
        w, V = np.linalg.eig(M @ delta)
        k = int(np.argmax(np.abs(w)))
        return w[k], V[:, k]

    lam, x = spectral(delta)
    best = (abs(lam), lam, delta)
    converged = False
    for it in range(iters):
        if abs(lam) <= 1e-300:
            break
        wl, Vl = np.linalg.eig((M @ delta).conj().T)
        kl = int(np.argmin(np.abs(wl.conj() - lam)))
        y = Vl[:, kl]
        yhat = M.conj().T @ y
        new_delta = _align_delta(layout, scalars, x, yhat, rng)
        new_lam, new_x = spectral(new_delta)
        if abs(new_lam) > best[0]:
            best = (abs(new_lam), new_lam, new_delta)
        if abs(abs(new_lam) - abs(lam)) <= tol * max(abs(new_lam), 1e-30) and it > 2:
            lam, x, delta = new_lam, new_x, new_delta
            converged = True
            break
        lam, x, delta = new_lam, new_x, new_delta
    bound, lam_b, delta_b = best
    if bound <= 1e-300:
        return 0.0, None, True
    witness = delta_b / lam_b
    return float(bound), witness, converged


def _align_delta(layout, scalars, x, yhat, rng):
    """Blockwise unit-norm Delta maximizing Re(yhat^H Delta x)."""
    done_scalars = {}
    vals = []
    for kind, name, wo, zo, shape in layout:
        if kind == "s":
            if name not in done_scalars:
                acc = 0.0 + 0j
                for wo2, zo2, reps in scalars[name]:
                    acc += yhat[wo2:wo2 + reps].conj() @ x[zo2:zo2 + reps]
                done_scalars[name] = np.exp(-1j * np.angle(acc)) if acc != 0 else 1.0
            vals.append(done_scalars[name])
        else:
            rows, cols = shape
            yb = yhat[wo:wo + rows]
            xb = x[zo:zo + cols]
            ny, nx = np.linalg.norm(yb), np.linalg.norm(xb)
            if ny < 1e-14 or nx < 1e-14:
                vals.append(np.eye(rows, cols))
            else:
                vals.append(np.outer(yb / ny, xb.conj() / nx))
    return _assemble_delta(layout, vals)


def _assemble_delta(layout, vals):
    w_total = max(wo + (shape if kind == "s" else shape[0])
                  for (kind, _, wo, zo, shape) in layout)
    z_total = max(zo + (shape if kind == "s" else shape[1])
                  for (kind, _, wo, zo, shape) in layout)
    D = np.zeros((w_total, z_total), dtype=complex)
    for (kind, _, wo, zo, shape), v in zip(layout, vals):
        if kind == "s":
            D[wo:wo + shape, zo:zo + shape] = v * np.eye(shape)
        else:
            D[wo:wo + shape[0], zo:zo + shape[1]] = v
    return D


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class MuResult:
    """Frequency-gridded bounds for one model (or one sweep sample).

    `upper` is the reported bound (mixed real/complex when the sweep enables
    the realness refinement); `upper_complex` keeps the plain D-scaling bound
    so the conservatism gap stays visible.  `lower` is a certified lower
    bound for the same structure as `upper` (zero where none was computed).
    """

    omegas: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    structure: tuple
    worst_sample: np.ndarray | None
    peak: tuple
    label: float = 0.0
    nominal_stable: bool = True
    upper_complex: np.ndarray = None

    def __post_init__(self):
        if np.any(self.upper + 1e-12 < self.lower):
            worst = float(np.max(self.lower - self.upper))
            raise ValueError(f"lower bound exceeds upper bound by {worst:.3e}")


def mu_frequency_grid(modal_hz=(), lo_hz=1e-2, hi_hz=1e2, per_decade=60, densify=5,
                      window=0.3):
    """Log grid densified around known modal frequencies (rad/s)."""
    n = int(np.log10(hi_hz / lo_hz) * per_decade) + 1
    f = list(np.logspace(np.log10(lo_hz), np.log10(hi_hz), n))
    for fm in modal_hz:
        lo, hi = fm * (1.0 - window), fm * (1.0 + window)
        k = max(5, int(np.log10(hi / lo) * per_decade * densify))
        f += list(np.logspace(np.log10(lo), np.log10(hi), k))
    f = np.unique(np.asarray(f))
    f = f[(f >= lo_hz) & (f <= hi_hz)]
    return TWO_PI * f


def mu_sweep_model(model, omegas, with_lower=True, upper_tol=1e-4, label=0.0,
                   real_refinement=False):
    """Mu bounds across frequency for one closed-loop LfrModel.

    With `real_refinement`, the reported upper bound applies the mixed
    real/complex skew scaling on top of the complex D-scaling bound (real
    parametric scalars stop acting as fictitious dampers); the complex bound
    is kept in `upper_complex` and the pointwise lower bound (which certifies
    the complex relaxation) is only attached to the complex bound.
    """
    w_lab = model.group("w")
    z_lab = model.group("z")
    core = model.core
    if core.n_states and not core.is_stable():
        raise NominalUnstableError(0, f"(abscissa {core.spectral_abscissa():.3e})")
    resp = _modal_response(core.pick(inputs=list(w_lab), outputs=list(z_lab)), omegas)
    upper_c, d_scales = mu_upper_batch(resp, model.structure, tol=upper_tol)
    upper = upper_c
    if real_refinement:
        upper = mu_upper_mixed_batch(resp, model.structure, complex_upper=upper_c,
                                     d_init=d_scales)
    lower = np.zeros_like(upper)
    witness = None
    if with_lower and not real_refinement:
        init = None
        for i in range(len(omegas)):
            b, wit, _ = mu_lower(resp[i], model.structure, iters=8 if init is not None else 40,
                                 init=init)
            lower[i] = min(b, upper[i])
            if wit is not None:
                init = wit * b  # re-normalized next call by alignment anyway
        i_pk = int(np.argmax(upper))
        b, wit, _ = mu_lower(resp[i_pk], model.structure, iters=120)
        lower[i_pk] = max(lower[i_pk], min(b, upper[i_pk]))
        witness = wit
    i_pk = int(np.argmax(upper))
    return MuResult(omegas=np.asarray(omegas), upper=upper, lower=lower,
                    structure=model.structure, worst_sample=witness,
                    peak=(float(omegas[i_pk]), float(upper[i_pk])), label=label,
                    upper_complex=upper_c)


def robust_stability_sweep(models, omegas, with_lower=False, labels=None,
                           upper_tol=1e-4, real_refinement=False):
    """Per-model, per-frequency mu upper bounds on the (w -> z) channel.

    Raises NominalUnstable naming the offending grid index; returns one
    MuResult per model plus the surface peak via `sweep_peak`.  Models are
    swept in parallel threads when SPACELFR_THREADS is set above 1.
    """
    for i, m in enumerate(models):
        if m.core.n_states and not m.core.is_stable():
            raise NominalUnstableError(i, f"(abscissa {m.core.spectral_abscissa():.3e})")

    def one(i):
        return mu_sweep_model(models[i], omegas, with_lower=with_lower,
                              upper_tol=upper_tol, real_refinement=real_refinement,
                              label=labels[i] if labels is not None else float(i))

    return _parallel_map(one, range(len(models)))


def _parallel_map(fn, items):
    import os
    n = int(os.environ.get("SPACELFR_THREADS", "1"))
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def sweep_peak(results):
    """(label, omega, mu) of the global upper-bound peak of a sweep."""
    i = int(np.argmax([r.peak[1] for r in results]))
    r = results[i]
    return r.label, r.peak[0], r.peak[1]


# ---------------------------------------------------------------------------
# worst-case gain
# ---------------------------------------------------------------------------


def worst_case_gain(model, channel, omegas, tol=1e-3, max_expand=40):
    """Per-frequency upper bounds on a performance channel over admissible
    uncertainty, by bisection on the gain level wrapped as a full block.

    `channel` is "e_p" or "e_u" (first/second performance triple); returns
    (bounds, nominal) arrays over the grid.
    """
    if channel not in ("e_p", "e_u"):
        raise UnknownBlockError(f"channel must be e_p or e_u, got {channel!r}")
    core = model.core
    if core.n_states and not core.is_stable():
        raise NominalUnstableError(0)
    w_lab = list(model.group("w"))
    z_lab = list(model.group("z"))
    d_lab = list(model.group("disturbance"))
    e_all = list(model.group("performance"))
    e_lab = e_all[:3] if channel == "e_p" else e_all[3:]

    resp = _modal_response(core.pick(inputs=w_lab + d_lab, outputs=z_lab + e_lab), omegas)
    nz, nw = len(z_lab), len(w_lab)
    nd, ne = len(d_lab), len(e_lab)
    Mzw = resp[:, :nz, :nw]
    Mzd = resp[:, :nz, nw:]
    Mew = resp[:, nz:, :nw]
    Med = resp[:, nz:, nw:]
    nominal = np.linalg.svd(Med, compute_uv=False)[..., 0] if ne and nd else np.zeros(len(omegas))
    if nw == 0:
        return nominal.copy(), nominal

    structure_aug = tuple(model.structure) + (
        UncertaintyBlock("#wcgain", COMPLEX_FULL, shape=(nd, ne)),)

    lo = np.maximum(nominal.copy(), 1e-12)
    hi = lo.copy()
    d_init = None

    def mu_at(g):
        nonlocal d_init
        M = np.concatenate([
            np.concatenate([Mzw, Mzd], axis=2),
            np.concatenate([Mew / g[:, None, None], Med / g[:, None, None]], axis=2),
        ], axis=1)
        mu, d_init = mu_upper_batch(M, structure_aug, tol=1e-5,
                                    d_init=d_init, max_sweeps=30)
        return mu

    # expand hi until mu <= 1 everywhere
    for _ in range(max_expand):
        mu = mu_at(hi)
        mask = mu > 1.0
        if not np.any(mask):
            break
        hi[mask] *= 2.0
    # bisection in log space
    while np.max(hi / lo) > 1.0 + tol:
        mid = np.sqrt(hi * lo)
        mu = mu_at(mid)
        up = mu > 1.0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return hi, nominal


# ---------------------------------------------------------------------------
# mission-level drivers
# ---------------------------------------------------------------------------


TARGET_BLOCKS = ("sa3.delta_omega1", "sa4.delta_omega1", "rh2.delta_m",
                 "rh2.delta_Jxx", "rh2.delta_Jyy", "rh2.delta_Jzz")


def closed_loop_grid(config, trajectory, gains, n_models, augment=True, mode="switched"):
    """Uncertain closed loops along the mission: evaluate geometry, augment,
    wrap with the design weights and close the controller.

    While the target is fully detached (both coupling gates at zero) its
    parametric blocks act on an isolated body that the attitude loop can
    neither excite nor observe; they are closed at nominal there so the
    sweep measures margins of the operating loop, not the self-resonance of
    a disconnected appendage.
    """
    weights = WeightSet.from_config(config)
    hw = SensorActuatorSet.from_config(config)
    aug = AugmentedUncertainty.from_config(config)
    plant = assemble_plant(config, mode=mode, uncertain=True)
    times = np.linspace(0.0, config.timeline.duration, int(n_models))
    out = []
    for t in times:
        pose = pose_at(config, trajectory, t)
        p = evaluate_plant(plant, config, pose, mode=mode, uncertain=True)
        if mode == "switched" and pose.switches == (0.0, 0.0):
            drop = {n: 0.0 for n in TARGET_BLOCKS if n in set(p.block_names())}
            p = close_blocks(p, drop)
        if augment:
            p = augment_uncertainty(p, aug)
        ic = build_design_interconnection(p, weights, hw)
        out.append(close_controller(ic, gains))
    return times, out


def docking_stability_sweep(config, trajectory, gains, stiffness_grid, damping=100.0,
                            omegas=None, with_lower=False, upper_tol=1e-4,
                            real_refinement=False):
    """Closed-loop mu over the docking-stiffness range at the grasp pose.

    The dock7 interconnection is built once; each stiffness sample closes the
    spring blocks and runs the frequency sweep.  Nominal instability at one
    sample is recorded on its result and the sweep continues.
    """
    weights = WeightSet.from_config(config)
    hw = SensorActuatorSet.from_config(config)
    aug = AugmentedUncertainty.from_config(config)
    pose = pose_at(config, trajectory, config.timeline.first_dock)
    plant = assemble_plant(config, mode="dock7", uncertain=True)
    p = evaluate_plant(plant, config, pose, mode="dock7", uncertain=True)
    p = augment_uncertainty(p, aug)
    ic = build_design_interconnection(p, weights, hw)
    closed = close_controller(ic, gains)
    if omegas is None:
        modal = sorted({f for sa in config.solar_arrays.values()
                        for f in sa.appendage.frequencies_hz})
        omegas = mu_frequency_grid(modal)
    def one(k):
        vals = {"sm1.k_shear": k, "sm1.k_tors": k,
                "sm1.d_shear": damping, "sm1.d_tors": damping}
        sample = close_blocks(closed, vals)
        if sample.core.n_states and not sample.core.is_stable():
            return MuResult(omegas=np.asarray(omegas),
                            upper=np.full(len(omegas), np.nan),
                            lower=np.zeros(len(omegas)),
                            structure=sample.structure, worst_sample=None,
                            peak=(np.nan, np.nan), label=float(k),
                            nominal_stable=False)
        return mu_sweep_model(sample, omegas, with_lower=with_lower,
                              upper_tol=upper_tol, label=float(k),
                              real_refinement=real_refinement)

    return _parallel_map(one, np.asarray(stiffness_grid, dtype=float))


def sensitivity_overlay(plant, subset, samples, channel=None, seed=0, omegas=None):
    """Frequency-response family for random/vertex samples of chosen blocks.

    All other blocks stay nominal; returns (omegas, list of (tag, |G|))."""
    names = plant.block_names()
    unknown = [b for b in subset if b not in names]
    if unknown:
        raise UnknownBlockError(f"unknown block(s): {unknown}")
    if channel is None:
        channel = (plant.group("torque_in")[0], plant.group("rate_out")[0])
    if omegas is None:
        omegas = mu_frequency_grid((), per_decade=240)
    rng = np.random.default_rng(seed)
    sample_sets = [("nominal", {n: 0.0 for n in subset})]
    if subset:
        lohi = {n: next(b.range for b in plant.structure if b.name == n) for n in subset}
        sample_sets.append(("low", {n: lohi[n][0] for n in subset}))
        sample_sets.append(("high", {n: lohi[n][1] for n in subset}))
        for k in range(max(0, samples - 3)):
            sample_sets.append((f"rand{k}", {n: rng.uniform(*lohi[n]) for n in subset}))
    curves = []
    for tag, vals in sample_sets:
        closed = close_blocks(plant, vals)
        nominal_rest = {n: 0.0 for n in closed.block_names()}
        sys = close_blocks(closed, nominal_rest, _clip_zero=True).core
        resp = _modal_response(sys.pick(inputs=[channel[0]], outputs=[channel[1]]), omegas)
        curves.append((tag, np.abs(resp[:, 0, 0])))
    return omegas, curves
