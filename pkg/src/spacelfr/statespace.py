"""Labeled continuous-time state-space models and interconnection algebra.

Every model is an (A, B, C, D) quadruple with named input/output channels.
Wiring between models is expressed purely on channel labels so that block
diagrams stay auditable; see `connect`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AlgebraicLoopError,
    DimensionMismatchError,
    DuplicateLabelError,
    SingularFeedthroughError,
    SingularResolventError,
    UnknownLabelError,
    UnstableModelError,
)

# Relative singular-value threshold below which a feedthrough loop matrix is
# treated as singular.
LOOP_TOL = 1e-12


def _as_matrix(x, rows=None, cols=None):
    a = np.atleast_2d(np.asarray(x, dtype=float))
    if rows is not None and cols is not None and a.size == 0:
        a = a.reshape(rows, cols)
    return a


@dataclass(frozen=True)
class StateSpaceModel:
    """Continuous-time LTI model with labeled channels.

    A is n x n, B is n x m, C is p x n, D is p x m;  m inputs and p outputs
    are named by `input_labels` / `output_labels` (unique within each side).
    Instances are immutable; all operations return new models.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    input_labels: tuple
    output_labels: tuple

    def __post_init__(self):
        D = _as_matrix(self.D)
        p, m = D.shape
        A = _as_matrix(self.A, 0, 0)
        n = A.shape[0]
        B = _as_matrix(self.B, n, m)
        C = _as_matrix(self.C, p, n)
        if A.shape != (n, n):
            raise DimensionMismatchError(f"A must be square, got {A.shape}")
        if B.shape != (n, m):
            raise DimensionMismatchError(f"B shape {B.shape} incompatible with A {A.shape} / D {D.shape}")
        if C.shape != (p, n):
            raise DimensionMismatchError(f"C shape {C.shape} incompatible with A {A.shape} / D {D.shape}")
        in_labels = tuple(self.input_labels)
        out_labels = tuple(self.output_labels)
        if len(in_labels) != m:
            raise DimensionMismatchError(f"{len(in_labels)} input labels for {m} inputs")
        if len(out_labels) != p:
            raise DimensionMismatchError(f"{len(out_labels)} output labels for {p} outputs")
        if len(set(in_labels)) != len(in_labels):
            raise DuplicateLabelError("duplicate input labels")
        if len(set(out_labels)) != len(out_labels):
            raise DuplicateLabelError("duplicate output labels")
        for arr in (A, B, C, D):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "input_labels", in_labels)
        object.__setattr__(self, "output_labels", out_labels)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.D.shape[1]

    @property
    def n_outputs(self):
        return self.D.shape[0]

    def input_index(self, label):
        try:
            return self.input_labels.index(label)
        except ValueError:
            raise UnknownLabelError(f"unknown input label {label!r}") from None

    def output_index(self, label):
        try:
            return self.output_labels.index(label)
        except ValueError:
            raise UnknownLabelError(f"unknown output label {label!r}") from None

    def relabeled(self, inputs=None, outputs=None):
        """Return a copy with renamed channels (list or {old: new} map)."""
        def apply(labels, spec):
            if spec is None:
                return labels
            if isinstance(spec, dict):
                return tuple(spec.get(l, l) for l in labels)
            if len(spec) != len(labels):
                raise DimensionMismatchError("relabel list length mismatch")
            return tuple(spec)

        return StateSpaceModel(self.A, self.B, self.C, self.D,
                               apply(self.input_labels, inputs),
                               apply(self.output_labels, outputs))

    def pick(self, inputs=None, outputs=None):
        """Sub-model restricted to the given channels, in the given order."""
        in_idx = [self.input_index(l) for l in inputs] if inputs is not None else list(range(self.n_inputs))
        out_idx = [self.output_index(l) for l in outputs] if outputs is not None else list(range(self.n_outputs))
        return StateSpaceModel(
            self.A, self.B[:, in_idx], self.C[out_idx, :], self.D[np.ix_(out_idx, in_idx)],
            tuple(self.input_labels[i] for i in in_idx),
            tuple(self.output_labels[i] for i in out_idx))

    def eigenvalues(self):
        if self.n_states == 0:
            return np.zeros(0, dtype=complex)
        return np.linalg.eigvals(self.A)

    def is_stable(self, margin=0.0):
        if self.n_states == 0:
            return True
        return bool(np.max(self.eigenvalues().real) < -margin)

    def spectral_abscissa(self):
        if self.n_states == 0:
            return -np.inf
        return float(np.max(self.eigenvalues().real))


def gain(matrix, input_labels, output_labels):
    """Static (state-free) model y = matrix * u."""
    mat = _as_matrix(matrix)
    p, m = mat.shape
    return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), mat,
                           tuple(input_labels), tuple(output_labels))


def integrator(input_label, output_label):
    """SISO 1/s."""
    return StateSpaceModel([[0.0]], [[1.0]], [[1.0]], [[0.0]], (input_label,), (output_label,))


def integrator_bank(input_labels, output_labels):
    """Decoupled 1/s on each channel."""
    k = len(input_labels)
    return StateSpaceModel(np.zeros((k, k)), np.eye(k), np.eye(k), np.zeros((k, k)),
                           tuple(input_labels), tuple(output_labels))


def _rcond(mat):
    if mat.size == 0:
        return 1.0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0.0:
        return 0.0
    return s[-1] / s[0]


def connect(models, wiring, external_in, external_out):
    """Feedback interconnection of labeled models.

    `wiring` is a list of (source output label -> sink input label) pairs; each
    sink input may be driven by exactly one source and each wired source/sink
    appears once (the wiring is a bijection on the connected channel subsets).
    `external_in` selects the unwired inputs to expose, `external_out` any
    outputs (wired outputs may still be observed).  Labels must be globally
    unique across the member models.  The state dimension of the result is the
    sum of the member state dimensions.
    """
    models = list(models)
    all_in = [l for mdl in models for l in mdl.input_labels]
    all_out = [l for mdl in models for l in mdl.output_labels]
    if len(set(all_in)) != len(all_in):
        raise DuplicateLabelError("duplicate input labels across connected models")
    if len(set(all_out)) != len(all_out):
        raise DuplicateLabelError("duplicate output labels across connected models")
    in_pos = {l: i for i, l in enumerate(all_in)}
    out_pos = {l: i for i, l in enumerate(all_out)}

    m_tot, p_tot = len(all_in), len(all_out)
    n_tot = sum(mdl.n_states for mdl in models)
    A = np.zeros((n_tot, n_tot))
    B = np.zeros((n_tot, m_tot))
    C = np.zeros((p_tot, n_tot))
    D = np.zeros((p_tot, m_tot))
    i0 = j0 = k0 = 0
    for mdl in models:
        n, m, p = mdl.n_states, mdl.n_inputs, mdl.n_outputs
        A[i0:i0 + n, i0:i0 + n] = mdl.A
        B[i0:i0 + n, j0:j0 + m] = mdl.B
        C[k0:k0 + p, i0:i0 + n] = mdl.C
        D[k0:k0 + p, j0:j0 + m] = mdl.D
        i0 += n
        j0 += m
        k0 += p

    W = np.zeros((m_tot, p_tot))
    wired_sinks = set()
    wired_sources = set()
    for src, dst in wiring:
        if src not in out_pos:
            raise UnknownLabelError(f"wiring source {src!r} is not an output of any model")
        if dst not in in_pos:
            raise UnknownLabelError(f"wiring sink {dst!r} is not an input of any model")
        if dst in wired_sinks:
            raise DuplicateLabelError(f"input {dst!r} wired twice")
        if src in wired_sources:
            raise DuplicateLabelError(f"output {src!r} wired twice")
        wired_sinks.add(dst)
        wired_sources.add(src)
        W[in_pos[dst], out_pos[src]] = 1.0

    ext_in = list(external_in)
    for l in ext_in:
        if l not in in_pos:
            raise UnknownLabelError(f"external input {l!r} is not an input of any model")
        if l in wired_sinks:
            raise DuplicateLabelError(f"external input {l!r} is already wired")
    if len(set(ext_in)) != len(ext_in):
        raise DuplicateLabelError("duplicate external input labels")
    ext_out = list(external_out)
    for l in ext_out:
        if l not in out_pos:
            raise UnknownLabelError(f"external output {l!r} is not an output of any model")
    if len(set(ext_out)) != len(ext_out):
        raise DuplicateLabelError("duplicate external output labels")

    E = np.zeros((m_tot, len(ext_in)))
    for j, l in enumerate(ext_in):
        E[in_pos[l], j] = 1.0

    # Y = C x + D (E u + W Y)  =>  (I - D W) Y = C x + D E u
    L = np.eye(p_tot) - D @ W
    if _rcond(L) < LOOP_TOL:
        raise AlgebraicLoopError("interconnection has a singular feedthrough loop (I - D_loop)")
    Linv_C = np.linalg.solve(L, C)
    Linv_DE = np.linalg.solve(L, D @ E)

    BW = B @ W
    A_cl = A + BW @ Linv_C
    B_cl = B @ E + BW @ Linv_DE
    S = np.zeros((len(ext_out), p_tot))
    for i, l in enumerate(ext_out):
        S[i, out_pos[l]] = 1.0
    C_cl = S @ Linv_C
    D_cl = S @ Linv_DE
    return StateSpaceModel(A_cl, B_cl, C_cl, D_cl, tuple(ext_in), tuple(ext_out))


def freq_response(model, omegas):
    """G(jw) = C (jwI - A)^-1 B + D on a strictly positive, sorted grid.

    Returns an array of shape (len(omegas), p, m).
    """
    w = np.asarray(omegas, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("omegas must be a non-empty 1-D grid")
    if np.any(w <= 0.0):
        raise ValueError("omegas must be strictly positive")
    if np.any(np.diff(w) <= 0.0):
        raise ValueError("omegas must be strictly increasing")
    n = model.n_states
    out = np.empty((w.size, model.n_outputs, model.n_inputs), dtype=complex)
    if n == 0:
        out[:] = model.D
        return out
    lam = model.eigenvalues()
    scale = max(1.0, float(np.max(np.abs(lam))))
    for k, wk in enumerate(w):
        if np.min(np.abs(1j * wk - lam)) < 1e-9 * scale:
            raise SingularResolventError(f"jw for w={wk} is an eigenvalue of A")
        X = np.linalg.solve(1j * wk * np.eye(n) - model.A, model.B)
        out[k] = model.C @ X + model.D
    return out


def dc_gain(model):
    """-C A^-1 B + D (A must be invertible)."""
    if model.n_states == 0:
        return model.D.copy()
    if _rcond(model.A) < 1e-14:
        raise SingularResolventError("A is singular; DC gain undefined")
    return model.D - model.C @ np.linalg.solve(model.A, model.B)


class _Responder:
    """Fast repeated frequency-response evaluation for one model.

    Uses a modal decomposition when A is well conditioned for it, otherwise
    falls back to per-frequency resolvent solves.
    """

    def __init__(self, model):
        self.model = model
        self.n = model.n_states
        self._modal = None
        if self.n > 0:
            lam, V = np.linalg.eig(model.A)
            if np.linalg.cond(V) < 1e9:
                CV = model.C @ V
                VB = np.linalg.solve(V, model.B.astype(complex))
                self._modal = (lam, CV, VB)

    def __call__(self, omegas):
        w = np.asarray(omegas, dtype=float)
        mdl = self.model
        if self.n == 0:
            return np.broadcast_to(mdl.D, (w.size, *mdl.D.shape)).astype(complex)
        if self._modal is not None:
            lam, CV, VB = self._modal
            denom = 1j * w[:, None] - lam[None, :]
            # (nw, p, m) = CV (p, n) @ (VB / denom) (nw, n, m)
            scaled = VB[None, :, :] / denom[:, :, None]
            return np.einsum("pn,wnm->wpm", CV, scaled) + mdl.D
        out = np.empty((w.size, mdl.n_outputs, mdl.n_inputs), dtype=complex)
        eye = np.eye(self.n)
        for k, wk in enumerate(w):
            X = np.linalg.solve(1j * wk * eye - mdl.A, mdl.B)
            out[k] = mdl.C @ X + mdl.D
        return out


def _sigma_max(mats):
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def hinf_norm(model, tol=1e-8, band=(1e-4, 1e3), points_per_decade=200):
    """Peak gain over frequency of a stable model, with its argmax frequency.

    Coarse log grid over `band` plus golden-section refinement around every
    candidate peak; `tol` is the relative tolerance on the returned gain.
    """
    if not model.is_stable():
        raise UnstableModelError("H-infinity norm requires a strictly stable model")
    d_inf = float(_sigma_max(model.D)) if model.D.size else 0.0
    if model.n_states == 0:
        return d_inf, 0.0
    g0 = float(_sigma_max(dc_gain(model)))
    resp = _Responder(model)

    lo, hi = band
    n_pts = max(2, int(np.ceil(np.log10(hi / lo) * points_per_decade)))
    w = np.logspace(np.log10(lo), np.log10(hi), n_pts)
    sv = _sigma_max(resp(w))

    best_gamma = max(g0, d_inf)
    best_omega = 0.0 if g0 >= d_inf else float(hi)
    if np.max(sv) > best_gamma:
        best_gamma = float(np.max(sv))
        best_omega = float(w[int(np.argmax(sv))])

    # local maxima (plus grid boundary candidates)
    cand = [i for i in range(1, n_pts - 1) if sv[i] >= sv[i - 1] and sv[i] >= sv[i + 1]]
    cand.extend([0, n_pts - 1])
    cand.sort(key=lambda i: -sv[i])
    for i in cand[:10]:
        a = np.log10(w[max(i - 1, 0)])
        b = np.log10(w[min(i + 1, n_pts - 1)])
        if b - a <= 0:
            continue
        # golden-section maximization of sigma_max on log-frequency
        x1 = b - _GOLDEN * (b - a)
        x2 = a + _GOLDEN * (b - a)
        f1 = float(_sigma_max(resp(np.array([10.0 ** x1]))[0]))
        f2 = float(_sigma_max(resp(np.array([10.0 ** x2]))[0]))
        for _ in range(200):
            if f1 < f2:
                a, x1, f1 = x1, x2, f2
                x2 = a + _GOLDEN * (b - a)
                f2 = float(_sigma_max(resp(np.array([10.0 ** x2]))[0]))
            else:
                b, x2, f2 = x2, x1, f1
                x1 = b - _GOLDEN * (b - a)
                f1 = float(_sigma_max(resp(np.array([10.0 ** x1]))[0]))
            if (b - a) < max(1e-14, tol * 1e-3):
                break
        fm, xm = (f1, x1) if f1 >= f2 else (f2, x2)
        if fm > best_gamma:
            best_gamma = fm
            best_omega = 10.0 ** xm
    return float(best_gamma), float(best_omega)


def port_invert(model, port_inputs, port_outputs):
    """Swap causality on a paired (input, output) channel set.

    The direct feedthrough sub-block on the selected port must be invertible.
    The new port inputs take the old output labels and vice versa; applying the
    same inversion twice restores the original model.
    """
    pin = [model.input_index(l) for l in port_inputs]
    pout = [model.output_index(l) for l in port_outputs]
    if len(pin) != len(pout):
        raise DimensionMismatchError("port input/output widths differ")
    rin = [i for i in range(model.n_inputs) if i not in set(pin)]
    rout = [i for i in range(model.n_outputs) if i not in set(pout)]

    A, B, C, D = model.A, model.B, model.C, model.D
    Bp, Br = B[:, pin], B[:, rin]
    Cp, Cr = C[pout, :], C[rout, :]
    Dpp = D[np.ix_(pout, pin)]
    Dpr = D[np.ix_(pout, rin)]
    Drp = D[np.ix_(rout, pin)]
    Drr = D[np.ix_(rout, rin)]
    if _rcond(Dpp) < 1e-12:
        raise SingularFeedthroughError("port feedthrough block is singular; cannot invert")
    Di = np.linalg.inv(Dpp)

    A_new = A - Bp @ Di @ Cp
    B_new = np.zeros((model.n_states, model.n_inputs))
    C_new = np.zeros((model.n_outputs, model.n_states))
    D_new = np.zeros((model.n_outputs, model.n_inputs))
    # column/row layout keeps every channel at its original position
    B_new[:, pin] = Bp @ Di
    B_new[:, rin] = Br - Bp @ Di @ Dpr
    C_new[pout, :] = -Di @ Cp
    C_new[rout, :] = Cr - Drp @ Di @ Cp
    D_new[np.ix_(pout, pin)] = Di
    D_new[np.ix_(pout, rin)] = -Di @ Dpr
    D_new[np.ix_(rout, pin)] = Drp @ Di
    D_new[np.ix_(rout, rin)] = Drr - Drp @ Di @ Dpr

    in_labels = list(model.input_labels)
    out_labels = list(model.output_labels)
    for i, o in zip(pin, pout):
        in_labels[i], out_labels[o] = model.output_labels[o], model.input_labels[i]
    return StateSpaceModel(A_new, B_new, C_new, D_new, tuple(in_labels), tuple(out_labels))
