"""Linear fractional representations on top of labeled state-space models.

An `LfrModel` is a nominal core with its uncertainty channels pulled out into
a structured block list: the first `w` inputs / `z` outputs of interest close
through a block-diagonal perturbation (w = Delta z).  Blocks of equal name
share one scalar (repeated occurrences across the structure are allowed and
add up in the occurrence audit).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlgebraicLoopError,
    DimensionMismatchError,
    MissingBlockError,
    OutOfRangeError,
    UnknownBlockError,
)
from .statespace import StateSpaceModel, _rcond

REAL_SCALAR = "real-scalar-repeated"
COMPLEX_FULL = "complex-full"


@dataclass(frozen=True)
class UncertaintyBlock:
    """One entry of a block-diagonal uncertainty structure.

    Real scalar blocks are delta * I_repetitions with delta confined to
    `range` (normalized parametric blocks use [-1, 1], configuration gates
    use their raw admissible interval).  Complex full blocks are unit-norm
    bounded matrices of the given shape.
    """

    name: str
    kind: str = REAL_SCALAR
    repetitions: int = 1
    shape: tuple = None
    range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        if self.kind not in (REAL_SCALAR, COMPLEX_FULL):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.kind == REAL_SCALAR:
            if self.repetitions < 1:
                raise ValueError("repetitions must be >= 1")
            object.__setattr__(self, "shape", (self.repetitions, self.repetitions))
        else:
            if self.shape is None or len(self.shape) != 2:
                raise ValueError("complex-full block needs a (rows, cols) shape")
            object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        lo, hi = self.range
        if not lo < hi:
            raise ValueError("empty range")
        object.__setattr__(self, "range", (float(lo), float(hi)))

    @property
    def rows(self):
        return self.shape[0]

    @property
    def cols(self):
        return self.shape[1]


def _group_tuple(groups):
    return {k: tuple(v) for k, v in groups.items()}


@dataclass(frozen=True)
class LfrModel:
    """State-space core plus structured uncertainty channels and named groups.

    channel_groups must contain "w" (inputs fed by the perturbation) and "z"
    (outputs feeding it), aligned with `structure` order; further groups
    (disturbance, performance, control, measurement, physical ports) are free.
    """

    core: StateSpaceModel
    structure: tuple
    channel_groups: dict

    def __post_init__(self):
        structure = tuple(self.structure)
        groups = _group_tuple(self.channel_groups)
        w = groups.get("w", ())
        z = groups.get("z", ())
        if sum(b.rows for b in structure) != len(w):
            raise DimensionMismatchError("w group width does not match structure")
        if sum(b.cols for b in structure) != len(z):
            raise DimensionMismatchError("z group width does not match structure")
        for l in w:
            self.core.input_index(l)
        for l in z:
            self.core.output_index(l)
        ranges = {}
        for b in structure:
            if b.kind == REAL_SCALAR and b.name in ranges and ranges[b.name] != b.range:
                raise DimensionMismatchError(f"block {b.name!r} repeated with inconsistent range")
            ranges[b.name] = b.range
        object.__setattr__(self, "structure", structure)
        object.__setattr__(self, "channel_groups", groups)

    # -- structure bookkeeping ------------------------------------------------

    def entry_slices(self):
        """Per-entry (block, w labels, z labels) in structure order."""
        w = self.channel_groups["w"]
        z = self.channel_groups["z"]
        out = []
        ro = co = 0
        for b in self.structure:
            out.append((b, w[ro:ro + b.rows], z[co:co + b.cols]))
            ro += b.rows
            co += b.cols
        return out

    def block_names(self):
        seen = []
        for b in self.structure:
            if b.name not in seen:
                seen.append(b.name)
        return seen

    def occurrences(self):
        """Total scalar occurrence count per real block name."""
        out = {}
        for b in self.structure:
            if b.kind == REAL_SCALAR:
                out[b.name] = out.get(b.name, 0) + b.repetitions
        return out

    def group(self, name):
        return self.channel_groups.get(name, ())

    def with_groups(self, **updates):
        groups = dict(self.channel_groups)
        groups.update({k: tuple(v) for k, v in updates.items()})
        return LfrModel(self.core, self.structure, groups)

    # -- closures -------------------------------------------------------------

    def nominal(self):
        """Core with every uncertainty channel closed at zero."""
        return lft_upper(self, {name: 0.0 for name in self.block_names()}, _clip_zero=True)


def _delta_value(block, value):
    if block.kind == REAL_SCALAR:
        v = float(value)
        lo, hi = block.range
        if not (lo - 1e-12 <= v <= hi + 1e-12):
            raise OutOfRangeError(f"{block.name}: value {v} outside [{lo}, {hi}]")
        return v * np.eye(block.repetitions)
    mat = np.asarray(value, dtype=float)
    if np.isscalar(value) or mat.ndim == 0:
        mat = float(value) * np.eye(block.rows, block.cols)
    if mat.shape != block.shape:
        raise DimensionMismatchError(f"{block.name}: sample shape {mat.shape} != {block.shape}")
    smax = np.linalg.svd(mat, compute_uv=False)[0] if mat.size else 0.0
    if smax > 1.0 + 1e-9:
        raise OutOfRangeError(f"{block.name}: sample norm {smax} exceeds the unit ball")
    return mat


def close_blocks(model, values, _clip_zero=False):
    """Close a subset of uncertainty blocks (all entries of each given name).

    Returns an LfrModel whose structure keeps the untouched entries in order.
    """
    names = set(values)
    known = set(model.block_names())
    unknown = names - known
    if unknown:
        raise UnknownBlockError(f"unknown block(s): {sorted(unknown)}")

    closing_w, closing_z, deltas = [], [], []
    keep_entries = []
    for block, wl, zl in model.entry_slices():
        if block.name in names:
            v = values[block.name]
            if _clip_zero and block.kind == REAL_SCALAR:
                lo, hi = block.range
                v = min(max(float(v), lo), hi)
            closing_w.extend(wl)
            closing_z.extend(zl)
            deltas.append(_delta_value(block, v))
        else:
            keep_entries.append((block, wl, zl))

    core = model.core
    if closing_w:
        delta = np.zeros((len(closing_w), len(closing_z)))
        r0 = c0 = 0
        for d in deltas:
            delta[r0:r0 + d.shape[0], c0:c0 + d.shape[1]] = d
            r0 += d.shape[0]
            c0 += d.shape[1]
        core = _close_channels(core, closing_w, closing_z, delta)

    groups = {k: v for k, v in model.channel_groups.items()}
    groups["w"] = tuple(l for _, wl, _ in keep_entries for l in wl)
    groups["z"] = tuple(l for _, _, zl in keep_entries for l in zl)
    return LfrModel(core, tuple(b for b, _, _ in keep_entries), groups)


def _close_channels(core, w_labels, z_labels, delta):
    """Eliminate the (w, z) channels of `core` through w = delta z."""
    wi = [core.input_index(l) for l in w_labels]
    zi = [core.output_index(l) for l in z_labels]
    ri = [i for i in range(core.n_inputs) if i not in set(wi)]
    ro = [i for i in range(core.n_outputs) if i not in set(zi)]
    A, B, C, D = core.A, core.B, core.C, core.D
    Bw, Br = B[:, wi], B[:, ri]
    Cz, Cr = C[zi, :], C[ro, :]
    Dzw = D[np.ix_(zi, wi)]
    Dzr = D[np.ix_(zi, ri)]
    Drw = D[np.ix_(ro, wi)]
    Drr = D[np.ix_(ro, ri)]
    L = np.eye(len(wi)) - delta @ Dzw
    if _rcond(L) < 1e-12:
        raise AlgebraicLoopError("perturbation closure is not well posed (I - Delta D_zw singular)")
    S = np.linalg.solve(L, delta)
    return StateSpaceModel(
        A + Bw @ S @ Cz,
        Br + Bw @ S @ Dzr,
        Cr + Drw @ S @ Cz,
        Drr + Drw @ S @ Dzr,
        tuple(core.input_labels[i] for i in ri),
        tuple(core.output_labels[i] for i in ro))


def lft_upper(model, delta_sample, _clip_zero=False):
    """F_u(model, Delta): close every block with the given sample values.

    Each block name in the structure must receive a value inside its range;
    the result is a plain StateSpaceModel without uncertainty channels.
    """
    missing = [n for n in model.block_names() if n not in delta_sample]
    if missing:
        raise MissingBlockError(f"missing sample value(s) for {missing}")
    closed = close_blocks(model, {n: delta_sample[n] for n in model.block_names()},
                          _clip_zero=_clip_zero)
    return closed.core


def lft_lower(model, controller):
    """F_l(model, K): close the (measurement -> control) channels with K.

    The uncertainty structure and all remaining channel groups are unchanged.
    """
    y_labels = model.group("measurement")
    u_labels = model.group("control")
    if not y_labels or not u_labels:
        raise DimensionMismatchError("model does not expose measurement/control groups")
    if controller.n_inputs != len(y_labels) or controller.n_outputs != len(u_labels):
        raise DimensionMismatchError(
            f"controller is {controller.n_outputs}x{controller.n_inputs}, "
            f"plant expects {len(u_labels)}x{len(y_labels)}")

    core = model.core
    ui = [core.input_index(l) for l in u_labels]
    yi = [core.output_index(l) for l in y_labels]
    ri = [i for i in range(core.n_inputs) if i not in set(ui)]
    ro = [i for i in range(core.n_outputs) if i not in set(yi)]
    A, B, C, D = core.A, core.B, core.C, core.D
    Bu, Br = B[:, ui], B[:, ri]
    Cy, Cr = C[yi, :], C[ro, :]
    Dyu = D[np.ix_(yi, ui)]
    Dyr = D[np.ix_(yi, ri)]
    Dru = D[np.ix_(ro, ui)]
    Drr = D[np.ix_(ro, ri)]
    Ak, Bk, Ck, Dk = controller.A, controller.B, controller.C, controller.D
    n, nk = core.n_states, controller.n_states

    L = np.eye(len(yi)) - Dyu @ Dk
    if _rcond(L) < 1e-12:
        raise AlgebraicLoopError("controller loop is not well posed (I - D_yu D_k singular)")
    Li = np.linalg.inv(L)
    # y = Li (Cy x + Dyu Ck xk + Dyr d);  u = Ck xk + Dk y
    A_cl = np.zeros((n + nk, n + nk))
    A_cl[:n, :n] = A + Bu @ Dk @ Li @ Cy
    A_cl[:n, n:] = Bu @ (Ck + Dk @ Li @ Dyu @ Ck)
    A_cl[n:, :n] = Bk @ Li @ Cy
    A_cl[n:, n:] = Ak + Bk @ Li @ Dyu @ Ck
    B_cl = np.zeros((n + nk, len(ri)))
    B_cl[:n, :] = Br + Bu @ Dk @ Li @ Dyr
    B_cl[n:, :] = Bk @ Li @ Dyr
    C_cl = np.zeros((len(ro), n + nk))
    C_cl[:, :n] = Cr + Dru @ Dk @ Li @ Cy
    C_cl[:, n:] = Dru @ (Ck + Dk @ Li @ Dyu @ Ck)
    D_cl = Drr + Dru @ Dk @ Li @ Dyr

    closed_core = StateSpaceModel(
        A_cl, B_cl, C_cl, D_cl,
        tuple(core.input_labels[i] for i in ri),
        tuple(core.output_labels[i] for i in ro))
    groups = {k: v for k, v in model.channel_groups.items() if k not in ("measurement", "control")}
    return LfrModel(closed_core, model.structure, groups)


def merge_structures(*lfrs):
    """Concatenated structure entries of several models, in argument order."""
    entries = []
    for m in lfrs:
        entries.extend(m.structure)
    return tuple(entries)
