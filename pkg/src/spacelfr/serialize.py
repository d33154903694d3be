"""Model and result serialization: self-describing JSON documents and CSV.

Model files embed the state-space matrices row-major together with channel
labels, channel groups and the uncertainty structure, so a written model can
be reloaded, diffed and audited without the producing configuration.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import ParseError
from .lfr import COMPLEX_FULL, REAL_SCALAR, LfrModel, UncertaintyBlock
from .statespace import StateSpaceModel


def _mat(a):
    return [[float(x) for x in row] for row in np.atleast_2d(a)]


def save_lfr(model, path):
    core = model.core
    doc = {
        "kind": "lfr-model",
        "n_states": core.n_states,
        "A": _mat(core.A),
        "B": _mat(core.B),
        "C": _mat(core.C),
        "D": _mat(core.D),
        "input_labels": list(core.input_labels),
        "output_labels": list(core.output_labels),
        "structure": [
            {
                "name": b.name,
                "kind": b.kind,
                "repetitions": b.repetitions if b.kind == REAL_SCALAR else None,
                "shape": list(b.shape),
                "range": list(b.range),
            }
            for b in model.structure
        ],
        "channel_groups": {k: list(v) for k, v in model.channel_groups.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_lfr(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"cannot parse model file: {e}") from None
    if doc.get("kind") != "lfr-model":
        raise ParseError("not an LFR model document")
    core = StateSpaceModel(
        np.asarray(doc["A"], dtype=float).reshape(doc["n_states"], doc["n_states"]),
        doc["B"], doc["C"], doc["D"],
        tuple(doc["input_labels"]), tuple(doc["output_labels"]))
    structure = []
    for b in doc["structure"]:
        if b["kind"] == REAL_SCALAR:
            structure.append(UncertaintyBlock(b["name"], REAL_SCALAR,
                                              repetitions=int(b["repetitions"]),
                                              range=tuple(b["range"])))
        else:
            structure.append(UncertaintyBlock(b["name"], COMPLEX_FULL,
                                              shape=tuple(b["shape"]),
                                              range=tuple(b["range"])))
    return LfrModel(core, tuple(structure), doc["channel_groups"])


def structure_audit(model):
    """Human-readable listing of the uncertainty structure and channels."""
    lines = ["uncertainty structure (diagonal order):"]
    for i, (b, wl, zl) in enumerate(model.entry_slices()):
        if b.kind == REAL_SCALAR:
            lines.append(f"  [{i:2d}] {b.name}: real scalar x {b.repetitions}, "
                         f"range [{b.range[0]:g}, {b.range[1]:g}]")
        else:
            lines.append(f"  [{i:2d}] {b.name}: complex full {b.shape[0]}x{b.shape[1]}")
    occ = model.occurrences()
    if occ:
        lines.append("total scalar occurrences:")
        for name, n in occ.items():
            lines.append(f"  {name}: {n}")
    lines.append("channel groups:")
    for gname, labels in model.channel_groups.items():
        lines.append(f"  {gname} ({len(labels)}): {', '.join(labels[:6])}"
                     + (" ..." if len(labels) > 6 else ""))
    lines.append(f"states: {model.core.n_states}, inputs: {model.core.n_inputs}, "
                 f"outputs: {model.core.n_outputs}")
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, str):
        return v
    return format(float(v), ".12g")


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[_parse(v) for v in row] for row in reader]
    return header, rows


def _parse(v):
    try:
        return float(v)
    except ValueError:
        return v
