"""Binary field serialization.

A field is stored as two files: a raw payload of little-endian float64 values
in row-major node order (components, if any, vary fastest) and a one-line JSON
sidecar ``<payload>.meta.json`` describing the grid::

    {"components_per_node": 1, "dim": 2, "extent": [1.0, 1.0],
     "flagged_nodes": [], "format_version": 1, "kind": "torus",
     "resolution": [64, 64]}

Round trips are bit exact.  Truncated payloads and unknown format versions
raise :class:`FormatError`.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import (
    Domain,
    GradientField,
    GridError,
    MetricField,
    ScalarField,
    metric_pairs,
)

__all__ = ["FormatError", "FORMAT_VERSION", "field_io_write", "field_io_read"]

FORMAT_VERSION = 1

Field = ScalarField | MetricField | GradientField


class FormatError(GridError):
    """Corrupt, truncated, or version-incompatible field file."""


def _components_per_node(field: Field) -> int:
    if isinstance(field, ScalarField):
        return 1
    if isinstance(field, GradientField):
        return field.domain.dim
    return len(metric_pairs(field.domain.dim))


def _payload(field: Field) -> np.ndarray:
    if isinstance(field, ScalarField):
        return field.values
    if isinstance(field, GradientField):
        return field.vectors
    return field.comps


def meta_path(path: str | Path) -> Path:
    return Path(str(path) + ".meta.json")


def field_io_write(field: Field, path: str | Path) -> Path:
    """Write ``field`` to ``path`` plus its ``.meta.json`` sidecar."""
    path = Path(path)
    dom = field.domain
    data = np.ascontiguousarray(_payload(field), dtype="<f8")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data.tobytes(order="C"))
    meta = {
        "format_version": FORMAT_VERSION,
        "kind": dom.kind,
        "dim": dom.dim,
        "extent": list(dom.extent),
        "resolution": list(dom.resolution),
        "components_per_node": _components_per_node(field),
        "flagged_nodes": [int(i) for i in np.flatnonzero(field.flagged.ravel())],
    }
    meta_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n")
    return path


def field_io_read(path: str | Path) -> Field:
    """Read a field written by :func:`field_io_write`.

    The field type is recovered from ``components_per_node``: one component is
    a scalar field, ``dim`` components a gradient field, and ``n(n+1)/2`` a
    metric field.
    """
    path = Path(path)
    mpath = meta_path(path)
    if not path.exists():
        raise FormatError(f"payload file {path} does not exist")
    if not mpath.exists():
        raise FormatError(f"sidecar {mpath} does not exist")
    try:
        meta = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"sidecar {mpath} is not valid JSON: {exc}") from exc
    version = meta.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"format version mismatch: file has {version!r}, "
            f"reader supports {FORMAT_VERSION}"
        )
    required = {"kind", "dim", "extent", "resolution", "components_per_node", "flagged_nodes"}
    missing = required - set(meta)
    if missing:
        raise FormatError(f"sidecar {mpath} is missing keys {sorted(missing)}")
    dom = Domain(
        kind=meta["kind"],
        dim=int(meta["dim"]),
        extent=tuple(float(e) for e in meta["extent"]),
        resolution=tuple(int(r) for r in meta["resolution"]),
    )
    comps = int(meta["components_per_node"])
    expected = dom.n_nodes * comps * 8
    raw = path.read_bytes()
    if len(raw) != expected:
        raise FormatError(
            f"payload {path} has {len(raw)} bytes, expected {expected} "
            f"({dom.n_nodes} nodes x {comps} components x 8)"
        )
    data = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    flagged = np.zeros(dom.shape, dtype=bool)
    flat_flags = [int(i) for i in meta["flagged_nodes"]]
    if flat_flags:
        if min(flat_flags) < 0 or max(flat_flags) >= dom.n_nodes:
            raise FormatError(f"flagged node index out of range in {mpath}")
        flagged.ravel()[flat_flags] = True
    if comps == 1:
        return ScalarField(dom, data.reshape(dom.shape), flagged)
    if comps == dom.dim:
        return GradientField(dom, data.reshape(dom.shape + (comps,)), flagged)
    if comps == len(metric_pairs(dom.dim)):
        return MetricField(dom, data.reshape(dom.shape + (comps,)), flagged)
    raise FormatError(
        f"components_per_node={comps} does not match any field type in dim {dom.dim}"
    )
