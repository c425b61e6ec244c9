"""Attention-trace bundles: a directory of binary matrices plus an index.

Each entry is keyed by (stream, layer, step, branch, element); layer is None
for entries that are not tied to a layer (e.g. inversion trajectory dumps).
Matrix files are little-endian: u32 rows, u32 cols, then row-major float64.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .numerics import Array

INDEX_NAME = "index.json"

TraceKey = tuple[str, int | None, int, str, str]


def _write_matrix(path: str, matrix: Array) -> None:
    m = np.ascontiguousarray(np.asarray(matrix, dtype="<f8"))
    if m.ndim != 2:
        raise ValueError(f"trace matrices must be 2-D, got {m.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", m.shape[0], m.shape[1]))
        fh.write(m.tobytes())


def _read_matrix(path: str) -> Array:
    with open(path, "rb") as fh:
        rows, cols = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
    return data.reshape(rows, cols).astype(np.float64)


def write_trace_bundle(directory: str, entries: dict[TraceKey, Array]) -> None:
    """Write matrices keyed by (stream, layer, step, branch, element)."""
    os.makedirs(directory, exist_ok=True)
    index = []
    for i, (key, matrix) in enumerate(sorted(entries.items(),
                                             key=lambda kv: _sort_key(kv[0]))):
        stream, layer, step, branch, element = key
        name = f"{i:06d}.bin"
        _write_matrix(os.path.join(directory, name), matrix)
        index.append({
            "stream": stream, "layer": layer, "step": int(step),
            "branch": branch, "element": element, "file": name,
            "rows": int(np.asarray(matrix).shape[0]),
            "cols": int(np.asarray(matrix).shape[1]),
        })
    with open(os.path.join(directory, INDEX_NAME), "w", encoding="utf-8") as fh:
        json.dump({"entries": index}, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _sort_key(key: TraceKey):
    stream, layer, step, branch, element = key
    return (stream, -1 if layer is None else layer, step, branch, element)


def read_trace_bundle(directory: str) -> dict[TraceKey, Array]:
    with open(os.path.join(directory, INDEX_NAME), "r", encoding="utf-8") as fh:
        index = json.load(fh)
    out: dict[TraceKey, Array] = {}
    for row in index["entries"]:
        key = (row["stream"], row["layer"], row["step"], row["branch"], row["element"])
        out[key] = _read_matrix(os.path.join(directory, row["file"]))
    return out
