"""Reader/writer for the ``DFM1`` dense feature matrix format.

Layout (all little-endian)::

    b"DFM1" | u32 n_frames | u32 n_dims | n_frames * n_dims float32, row-major

An optional sidecar ``<path>.json`` carries metadata such as the feature kind
and frame hop.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"DFM1"
_HEADER = struct.Struct("<4sII")


def write_dfm(path, data, meta: dict | None = None) -> None:
    data = np.asarray(data)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2:
        raise DataError(f"DFM1 holds 2-D matrices, got shape {data.shape}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, data.shape[0], data.shape[1]))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())
    if meta is not None:
        sidecar = path.with_name(path.name + ".json")
        sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def read_dfm(path) -> np.ndarray:
    """Read a ``DFM1`` file into a float64 ``(n_frames, n_dims)`` array."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated DFM1 header")
    magic, n_frames, n_dims = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = _HEADER.size + 4 * n_frames * n_dims
    if len(raw) != expected:
        raise DataError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(n_frames, n_dims).astype(np.float64)


def read_meta(path) -> dict:
    sidecar = Path(path).with_name(Path(path).name + ".json")
    if not sidecar.exists():
        return {}
    return json.loads(sidecar.read_text())
