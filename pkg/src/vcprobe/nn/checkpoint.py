"""Probe checkpoints.

File layout::

    u32 LE header_len | header_len bytes UTF-8 JSON | float32 LE blob

The JSON header holds ``format``, ``config`` (a ``ProbeConfig`` as a dict),
``step`` and ``tensors``: a list of ``{name, shape, offset}`` entries where
``offset`` counts float32 elements from the start of the blob. Tensors are
stored row-major in the order listed: trainable parameters, then batch-norm
running statistics.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import DataError
from .probe import ProbeConfig, ProbeModel

FORMAT = "vcprobe-probe-v1"


def save_checkpoint(model: ProbeModel, path, step: int = 0) -> None:
    tensors = {**model.params(), **{f"buffer:{k}": v for k, v in model.buffers().items()}}
    entries = []
    offset = 0
    for name, arr in tensors.items():
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
    header = json.dumps(
        {"format": FORMAT, "config": model.config.to_json(), "step": int(step), "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in tensors.values())
    Path(path).write_bytes(struct.pack("<I", len(header)) + header + blob)


def load_checkpoint(path) -> tuple[ProbeModel, int]:
    raw = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<I", raw)
    header = json.loads(raw[4 : 4 + hlen].decode("utf-8"))
    if header.get("format") != FORMAT:
        raise DataError(f"{path}: not a {FORMAT} checkpoint")
    blob = np.frombuffer(raw, dtype="<f4", offset=4 + hlen)
    model = ProbeModel.build(ProbeConfig(**header["config"]))
    params = model.params()
    buffers = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        values = blob[entry["offset"] : entry["offset"] + n].astype(np.float64).reshape(entry["shape"])
        name = entry["name"]
        if name.startswith("buffer:"):
            buffers[name[len("buffer:") :]] = values
        elif name in params:
            params[name][...] = values
        else:
            raise DataError(f"{path}: unknown tensor {name!r}")
    model.set_buffers(buffers)
    return model, int(header["step"])
