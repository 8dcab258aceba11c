"""Checkpoint files.

Layout::

    KEYDYN-CKPT 1\\n
    <header byte length>\\n
    <UTF-8 JSON header: config, dtype, parameter index, free-form meta>
    <raw little-endian parameter payload, in index order>
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import KeystrokeNet, ModelConfig

MAGIC = b"KEYDYN-CKPT"
VERSION = 1


def dumps(model: KeystrokeNet, meta: dict | None = None) -> bytes:
    index, chunks, offset = [], [], 0
    for name, p in model.parameters().items():
        raw = np.ascontiguousarray(p, dtype=p.dtype.newbyteorder("<")).tobytes()
        index.append({"name": name, "shape": list(p.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"config": model.config.to_dict(), "dtype": model.dtype.str.lstrip("<>|="),
                         "params": index, "meta": meta or {}}, sort_keys=True).encode()
    return b"".join([MAGIC, b" %d\n%d\n" % (VERSION, len(header)), header] + chunks)


def loads(blob: bytes) -> tuple[KeystrokeNet, dict]:
    first, rest = blob.split(b"\n", 1)
    magic, version = first.split()
    if magic != MAGIC or int(version) != VERSION:
        raise ValueError("not a keydyn checkpoint (or unsupported version)")
    size, rest = rest.split(b"\n", 1)
    header = json.loads(rest[:int(size)])
    payload = rest[int(size):]
    dtype = np.dtype("<" + header["dtype"])
    model = KeystrokeNet(ModelConfig(**header["config"]), dtype=dtype.newbyteorder("="))
    values = {}
    for entry in header["params"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        values[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"])
    if set(values) != set(model.parameters()):
        raise ValueError("checkpoint parameters do not match its topology")
    model.load_parameters(values)
    return model, header["meta"]


def save(model: KeystrokeNet, path: str | Path, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, meta))


def load(path: str | Path) -> tuple[KeystrokeNet, dict]:
    return loads(Path(path).read_bytes())
