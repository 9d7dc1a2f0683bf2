"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    magic    8 bytes   b"LCKPT\\x00\\x00\\x01"
    version  u32       format version (currently 1)
    hlen     u32       byte length of the JSON header
    header   hlen      UTF-8 JSON, keys sorted, no whitespace
    payload            every tensor's values as little-endian float64,
                       row-major, in header order

The header holds ``config`` (LSTNetConfig fields), ``normalization``
(NormStats fields), ``meta`` (free-form, e.g. industry and seed) and
``tensors``: a list of ``{"name", "shape", "offset", "count"}`` where
``offset`` and ``count`` are in float64 elements from the payload start.
Floats in the header use Python's shortest round-trip repr, so a
save/load cycle is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_pipeline.windows import NormStats
from .errors import CheckpointError
from .lstnet import LSTNetConfig, LSTNetParams

MAGIC = b"LCKPT\x00\x00\x01"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: LSTNetConfig
    params: LSTNetParams
    stats: NormStats
    meta: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    ckpt.params.audit(ckpt.config)
    entries, blobs, offset = [], [], 0
    for name, t in ckpt.params:
        count = t.size
        entries.append({"name": name, "shape": list(t.shape), "offset": offset, "count": count})
        blobs.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        offset += count
    header = {
        "format": "laborcast-checkpoint",
        "version": FORMAT_VERSION,
        "config": ckpt.config.to_dict(),
        "normalization": ckpt.stats.to_dict(),
        "meta": ckpt.meta,
        "tensors": entries,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<II", FORMAT_VERSION, len(hbytes)) + hbytes + b"".join(blobs)


def from_bytes(raw: bytes) -> Checkpoint:
    if raw[:8] != MAGIC:
        raise CheckpointError("not a laborcast checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<II", raw, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = 16 + hlen
    try:
        header = json.loads(raw[16:start].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError("corrupt checkpoint header") from exc
    payload = np.frombuffer(raw, dtype="<f8", offset=start)
    arrays = {}
    for e in header["tensors"]:
        chunk = payload[e["offset"]:e["offset"] + e["count"]]
        if chunk.size != e["count"]:
            raise CheckpointError(f"truncated payload for {e['name']}")
        arrays[e["name"]] = chunk.astype(np.float64).reshape(e["shape"])
    config = LSTNetConfig.from_dict(header["config"])
    params = LSTNetParams.from_arrays(arrays)
    params.audit(config)
    return Checkpoint(config, params, NormStats.from_dict(header["normalization"]), header["meta"])


def save(path: str | os.PathLike, ckpt: Checkpoint) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_bytes(ckpt))
    return path


def load(path: str | os.PathLike) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())


def file_digest(path: str | os.PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
