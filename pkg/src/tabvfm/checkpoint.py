"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"TBFW"                magic
    u32                    format version (1)
    u64                    length of the metadata block in bytes
    <metadata>             UTF-8 JSON: schema, layer sizes, heads, training
                           config, quantile maps
    <tensors>              float32 LE, W0, b0, W1, b1, ... in order

Adam moments are not stored; a loaded model is for sampling.
The encoding is canonical (sorted keys, fixed separators), so equal models
give equal bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import TableSchema
from .expfam import family_from_dict
from .net import Head, ModelParams
from .quantile import QuantileMap

MAGIC = b"TBFW"
VERSION = 1
_HEADER = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: ModelParams
    schema: TableSchema
    maps: dict[str, QuantileMap]
    config: dict = field(default_factory=dict)


def _metadata(ckpt: Checkpoint) -> dict:
    p = ckpt.params
    return {
        "schema": ckpt.schema.to_dict(),
        "layer_sizes": p.layer_sizes,
        "time_dim": p.time_dim,
        "encoded_dim": p.encoded_dim,
        "heads": [
            {"name": h.name, "family": h.family.to_dict(), "param_offset": h.param_offset,
             "enc_offset": h.enc_offset, "enc_width": h.enc_width}
            for h in p.heads
        ],
        "config": ckpt.config,
        "quantile_maps": {name: m.to_dict() for name, m in sorted(ckpt.maps.items())},
    }


def to_bytes(ckpt: Checkpoint) -> bytes:
    meta = json.dumps(_metadata(ckpt), sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [_HEADER.pack(MAGIC, VERSION, len(meta)), meta]
    for tensor in ckpt.params.tensors():
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(parts)


def from_bytes(blob: bytes) -> Checkpoint:
    if len(blob) < _HEADER.size:
        raise CheckpointError("file too short for a checkpoint header")
    magic, version, meta_len = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not a checkpoint")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _HEADER.size
    try:
        meta = json.loads(blob[start:start + meta_len].decode("utf-8"))
        sizes = [int(s) for s in meta["layer_sizes"]]
        heads = [
            Head(h["name"], family_from_dict(h["family"]), int(h["param_offset"]),
                 int(h["enc_offset"]), int(h["enc_width"]))
            for h in meta["heads"]
        ]
        schema = TableSchema.from_dict(meta["schema"])
        maps = {k: QuantileMap.from_dict(v) for k, v in meta["quantile_maps"].items()}
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from exc

    offset = start + meta_len
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            end = offset + 4 * count
            if end > len(blob):
                raise CheckpointError("checkpoint truncated inside the parameter tensors")
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
            (weights if len(shape) == 2 else biases).append(arr.astype(np.float32))
            offset = end
    if offset != len(blob):
        raise CheckpointError(f"{len(blob) - offset} trailing bytes after the parameter tensors")
    params = ModelParams(weights, biases, heads, int(meta["encoded_dim"]), int(meta["time_dim"]))
    return Checkpoint(params, schema, maps, meta.get("config", {}))


def save(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(ckpt))


def load(path: str | Path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
