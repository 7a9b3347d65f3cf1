"""Binary checkpoint container.

Layout: 8-byte magic, little-endian u32 format version, u32 header length,
a UTF-8 JSON header (sorted keys), then every tensor as little-endian
float64 in header order. Files are written to a temporary name and renamed.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..diffcore import Parameter
from ..textpipe import Vocab, atomic_write_bytes

MAGIC = b"CAESCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    kind: str
    config: dict
    vocab: Vocab
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    directory, chunks, offset = [], [], 0
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name], dtype="<f8")
        directory.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        chunks.append(arr.tobytes())
        offset += arr.size
    header = json.dumps({"kind": ckpt.kind, "config": ckpt.config, "vocab": ckpt.vocab.to_list(),
                         "tensors": directory, "extra": ckpt.extra}, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file")
    version, hlen = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    payload = np.frombuffer(blob[16 + hlen:], dtype="<f8")
    tensors = {}
    for entry in header["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > payload.size:
            raise CheckpointError("truncated checkpoint payload")
        tensors[entry["name"]] = payload[start:start + count].astype(np.float64).reshape(entry["shape"])
    return Checkpoint(header["kind"], header["config"], Vocab.from_list(header["vocab"]), tensors, header["extra"])


def save_checkpoint(path, ckpt: Checkpoint) -> bytes:
    blob = encode_checkpoint(ckpt)
    atomic_write_bytes(path, blob)
    return blob


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return decode_checkpoint(fh.read())


def parameter_tensors(params: Sequence[Parameter], prefix: str = "") -> dict[str, np.ndarray]:
    out = {}
    for p in params:
        key = prefix + p.name
        if key in out:
            raise CheckpointError(f"duplicate parameter name {key!r}")
        out[key] = p.data.copy()
    return out


def restore_parameters(params: Sequence[Parameter], tensors: Mapping[str, np.ndarray], prefix: str = "") -> None:
    for p in params:
        key = prefix + p.name
        if key not in tensors:
            raise CheckpointError(f"checkpoint lacks {key!r}")
        if tensors[key].shape != p.shape:
            raise CheckpointError(f"{key}: shape {tensors[key].shape} != {p.shape}")
        p.data[...] = tensors[key]
