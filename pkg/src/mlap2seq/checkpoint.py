"""Versioned checkpoint container.

Layout (all integers little-endian)::

    8 bytes   magic b"MLAPCKPT"
    uint32    format version
    uint64    header length H
    H bytes   UTF-8 JSON header: configuration, schedule state, epoch,
              generator state and a tensor index (name, dtype, shape, offset)
    ...       raw little-endian tensor bytes, concatenated in index order
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"MLAPCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    tensors: dict  # name -> ndarray
    model_config: dict
    train_config: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    epoch: int = 0
    rng_state: dict | None = None
    extra: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION

    def model_state(self):
        prefix = "model."
        return {k[len(prefix) :]: v for k, v in self.tensors.items() if k.startswith(prefix)}


def save_checkpoint(ckpt, path):
    """Write ``ckpt`` atomically (temp file + rename)."""
    path = Path(path)
    index = []
    offset = 0
    blobs = []
    for name in sorted(ckpt.tensors):
        arr = np.asarray(ckpt.tensors[name])
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        index.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "model_config": ckpt.model_config,
        "train_config": ckpt.train_config,
        "schedule": ckpt.schedule,
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "extra": ckpt.extra,
        "tensors": index,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for raw in blobs:
            fh.write(raw)
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", data, len(MAGIC))
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")
    start = len(MAGIC) + struct.calcsize("<IQ")
    header = json.loads(data[start : start + hlen].decode("utf-8"))
    body = memoryview(data)[start + hlen :]
    tensors = {}
    for entry in header["tensors"]:
        lo, n = entry["offset"], entry["nbytes"]
        if lo + n > len(body):
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(body[lo : lo + n], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(arr.dtype.newbyteorder("="))
    return Checkpoint(
        tensors=tensors,
        model_config=header["model_config"],
        train_config=header.get("train_config", {}),
        schedule=header.get("schedule", {}),
        epoch=header.get("epoch", 0),
        rng_state=header.get("rng_state"),
        extra=header.get("extra", {}),
        version=version,
    )
