"""Binary checkpoint container for generators and discriminators.

Layout (all integers little-endian)::

    magic      8 bytes  b"OCCGCKPT"
    version    u16
    meta_len   u32
    meta       meta_len bytes of UTF-8 JSON
    n_arrays   u32
    n_arrays records:
        name_len u16, name (UTF-8)
        ndim     u8,  dims (ndim x u64)
        nbytes   u64, data (float64, little-endian, C order)

The JSON preamble holds the architecture descriptor, the version tag, the
measured reconstruction loss at save time, optimizer hyperparameters and step
count, the numpy bit-generator state, and free-form ``extra`` fields.
Optimizer moments are stored as arrays named ``adam.m.<i>`` / ``adam.v.<i>``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .models import Discriminator, Generator, build_model
from .ndcore import AdamState

MAGIC = b"OCCGCKPT"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint."""


@dataclass
class Checkpoint:
    model: Generator | Discriminator
    meta: dict[str, Any]
    optimizer: AdamState | None = None
    rng_state: dict | None = None
    loss_r: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def restore_rng(self) -> np.random.Generator:
        if self.rng_state is None:
            raise CheckpointError("checkpoint carries no RNG state")
        bitgen = getattr(np.random, self.rng_state["bit_generator"])()
        bitgen.state = self.rng_state
        return np.random.Generator(bitgen)


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    key = name.encode("utf-8")
    head = struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    data = arr.tobytes()
    return head + struct.pack("<Q", len(data)) + data


def save_checkpoint(path, model: Generator | Discriminator, *, optimizer: AdamState | None = None,
                    rng: np.random.Generator | None = None, loss_r: float | None = None,
                    extra: dict | None = None) -> None:
    arrays = dict(model.state_dict())
    meta: dict[str, Any] = {
        "architecture": model.architecture(),
        "version_tag": getattr(model, "version_tag", None),
        "param_names": list(arrays),
        "param_hash": model.param_hash(),
        "loss_r": loss_r,
        "extra": extra or {},
    }
    if optimizer is not None:
        meta["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1, "beta2": optimizer.beta2,
                             "eps": optimizer.eps, "step_count": optimizer.step_count, "n_moments": len(optimizer.m)}
        for i, (m, v) in enumerate(zip(optimizer.m, optimizer.v)):
            arrays[f"adam.m.{i}"] = m
            arrays[f"adam.v.{i}"] = v
    if rng is not None:
        meta["rng_state"] = rng.bit_generator.state
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(blob)), blob, struct.pack("<I", len(arrays))]
    parts += [_pack_array(name, arr) for name, arr in arrays.items()]
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, raw: bytes, path):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint_raw(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    r = _Reader(raw, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version, meta_len = r.unpack("<HI")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(r.take(meta_len).decode("utf-8"))
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = r.unpack(f"<{ndim}Q")
        (nbytes,) = r.unpack("<Q")
        if nbytes != 8 * int(np.prod(dims, dtype=np.int64)):
            raise CheckpointError(f"{path}: array {name!r} size does not match its shape")
        arrays[name] = np.frombuffer(r.take(nbytes), dtype="<f8").reshape(dims).astype(np.float64)
    if r.pos != len(raw):
        raise CheckpointError(f"{path}: trailing bytes after last array")
    return meta, arrays


def load_checkpoint(path, expected_architecture: dict | None = None) -> Checkpoint:
    """Rebuild the model (and optimizer/RNG state when present) from ``path``."""
    meta, arrays = read_checkpoint_raw(path)
    arch = meta["architecture"]
    if expected_architecture is not None and dict(expected_architecture) != arch:
        raise CheckpointError(f"{path}: architecture mismatch: checkpoint {arch} vs config {expected_architecture}")
    model = build_model(arch)
    model.load_state_dict({k: arrays[k] for k in meta["param_names"]})
    if meta.get("version_tag") and isinstance(model, Generator):
        model.version_tag = meta["version_tag"]
    opt = None
    if "optimizer" in meta:
        o = meta["optimizer"]
        n = o["n_moments"]
        opt = AdamState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], step_count=o["step_count"],
                        m=[arrays[f"adam.m.{i}"] for i in range(n)], v=[arrays[f"adam.v.{i}"] for i in range(n)])
    return Checkpoint(model, meta, opt, meta.get("rng_state"), meta.get("loss_r"), meta.get("extra", {}))
