"""Self-describing binary checkpoints.

Layout (all integers little-endian u32 unless noted):

    magic   4 bytes, b"SSCK"
    version u32, currently 1
    clen    u32, byte length of the UTF-8 JSON model config that follows
    config  clen bytes
    nparams u32
    then per parameter, in model order:
        nlen  u32, name bytes (UTF-8)
        ndim  u32, then ndim u32 dims
        data  prod(dims) float32 little-endian values
    nbuffers u32, then the same record layout for running-stat buffers

Loading validates every length against the remaining byte count before
allocating, so a truncated or corrupted file raises CheckpointError rather
than producing a half-filled model.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import ModelConfig, SequenceClassifier, build_model, config_from_dict, config_to_dict
from ..errors import ConfigError

MAGIC = b"SSCK"
VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file is malformed, truncated, or mismatched with its config."""


def save_checkpoint(path, model: SequenceClassifier, extra: dict | None = None) -> None:
    """Write the model config and all parameters/buffers to `path`.

    `extra` is merged into the config JSON under the key "extra" and round
    trips through :func:`load_checkpoint` untouched.
    """
    payload = {"model": config_to_dict(model.cfg)}
    if extra:
        payload["extra"] = extra
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")

    def records(items):
        chunks = [struct.pack("<I", len(items))]
        for name, arr in items:
            data = np.ascontiguousarray(arr, dtype="<f4")
            name_b = name.encode("utf-8")
            chunks.append(struct.pack("<I", len(name_b)))
            chunks.append(name_b)
            chunks.append(struct.pack("<I", data.ndim))
            chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
            chunks.append(data.tobytes())
        return chunks

    parts = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob]
    parts.extend(records([(n, p.data) for n, p in model.named_parameters().items()]))
    parts.extend(records(list(model.named_buffers().items())))
    with open(path, "wb") as f:
        f.write(b"".join(parts))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.buf) - self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def _read_records(r: _Reader) -> "dict[str, np.ndarray]":
    count = r.u32()
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        if ndim > 8:
            raise CheckpointError(f"record {name!r} claims {ndim} dimensions")
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        n_elems = 1
        for d in shape:
            n_elems *= d
        data = np.frombuffer(r.take(4 * n_elems), dtype="<f4").reshape(shape)
        if name in out:
            raise CheckpointError(f"duplicate record {name!r}")
        out[name] = data.astype(np.float32)
    return out


def load_checkpoint(path) -> tuple[ModelConfig, "dict[str, np.ndarray]", "dict[str, np.ndarray]", dict]:
    """Parse a checkpoint; returns (config, params, buffers, extra)."""
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        payload = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"checkpoint config is not valid JSON: {e}") from e
    if not isinstance(payload, dict) or "model" not in payload:
        raise CheckpointError("checkpoint config lacks a 'model' entry")
    try:
        cfg = config_from_dict(payload["model"])
    except ConfigError as e:
        raise CheckpointError(f"checkpoint carries an invalid model config: {e}") from e
    params = _read_records(r)
    buffers = _read_records(r)
    if r.pos != len(r.buf):
        raise CheckpointError(f"{len(r.buf) - r.pos} trailing bytes after checkpoint payload")
    return cfg, params, buffers, payload.get("extra", {})


def build_from_checkpoint(path) -> tuple[SequenceClassifier, dict]:
    """Rebuild a model from a checkpoint; returns (model, extra)."""
    cfg, params, buffers, extra = load_checkpoint(path)
    model = build_model(cfg, seed=0)
    own = model.named_parameters()
    missing = sorted(set(own) - set(params))
    surplus = sorted(set(params) - set(own))
    if missing or surplus:
        raise CheckpointError(
            f"parameter names do not match the config: missing {missing}, surplus {surplus}")
    for name, tensor in own.items():
        if params[name].shape != tensor.shape:
            raise CheckpointError(
                f"parameter {name!r} has shape {params[name].shape}, model expects {tensor.shape}")
        tensor.data = params[name].astype(tensor.dtype)
    own_buffers = model.named_buffers()
    if sorted(buffers) != sorted(own_buffers):
        raise CheckpointError(
            f"buffer names do not match the config: file has {sorted(buffers)}, "
            f"model expects {sorted(own_buffers)}")
    for name, arr in buffers.items():
        model.set_buffer(name, arr)
    return model, extra
