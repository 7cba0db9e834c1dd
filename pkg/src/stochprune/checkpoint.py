"""Versioned binary checkpoint container.

Layout, all integers little-endian:

    bytes 0..4    magic "SGAP"
    u32           format version (currently 1)
    u64           metadata length in bytes
    ...           metadata, canonical JSON (sorted keys, no whitespace)
    u64           payload length in bytes
    ...           parameters as contiguous little-endian float32 in
                  registry order

The metadata carries the model spec, optimizer settings, step count, mask
RNG state, dataset provenance and the parameter registry (paths and
shapes), so load(save(model)) reproduces parameters bit-exactly and the
registry order exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .net import build_residual_mlp

MAGIC = b"SGAP"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt or inconsistent checkpoint container."""


def _canonical_json(meta):
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()


def checkpoint_bytes(model, meta):
    """Serialize model parameters plus metadata into container bytes."""
    params = model.parameters()
    meta = dict(meta)
    meta["registry"] = [[path, list(p.shape)] for path, p in params]
    blob = _canonical_json(meta)
    payload = b"".join(
        np.ascontiguousarray(p, dtype="<f4").tobytes() for _, p in params
    )
    return b"".join([
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<Q", len(blob)),
        blob,
        struct.pack("<Q", len(payload)),
        payload,
    ])


def save_checkpoint(path, model, meta):
    Path(path).write_bytes(checkpoint_bytes(model, meta))
    return Path(path)


def _take(buf, offset, n, what):
    if offset + n > len(buf):
        raise CheckpointError(
            f"truncated checkpoint: {what} needs bytes "
            f"[{offset}, {offset + n}) but file has {len(buf)}"
        )
    return buf[offset:offset + n], offset + n


def load_checkpoint(path):
    """Parse a container; returns (meta, params dict keyed by path)."""
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    magic, off = _take(buf, 0, 4, "magic")
    if magic != MAGIC:
        raise CheckpointError(
            f"bad magic: expected {MAGIC!r}, got {magic!r}"
        )
    raw, off = _take(buf, off, 4, "version")
    version = struct.unpack("<I", raw)[0]
    if version != VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} (expected {VERSION})"
        )
    raw, off = _take(buf, off, 8, "metadata length")
    meta_len = struct.unpack("<Q", raw)[0]
    blob, off = _take(buf, off, meta_len, "metadata")
    try:
        meta = json.loads(blob.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint metadata: {e}") from e
    if "registry" not in meta:
        raise CheckpointError("checkpoint metadata lacks a registry")
    raw, off = _take(buf, off, 8, "payload length")
    payload_len = struct.unpack("<Q", raw)[0]
    payload, off = _take(buf, off, payload_len, "payload")
    if off != len(buf):
        raise CheckpointError(
            f"{len(buf) - off} trailing bytes after payload"
        )
    total = sum(int(np.prod(shape)) for _, shape in meta["registry"])
    if payload_len != 4 * total:
        raise CheckpointError(
            f"payload length {payload_len} != 4 * {total} parameter values"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    params = {}
    pos = 0
    for path, shape in meta["registry"]:
        size = int(np.prod(shape))
        params[path] = flat[pos:pos + size].reshape(shape).copy()
        pos += size
    return meta, params


def load_model(path):
    """Rebuild the model a checkpoint describes and fill its parameters."""
    meta, params = load_checkpoint(path)
    spec = meta.get("model")
    if not spec:
        raise CheckpointError("checkpoint metadata lacks a model spec")
    model = build_residual_mlp(
        input_dim=spec["input_dim"],
        hidden_width=spec["hidden_width"],
        blocks=spec["blocks"],
        classes=spec["classes"],
        has_bias=spec.get("has_bias", True),
    )
    expected = [path for path, _ in model.parameters()]
    recorded = [path for path, _ in meta["registry"]]
    if expected != recorded:
        raise CheckpointError(
            "checkpoint registry does not match the rebuilt model: "
            f"{recorded[:3]}... vs {expected[:3]}..."
        )
    for path, value in params.items():
        model.set_parameter(path, value)
    return model, meta
