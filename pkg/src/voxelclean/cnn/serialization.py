"""Binary weight files.

Layout (all integers unsigned 32-bit little-endian)::

    b"PBCN"  version  fingerprint[32]  config_len  config_json[config_len]
    layer_count  tensor_count
    per tensor: rank  dims[rank]  float32-le values

``fingerprint`` is the SHA-256 digest of the layer list, so a file written
for one architecture refuses to load as another.  Tensors are stored in
parameter order followed by batch-norm running statistics.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .network import (ArchConfig, NetworkWeights, _buffer_shapes, _param_shapes,
                      architecture_fingerprint, canonical_architecture)

MAGIC = b"PBCN"
VERSION = 1
_MAX_RANK = 8


class WeightFileError(ValueError):
    pass


class ArchitectureMismatch(WeightFileError):
    pass


def save_weights(weights: NetworkWeights, path) -> None:
    specs = weights.specs
    config = weights.config
    blob = json.dumps({"filters": config.filters, "blocks": config.blocks,
                       "norm": config.norm, "patch_size": config.patch_size}).encode()
    tensors = list(weights.params.values()) + list(weights.buffers.values())
    parts = [MAGIC, struct.pack("<I", VERSION), architecture_fingerprint(specs),
             struct.pack("<I", len(blob)), blob, struct.pack("<II", len(specs), len(tensors))]
    for t in tensors:
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise WeightFileError("weight file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32s(self, count: int) -> tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count))

    def u32(self) -> int:
        return self.u32s(1)[0]


def load_weights(path, expect: ArchConfig | None = None) -> NetworkWeights:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise WeightFileError(f"cannot read weight file {path}: {exc.strerror}") from exc

    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise WeightFileError(f"{os.fspath(path)} is not a weight file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise WeightFileError(f"unsupported weight file version {version}")
    fingerprint = r.take(32)
    try:
        cfg = json.loads(r.take(r.u32()).decode())
        config = ArchConfig(int(cfg["filters"]), int(cfg["blocks"]), str(cfg["norm"]),
                            int(cfg.get("patch_size", 12)))
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        raise WeightFileError(f"corrupt architecture record: {exc}") from exc
    specs = canonical_architecture(config.filters, config.blocks, config.norm)
    if fingerprint != architecture_fingerprint(specs):
        raise ArchitectureMismatch("architecture fingerprint does not match the stored configuration")
    if expect is not None and expect != config:
        raise ArchitectureMismatch(f"model architecture {config} differs from expected {expect}")

    n_layers, n_tensors = r.u32s(2)
    param_shapes = _param_shapes(specs)
    buffer_shapes = _buffer_shapes(specs)
    if n_layers != len(specs) or n_tensors != len(param_shapes) + len(buffer_shapes):
        raise ArchitectureMismatch("layer or tensor count does not match the architecture")

    tensors = []
    for name, shape in list(param_shapes.items()) + list(buffer_shapes.items()):
        rank = r.u32()
        if rank > _MAX_RANK:
            raise WeightFileError(f"tensor {name}: implausible rank {rank}")
        dims = r.u32s(rank)
        if tuple(dims) != shape:
            raise ArchitectureMismatch(f"tensor {name}: stored shape {tuple(dims)}, expected {shape}")
        count = int(np.prod(shape))
        values = np.frombuffer(r.take(4 * count), dtype="<f4").astype(np.float32).reshape(shape)
        tensors.append((name, values))
    if r.pos != len(data):
        raise WeightFileError("trailing bytes after last tensor")

    n_params = len(param_shapes)
    params = dict(tensors[:n_params])
    buffers = dict(tensors[n_params:])
    weights = NetworkWeights(config, params, buffers)
    if not all(np.all(np.isfinite(v)) for v in params.values()):
        raise WeightFileError("weight file contains non-finite parameters")
    return weights
