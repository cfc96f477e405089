"""Portable weights container (".swnn").

Layout, all little-endian: magic "SWNN", u16 version = 1, u16 in_channels,
u16 stages, u16 base_channels, u16 classes, u32 tensor count, then per
tensor: u16 name length, name bytes (utf-8), u8 ndim, u32 dims..., float32
data row-major.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import (
    BadMagic,
    ShapeMismatchWithConfig,
    VersionUnsupported,
    WeightsFormatError,
)
from .model import ModelWeights, NetConfig, tensor_spec

SWNN_MAGIC = b"SWNN"
SWNN_VERSION = 1
_HEADER = struct.Struct("<4sHHHHHI")


def save_weights(weights: ModelWeights) -> bytes:
    cfg = weights.config
    out = [
        _HEADER.pack(
            SWNN_MAGIC,
            SWNN_VERSION,
            cfg.in_channels,
            cfg.stages,
            cfg.base_channels,
            cfg.classes,
            len(weights.tensors),
        )
    ]
    for name, tensor in weights.tensors.items():
        encoded = name.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<B", tensor.ndim))
        out.append(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        out.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightsFormatError(
                f"truncated weights file: need {n} bytes at offset {self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def load_weights(data: bytes, strict: bool = True) -> ModelWeights:
    """Decode a weights file; with strict=True the tensors must exactly match
    the compact topology implied by the stored config."""
    if len(data) < 4 or data[:4] != SWNN_MAGIC:
        raise BadMagic("not a SWNN weights file")
    r = _Reader(data)
    magic, version, in_ch, stages, base, classes, count = _HEADER.unpack(r.take(_HEADER.size))
    if version != SWNN_VERSION:
        raise VersionUnsupported(f"weights version {version} not supported")
    try:
        cfg = NetConfig(in_channels=in_ch, stages=stages, base_channels=base, classes=classes)
    except ValueError as exc:
        raise WeightsFormatError(str(exc)) from None

    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8", errors="replace")
        (ndim,) = struct.unpack("<B", r.take(1))
        dims = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        n = int(np.prod(dims)) if dims else 1
        tensor = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims).copy()
        if name in tensors:
            raise WeightsFormatError(f"duplicate tensor {name!r}")
        tensors[name] = tensor
    if r.pos != len(data):
        raise WeightsFormatError(f"{len(data) - r.pos} trailing bytes after tensors")

    if strict:
        expected = tensor_spec(cfg)
        if [n for n, _ in expected] != list(tensors.keys()):
            raise ShapeMismatchWithConfig("tensor names do not match stored config")
        for name, shape in expected:
            if tuple(tensors[name].shape) != shape:
                raise ShapeMismatchWithConfig(
                    f"{name} has shape {tensors[name].shape}, expected {shape}"
                )
        if any(not np.all(np.isfinite(t)) for t in tensors.values()):
            raise WeightsFormatError("non-finite tensor values")
    return ModelWeights(tensors=tensors, config=cfg, format_version=version)
