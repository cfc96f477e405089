"""Minimal PNG encoding for previews.

Only the two pixel layouts the pipeline emits are supported: 8-bit
grayscale+alpha and 8-bit RGBA. Output bytes are deterministic (fixed zlib
level, no ancillary chunks), which keeps rendered artifacts content-addressable.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def _chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def _encode(pixels: np.ndarray, color_type: int) -> bytes:
    rows, cols = pixels.shape[:2]
    # filter byte 0 (None) per scanline
    raw = np.concatenate(
        [np.zeros((rows, 1), np.uint8), pixels.reshape(rows, -1)], axis=1
    ).tobytes()
    ihdr = struct.pack(">IIBBBBB", cols, rows, 8, color_type, 0, 0, 0)
    return (
        _SIGNATURE
        + _chunk(b"IHDR", ihdr)
        + _chunk(b"IDAT", zlib.compress(raw, 6))
        + _chunk(b"IEND", b"")
    )


def write_gray_alpha(gray: np.ndarray, alpha: np.ndarray) -> bytes:
    """Encode a grayscale+alpha image (uint8 arrays of equal shape) to PNG bytes."""
    if gray.shape != alpha.shape or gray.ndim != 2:
        raise ValueError("gray and alpha must be 2-D arrays of equal shape")
    pixels = np.stack([gray.astype(np.uint8), alpha.astype(np.uint8)], axis=-1)
    return _encode(pixels, color_type=4)


def write_rgba(rgba: np.ndarray) -> bytes:
    """Encode an H x W x 4 uint8 array to PNG bytes."""
    if rgba.ndim != 3 or rgba.shape[2] != 4:
        raise ValueError("expected an H x W x 4 array")
    return _encode(rgba.astype(np.uint8), color_type=6)
