"""Raster utilities: decode, canonical PNG encode, grayscale, resampling.

All pipeline modules exchange uint8 numpy arrays: ``(h, w, 3)`` for RGB,
``(h, w)`` for grayscale. PNG bytes produced here are canonical (fixed
filter and compression settings), so content digests of re-encoded
rasters are stable across runs and platforms.
"""

from __future__ import annotations

import io
import struct
import zlib

import numpy as np
from PIL import Image

from .errors import InvalidInputError

# ITU-R 601 luma weights, scaled to integers for bit-exact rounding.
_LUMA_R, _LUMA_G, _LUMA_B = 299, 587, 114


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Convert an ``(h, w, 3)`` uint8 raster to grayscale.

    Uses integer arithmetic equivalent to round(0.299R + 0.587G + 0.114B)
    with ties rounded up, so every module derives the identical gray plane.
    """
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InvalidInputError(f"expected (h, w, 3) raster, got shape {rgb.shape}")
    r = rgb[:, :, 0].astype(np.uint32)
    g = rgb[:, :, 1].astype(np.uint32)
    b = rgb[:, :, 2].astype(np.uint32)
    gray = (_LUMA_R * r + _LUMA_G * g + _LUMA_B * b + 500) // 1000
    return np.minimum(gray, 255).astype(np.uint8)


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def encode_png(raster: np.ndarray) -> bytes:
    """Encode a gray ``(h, w)`` or RGB ``(h, w, 3)`` uint8 raster as PNG.

    Canonical output: filter type 0 on every scanline, zlib level 6.
    The same raster always yields the same bytes.
    """
    arr = np.ascontiguousarray(raster, dtype=np.uint8)
    if arr.ndim == 2:
        color_type = 0
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type = 2
    else:
        raise InvalidInputError(f"cannot encode raster of shape {raster.shape}")
    h, w = arr.shape[0], arr.shape[1]
    if h < 1 or w < 1:
        raise InvalidInputError("cannot encode empty raster")
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    flat = arr.reshape(h, -1)
    raw = b"".join(b"\x00" + flat[row].tobytes() for row in range(h))
    return b"".join(
        [
            b"\x89PNG\r\n\x1a\n",
            _png_chunk(b"IHDR", ihdr),
            _png_chunk(b"IDAT", zlib.compress(raw, 6)),
            _png_chunk(b"IEND", b""),
        ]
    )


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG or JPEG bytes to an ``(h, w, 3)`` uint8 RGB raster."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except Exception as exc:
        raise InvalidInputError(f"undecodable image: {exc}") from exc


def resample_nearest(raster: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resample to ``(height, width)``.

    Source index = floor(dst_index * src_dim / dst_dim); the identity map
    when dimensions already match.
    """
    if raster.ndim not in (2, 3) or raster.shape[0] < 1 or raster.shape[1] < 1:
        raise InvalidInputError(f"cannot resample raster of shape {raster.shape}")
    if height < 1 or width < 1:
        raise InvalidInputError("target dimensions must be >= 1")
    src_h, src_w = raster.shape[0], raster.shape[1]
    rows = (np.arange(height, dtype=np.int64) * src_h) // height
    cols = (np.arange(width, dtype=np.int64) * src_w) // width
    return raster[rows][:, cols]
