"""Pure-Python (numpy) kernel implementations.

Bit-exact mirror of the compiled extension so the engine behaves
identically whichever is selected at import.
"""

from __future__ import annotations

import numpy as np

# Neighbor offsets clockwise from top-left; bit i belongs to offset i.
_OFFSETS = (
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
)


def lbp_code_image(gray: np.ndarray) -> np.ndarray:
    """8-bit LBP codes for every interior pixel of a grayscale raster.

    Output shape is ``(h-2, w-2)``; border pixels have no full 3x3
    neighborhood and are excluded.
    """
    g = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = g.shape
    center = g[1 : h - 1, 1 : w - 1]
    codes = np.zeros((h - 2, w - 2), dtype=np.uint8)
    for bit, (dr, dc) in enumerate(_OFFSETS):
        neighbor = g[1 + dr : h - 1 + dr, 1 + dc : w - 1 + dc]
        codes |= (neighbor >= center).astype(np.uint8) << bit
    return codes


def count_exceeding(a: np.ndarray, b: np.ndarray, delta: int) -> int:
    """Number of positions where ``|a - b| > delta``."""
    diff = np.abs(a.astype(np.int16) - b.astype(np.int16))
    return int(np.count_nonzero(diff > delta))
