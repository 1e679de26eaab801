"""Face identification with uniform local binary patterns.

A face chip is resampled to 128x128, coded with LBP(8,1) (bit i set when
neighbor i >= center, neighbors clockwise from the top-left), and binned
per cell of an 8x8 grid: 58 dedicated bins for the uniform codes (at most
two circular bit transitions) plus one shared bin for everything else.
Cells are normalized independently, giving a 64 * 59 = 3776 vector.
Matching is nearest-template chi-square with an open-set threshold;
embedding vectors from a backend can replace LBP when configured.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import images, kernels
from .errors import InvalidInputError

CHIP_SIZE = 128
GRID = 8
CELL = CHIP_SIZE // GRID
BINS_PER_CELL = 59
HISTOGRAM_LENGTH = GRID * GRID * BINS_PER_CELL

UNKNOWN = "Unknown"


def _transitions(code: int) -> int:
    bits = [(code >> i) & 1 for i in range(8)]
    return sum(bits[i] != bits[(i + 1) % 8] for i in range(8))


def _build_bin_table() -> np.ndarray:
    """Map each 8-bit code to its histogram bin.

    Uniform codes get dedicated bins in ascending code order; the rest
    share the final bin.
    """
    uniform = [code for code in range(256) if _transitions(code) <= 2]
    assert len(uniform) == BINS_PER_CELL - 1
    table = np.full(256, BINS_PER_CELL - 1, dtype=np.int64)
    for bin_index, code in enumerate(uniform):
        table[code] = bin_index
    return table


BIN_TABLE = _build_bin_table()


def lbp_code(window: np.ndarray) -> int:
    """LBP code of a single 3x3 grayscale neighborhood."""
    window = np.asarray(window, dtype=np.uint8)
    if window.shape != (3, 3):
        raise InvalidInputError(f"expected a 3x3 window, got {window.shape}")
    return int(kernels.lbp_code_image(window)[0, 0])


def lbp_histogram(chip: np.ndarray) -> np.ndarray:
    """Per-cell-normalized uniform LBP histogram of a grayscale chip.

    The chip is resampled to 128x128 first; border pixels are excluded
    from coding. Returns a float64 vector of length 3776 where every
    non-empty cell sums to 1.
    """
    chip = np.asarray(chip)
    if chip.ndim == 3:
        chip = images.rgb_to_gray(chip)
    if chip.ndim != 2 or chip.size == 0:
        raise InvalidInputError(f"chip must be a non-empty 2D raster, got shape {chip.shape}")
    chip = images.resample_nearest(chip.astype(np.uint8), CHIP_SIZE, CHIP_SIZE)

    codes = kernels.lbp_code_image(chip)
    bins = BIN_TABLE[codes]
    # Coded pixel (r, c) sits at chip position (r+1, c+1); assign cells in
    # chip coordinates so the grid tiles the full 128x128 area.
    rows = (np.arange(1, CHIP_SIZE - 1) // CELL).repeat(CHIP_SIZE - 2).reshape(
        CHIP_SIZE - 2, CHIP_SIZE - 2
    )
    cols = np.tile(np.arange(1, CHIP_SIZE - 1) // CELL, (CHIP_SIZE - 2, 1))
    cell_index = rows * GRID + cols
    flat = cell_index.reshape(-1) * BINS_PER_CELL + bins.reshape(-1)
    counts = np.bincount(flat, minlength=HISTOGRAM_LENGTH).astype(np.float64)

    histogram = counts.reshape(GRID * GRID, BINS_PER_CELL)
    totals = histogram.sum(axis=1, keepdims=True)
    np.divide(histogram, totals, out=histogram, where=totals > 0)
    return histogram.reshape(-1)


def chi_square(a: np.ndarray, b: np.ndarray) -> float:
    """Chi-square distance between two histograms of equal length."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"histogram lengths differ: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sum(diff * diff / (a + b + 1e-12)))


def extract_chip(gray: np.ndarray, x: int, y: int, w: int, h: int) -> np.ndarray:
    """Crop the face box from a grayscale frame raster."""
    if w < 1 or h < 1:
        raise InvalidInputError(f"degenerate face box {w}x{h}")
    return gray[y : y + h, x : x + w]


@dataclass(frozen=True)
class FaceTemplate:
    """One enrolled view of a person."""

    person_id: str
    person_name: str
    histogram: np.ndarray | None
    embedding: np.ndarray | None = None
    source_image_ref: str = ""

    def __post_init__(self):
        if self.histogram is None and self.embedding is None:
            raise InvalidInputError("template needs a histogram or an embedding")


@dataclass(frozen=True)
class MatchResult:
    identity: str
    distance: float
    matched_template: FaceTemplate | None = None


def _template_distance(query: np.ndarray, template: FaceTemplate, mode: str) -> float | None:
    if mode == "lbp":
        if template.histogram is None:
            return None
        return chi_square(query, template.histogram)
    if template.embedding is None:
        return None
    diff = np.asarray(query, dtype=np.float64) - np.asarray(template.embedding, dtype=np.float64)
    return float(np.dot(diff, diff))


def identify(
    query: np.ndarray,
    templates: list[FaceTemplate],
    threshold: float,
    mode: str = "lbp",
) -> MatchResult:
    """Open-set identification of a query feature against enrolled templates.

    ``query`` is an LBP histogram in lbp mode or an embedding vector in
    embedding mode. Returns the nearest template's owner when the distance
    clears the threshold, otherwise ``Unknown``. Distance ties go to the
    lexicographically lowest person_id.
    """
    if threshold <= 0:
        raise InvalidInputError(f"threshold must be > 0, got {threshold}")
    if mode not in ("lbp", "embedding"):
        raise InvalidInputError(f"unknown recognition mode {mode!r}")

    best: tuple[float, FaceTemplate] | None = None
    ordered = sorted(templates, key=lambda t: (t.person_id, t.source_image_ref))
    for template in ordered:
        distance = _template_distance(query, template, mode)
        if distance is None:
            continue
        if best is None or distance < best[0]:
            best = (distance, template)

    if best is None:
        return MatchResult(UNKNOWN, math.inf, None)
    distance, template = best
    if distance > threshold:
        return MatchResult(UNKNOWN, distance, None)
    return MatchResult(template.person_name, distance, template)


def identify_chip(
    chip: np.ndarray,
    templates: list[FaceTemplate],
    threshold: float,
) -> MatchResult:
    """Convenience wrapper: LBP-mode identification straight from a chip raster."""
    return identify(lbp_histogram(chip), templates, threshold, mode="lbp")
