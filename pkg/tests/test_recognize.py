from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gatewatch.errors import InvalidInputError
from gatewatch.recognize import (
    BINS_PER_CELL,
    CHIP_SIZE,
    FaceTemplate,
    MatchResult,
    UNKNOWN,
    chi_square,
    identify,
    lbp_code,
    lbp_histogram,
)
from synth import random_gray


def _naive_bin_map():
    # Independent bin mapping: count circular transitions on the bit string.
    uniform_codes = []
    for c in range(256):
        cb = format(c, "08b")
        if sum(cb[i] != cb[(i + 1) % 8] for i in range(8)) <= 2:
            uniform_codes.append(c)
    return {code: uniform_codes.index(code) for code in uniform_codes}


NAIVE_BINS = _naive_bin_map()
NAIVE_OTHER_BIN = len(NAIVE_BINS)


def naive_uniform_bin(code):
    return NAIVE_BINS.get(code, NAIVE_OTHER_BIN)


def naive_lbp_histogram(chip128):
    """Brute-force per-pixel reference, written independently of the kernels."""
    assert chip128.shape == (CHIP_SIZE, CHIP_SIZE)
    px = chip128.tolist()
    counts = [[0] * BINS_PER_CELL for _ in range(64)]
    for r in range(1, CHIP_SIZE - 1):
        up, mid, down = px[r - 1], px[r], px[r + 1]
        for c in range(1, CHIP_SIZE - 1):
            center = mid[c]
            code = 0
            if up[c - 1] >= center:
                code |= 1
            if up[c] >= center:
                code |= 2
            if up[c + 1] >= center:
                code |= 4
            if mid[c + 1] >= center:
                code |= 8
            if down[c + 1] >= center:
                code |= 16
            if down[c] >= center:
                code |= 32
            if down[c - 1] >= center:
                code |= 64
            if mid[c - 1] >= center:
                code |= 128
            cell = (r // 16) * 8 + (c // 16)
            counts[cell][naive_uniform_bin(code)] += 1
    out = []
    for cell_counts in counts:
        total = sum(cell_counts)
        if total == 0:
            out.extend([0.0] * BINS_PER_CELL)
        else:
            out.extend(v / total for v in cell_counts)
    return np.array(out, dtype=np.float64)


class TestLbpCode:
    def test_constant_window_codes_255(self):
        assert lbp_code(np.full((3, 3), 9, dtype=np.uint8)) == 255

    def test_isolated_peak_codes_zero(self):
        window = np.zeros((3, 3), dtype=np.uint8)
        window[1, 1] = 255
        assert lbp_code(window) == 0

    def test_hand_evaluated_corner_code(self):
        # center 10; clockwise neighbors from top-left (20,5,5,5,5,5,5,20)
        window = np.array([[20, 5, 5], [20, 10, 5], [5, 5, 5]], dtype=np.uint8)
        assert lbp_code(window) == 129

    def test_rejects_wrong_shape(self):
        with pytest.raises(InvalidInputError):
            lbp_code(np.zeros((4, 4), dtype=np.uint8))


class TestLbpHistogram:
    def test_constant_chip_masses_code_255_bin(self):
        hist = lbp_histogram(np.full((CHIP_SIZE, CHIP_SIZE), 80, dtype=np.uint8))
        bin_255 = naive_uniform_bin(255)
        cells = hist.reshape(64, BINS_PER_CELL)
        assert (cells[:, bin_255] == 1.0).all()
        assert cells.sum() == pytest.approx(64.0)

    def test_matches_naive_oracle_bitwise(self):
        rng = np.random.default_rng(90210)
        for _ in range(3):
            chip = random_gray(rng, CHIP_SIZE, CHIP_SIZE)
            assert np.array_equal(lbp_histogram(chip), naive_lbp_histogram(chip))

    def test_arbitrary_size_input_resampled(self):
        rng = np.random.default_rng(7)
        chip = random_gray(rng, 80, 60)
        hist = lbp_histogram(chip)
        assert hist.shape == (64 * BINS_PER_CELL,)

    def test_cell_masses_are_exactly_one(self):
        rng = np.random.default_rng(12)
        hist = lbp_histogram(random_gray(rng, CHIP_SIZE, CHIP_SIZE))
        sums = hist.reshape(64, BINS_PER_CELL).sum(axis=1)
        assert np.all(np.abs(sums - 1.0) < 1e-9)

    def test_rotation_conserves_total_mass(self):
        rng = np.random.default_rng(55)
        chip = random_gray(rng, CHIP_SIZE, CHIP_SIZE)
        rotated = chip[::-1, ::-1].copy()
        a = lbp_histogram(chip)
        b = lbp_histogram(rotated)
        assert a.sum() == pytest.approx(b.sum())

    def test_empty_chip_rejected(self):
        with pytest.raises(InvalidInputError):
            lbp_histogram(np.zeros((0, 0), dtype=np.uint8))


class TestChiSquare:
    def test_self_distance_zero(self):
        rng = np.random.default_rng(1)
        h = rng.random(59)
        assert chi_square(h, h) == 0.0

    def test_two_bin_hand_arithmetic(self):
        assert chi_square(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(2.0)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_symmetric_and_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random(32)
        b = rng.random(32)
        assert chi_square(a, b) == chi_square(b, a)
        assert chi_square(a, b) >= 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            chi_square(np.zeros(3), np.zeros(4))


def _template(person_id, name, hist, ref=""):
    return FaceTemplate(person_id, name, histogram=hist, source_image_ref=ref)


class TestIdentify:
    def _histograms(self):
        rng = np.random.default_rng(42)
        return [lbp_histogram(random_gray(rng, 64, 64)) for _ in range(3)]

    def test_enrolled_chip_self_matches_at_zero(self):
        rng = np.random.default_rng(2)
        chip = random_gray(rng, 64, 64)
        hist = lbp_histogram(chip)
        result = identify(hist, [_template("p1", "Alice", hist)], threshold=0.5)
        assert result == MatchResult("Alice", 0.0, result.matched_template)
        assert result.distance == 0.0

    def test_empty_profile_is_unknown(self):
        rng = np.random.default_rng(3)
        result = identify(lbp_histogram(random_gray(rng, 64, 64)), [], threshold=1.0)
        assert result.identity == UNKNOWN
        assert math.isinf(result.distance)

    def test_over_threshold_is_unknown(self):
        h = self._histograms()
        result = identify(h[0], [_template("p1", "Bob", h[1])], threshold=1e-6)
        assert result.identity == UNKNOWN
        assert result.matched_template is None

    def test_tie_breaks_by_lowest_person_id(self):
        h = self._histograms()
        templates = [
            _template("zeta", "Zed", h[0], ref="a"),
            _template("alpha", "Ann", h[0], ref="b"),
        ]
        result = identify(h[0], templates, threshold=1.0)
        assert result.identity == "Ann"

    def test_duplicating_templates_keeps_identity(self):
        h = self._histograms()
        templates = [_template("p1", "Ann", h[0]), _template("p2", "Bob", h[1])]
        single = identify(h[2], templates, threshold=100.0)
        doubled = identify(h[2], templates + templates, threshold=100.0)
        assert single.identity == doubled.identity

    def test_lowering_threshold_never_names_an_unknown(self):
        h = self._histograms()
        templates = [_template("p1", "Ann", h[1])]
        for low, high in [(0.01, 0.1), (0.1, 1.0), (1.0, 50.0)]:
            at_low = identify(h[0], templates, threshold=low)
            at_high = identify(h[0], templates, threshold=high)
            if at_low.identity != UNKNOWN:
                assert at_high.identity != UNKNOWN

    def test_embedding_mode_squared_euclidean(self):
        a = FaceTemplate("p1", "Ann", None, embedding=np.array([1.0, 0.0]))
        b = FaceTemplate("p2", "Bob", None, embedding=np.array([0.0, 1.0]))
        result = identify(np.array([0.9, 0.1]), [a, b], threshold=1.0, mode="embedding")
        assert result.identity == "Ann"
        assert result.distance == pytest.approx(0.02)

    def test_invalid_threshold_rejected(self):
        with pytest.raises(InvalidInputError):
            identify(np.zeros(4), [], threshold=0.0)
