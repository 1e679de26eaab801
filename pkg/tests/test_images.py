from __future__ import annotations

import numpy as np
import pytest

from gatewatch import images
from gatewatch.errors import InvalidInputError


def test_png_roundtrip_rgb():
    rng = np.random.default_rng(11)
    rgb = rng.integers(0, 256, size=(13, 17, 3), dtype=np.uint8)
    decoded = images.decode_image(images.encode_png(rgb))
    np.testing.assert_array_equal(decoded, rgb)


def test_png_roundtrip_gray_promotes_to_rgb():
    gray = np.arange(64, dtype=np.uint8).reshape(8, 8)
    decoded = images.decode_image(images.encode_png(gray))
    assert decoded.shape == (8, 8, 3)
    np.testing.assert_array_equal(decoded[:, :, 0], gray)


def test_encode_is_canonical():
    rgb = np.full((5, 5, 3), 42, dtype=np.uint8)
    assert images.encode_png(rgb) == images.encode_png(rgb.copy())


def test_decode_rejects_garbage():
    with pytest.raises(InvalidInputError):
        images.decode_image(b"\x00\x01\x02")


def test_resample_identity_when_same_size():
    rng = np.random.default_rng(3)
    gray = rng.integers(0, 256, size=(16, 16), dtype=np.uint8)
    np.testing.assert_array_equal(images.resample_nearest(gray, 16, 16), gray)


def test_resample_upscale_repeats_pixels():
    gray = np.array([[0, 255]], dtype=np.uint8)
    up = images.resample_nearest(gray, 1, 4)
    assert up.tolist() == [[0, 0, 255, 255]]


def test_resample_rejects_empty():
    with pytest.raises(InvalidInputError):
        images.resample_nearest(np.zeros((0, 4), dtype=np.uint8), 8, 8)


def test_gray_weights():
    rgb = np.array([[[100, 100, 100]]], dtype=np.uint8)
    assert images.rgb_to_gray(rgb)[0, 0] == 100
