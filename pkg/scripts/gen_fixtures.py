#!/usr/bin/env python3
"""Regenerate the committed test fixtures and their calibration records.

Everything here is deterministic: rerunning the script reproduces the
same PNG bytes and the same calibration numbers. Outputs land under
tests/fixtures/.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "tests"))

from gatewatch import images  # noqa: E402
from gatewatch.attributes import train_patch_classifier, classify_patch, apply_augment_op  # noqa: E402
from gatewatch.notify import Notification, Recipient, compose_mms  # noqa: E402
from gatewatch.profile import laplacian_variance  # noqa: E402
from gatewatch.recognize import chi_square, lbp_histogram  # noqa: E402
from synth import _CLASS_BASES, class_texture, identity_texture  # noqa: E402

FIXTURES = REPO / "tests" / "fixtures"

IDENTITIES = {f"person{i}": 10 + i for i in range(1, 6)}
CHIPS_PER_IDENTITY = 10
PATCHES_PER_CLASS = 10


def write_png(path: Path, raster) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(images.encode_png(raster))


def gen_identity_chips() -> dict[str, list[np.ndarray]]:
    chips = {}
    for name, seed in IDENTITIES.items():
        chips[name] = [identity_texture(seed, i) for i in range(CHIPS_PER_IDENTITY)]
        for i, chip in enumerate(chips[name]):
            write_png(FIXTURES / "chips" / name / f"chip_{i:02d}.png", chip)
    return chips


def calibrate_recognition(chips: dict[str, list[np.ndarray]]) -> dict:
    hists = {
        name: [lbp_histogram(c) for c in items] for name, items in chips.items()
    }
    genuine, impostor = [], []
    for name, items in hists.items():
        for i, query in enumerate(items):
            genuine.append(min(chi_square(query, t) for j, t in enumerate(items) if j != i))
            for other, other_items in hists.items():
                if other != name:
                    impostor.extend(chi_square(query, t) for t in other_items[:2])
    tau = max(genuine) * 1.1

    correct = total = 0
    for name, items in hists.items():
        for i, query in enumerate(items):
            best_name, best_distance = None, float("inf")
            for other, other_items in hists.items():
                for j, t in enumerate(other_items):
                    if other == name and j == i:
                        continue
                    d = chi_square(query, t)
                    if d < best_distance:
                        best_name, best_distance = other, d
            total += 1
            if best_distance <= tau and best_name == name:
                correct += 1
    return {
        "tau": tau,
        "loo_accuracy_floor": correct / total,
        "genuine_max": max(genuine),
        "impostor_min": min(impostor),
    }


def gen_class_patches() -> dict[str, list[np.ndarray]]:
    patches = {}
    for name in sorted(_CLASS_BASES):
        patches[name] = [class_texture(name, i) for i in range(PATCHES_PER_CLASS)]
        for i, patch in enumerate(patches[name]):
            write_png(FIXTURES / "patches" / name / f"patch_{i:02d}.png", patch)
    return patches


REGION_OF = {
    "beard": "bp", "nobeard": "bp",
    "mustache": "mp", "nomustache": "mp",
    "baldhead": "hp", "hair": "hp",
    "eyeglass": "ep", "noeyeglass": "ep",
    "gun": "person", "cellphone": "person", "mask": "person",
}


def calibrate_classifier(patches: dict[str, list[np.ndarray]]) -> dict:
    model = train_patch_classifier(patches)
    correct = total = 0
    for name, items in patches.items():
        region = REGION_OF[name]
        for patch in items:
            label, _ = classify_patch(model, region, patch)
            expected = None if name == "noeyeglass" else name
            got = None if label is None else label.value
            total += 1
            if got == expected:
                correct += 1
    return {"patch_accuracy_floor": correct / total}


def gaussian_blur(img: np.ndarray, sigma: float = 2.5) -> np.ndarray:
    radius = int(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2 * sigma * sigma))
    kernel /= kernel.sum()
    padded = np.pad(img.astype(np.float64), radius, mode="edge")
    rows = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="valid"), 1, padded)
    cols = np.apply_along_axis(lambda c: np.convolve(c, kernel, mode="valid"), 0, rows)
    return np.clip(np.round(cols), 0, 255).astype(np.uint8)


def gen_blur_pairs() -> dict:
    sharp_sources = [
        class_texture("beard", 0),
        class_texture("gun", 1),
        identity_texture(31, 0),
        class_texture("mask", 2),
    ]
    sharp_vars, blurred_vars = [], []
    for i, sharp in enumerate(sharp_sources):
        blurred = gaussian_blur(sharp)
        write_png(FIXTURES / "blur" / f"sharp_{i:02d}.png", sharp)
        write_png(FIXTURES / "blur" / f"blurred_{i:02d}.png", blurred)
        sharp_vars.append(laplacian_variance(sharp))
        blurred_vars.append(laplacian_variance(blurred))
    floor = float(np.sqrt(min(sharp_vars) * max(blurred_vars)))
    assert min(sharp_vars) > max(blurred_vars), "blur fixtures must separate"
    return {
        "blur_floor": floor,
        "sharp_variance_min": min(sharp_vars),
        "blurred_variance_max": max(blurred_vars),
    }


def gen_rotation_golden() -> None:
    rng = np.random.default_rng(808)
    source = rng.integers(0, 256, size=(32, 32), dtype=np.uint8)
    source[:16, :16] = 255  # asymmetric corner so orientation errors show
    source[16:, 16:] = 0
    rotated = apply_augment_op(source, "rotate:+15")
    write_png(FIXTURES / "golden" / "rotate_source.png", source)
    write_png(FIXTURES / "golden" / "rotate15.png", rotated)


GOLDEN_DATE_MS = 1755000000000  # 2025-08-12T12:00:00Z


def gen_mms_golden() -> None:
    scene = np.repeat(class_texture("gun", 0, size=64)[:, :, None], 3, axis=2)
    notification = Notification(
        event_ref="golden-event",
        mode="mms",
        recipient=Recipient(
            name="Pat", phone_number="555-123-4567",
            carrier_gateway_domain="mms.example.net",
        ),
        subject="Premises alert: An unknown person with a gun at the back door",
        body=(
            "An unknown person with a gun who has beard, mustache, hair, "
            "and no-eyeglass at the back door"
        ),
        attachment=images.encode_png(scene),
    )
    message = compose_mms(notification, "gatewatch@example.com", GOLDEN_DATE_MS, "golden")
    path = FIXTURES / "golden" / "mms.eml"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(message)


def main() -> None:
    chips = gen_identity_chips()
    calibration = calibrate_recognition(chips)
    patches = gen_class_patches()
    calibration.update(calibrate_classifier(patches))
    calibration.update(gen_blur_pairs())
    gen_rotation_golden()
    gen_mms_golden()
    out = FIXTURES / "calibration.json"
    out.write_text(json.dumps(calibration, indent=2), encoding="utf-8")
    print(json.dumps(calibration, indent=2))


if __name__ == "__main__":
    main()
