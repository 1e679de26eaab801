"""Attribute classification and scene-fact assembly.

Face-part patches and person crops are classified into the ten scene
classes (cellphone, gun, eyeglass, mask, beard, nobeard, mustache,
nomustache, baldhead, hair). The built-in classifier is nearest-centroid
over LBP histograms trained from labeled patch directories; a backend
advertising the classify task can substitute behind the same seam. Hair
color comes from the head-patch intensity histogram.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import images
from .errors import InvalidInputError
from .recognize import chi_square, lbp_histogram

MIN_PATCH_SIDE = 20


class AttributeClass(Enum):
    CELLPHONE = "cellphone"
    GUN = "gun"
    EYEGLASS = "eyeglass"
    MASK = "mask"
    BEARD = "beard"
    NOBEARD = "nobeard"
    MUSTACHE = "mustache"
    NOMUSTACHE = "nomustache"
    BALDHEAD = "baldhead"
    HAIR = "hair"


# Region models: which classes compete for each patch. The eye patch has
# no dedicated negative class; its second centroid carries label None.
REGION_CLASSES: dict[str, tuple] = {
    "bp": (AttributeClass.BEARD, AttributeClass.NOBEARD),
    "mp": (AttributeClass.MUSTACHE, AttributeClass.NOMUSTACHE),
    "hp": (AttributeClass.BALDHEAD, AttributeClass.HAIR),
    "ep": (AttributeClass.EYEGLASS, None),
    "person": (AttributeClass.GUN, AttributeClass.CELLPHONE, AttributeClass.MASK),
}

# Training directory name for the eye patch's negative centroid.
NO_EYEGLASS_DIR = "noeyeglass"

HAIR_COLOR_CUTS = ((64, "black"), (128, "brown"), (192, "gray"), (256, "white/blond"))


def _class_rank(label) -> int:
    if label is None:
        return len(AttributeClass)
    return list(AttributeClass).index(label)


@dataclass
class PatchClassifier:
    """Nearest-centroid models per region.

    ``centroids[region]`` maps a label (AttributeClass or None for the
    eye patch's no-glasses centroid) to its mean LBP histogram.
    ``person_radius`` bounds how far a person crop may sit from a
    centroid and still take its label; regions with exactly two centroids
    always pick the nearer one.
    """

    centroids: dict[str, dict] = field(default_factory=dict)
    person_radius: float = math.inf

    def regions(self) -> list[str]:
        return sorted(self.centroids)

    def distances(self, region: str, patch: np.ndarray) -> list[tuple[float, object]]:
        model = self.centroids.get(region)
        if not model:
            return []
        hist = lbp_histogram(patch)
        pairs = [(chi_square(hist, centroid), label) for label, centroid in model.items()]
        pairs.sort(key=lambda p: (p[0], _class_rank(p[1])))
        return pairs

    def to_json(self) -> str:
        payload = {
            "format": "centroids-v1",
            "person_radius": None if math.isinf(self.person_radius) else self.person_radius,
            "regions": {
                region: {
                    (label.value if label is not None else "none"): centroid.tolist()
                    for label, centroid in model.items()
                }
                for region, model in self.centroids.items()
            },
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "PatchClassifier":
        payload = json.loads(text)
        if payload.get("format") != "centroids-v1":
            raise InvalidInputError("unrecognized classifier model format")
        by_value = {c.value: c for c in AttributeClass}
        centroids: dict[str, dict] = {}
        for region, model in payload["regions"].items():
            centroids[region] = {
                (None if name == "none" else by_value[name]): np.asarray(vec, dtype=np.float64)
                for name, vec in model.items()
            }
        radius = payload.get("person_radius")
        return cls(centroids, math.inf if radius is None else float(radius))

    def save(self, path: str | Path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "PatchClassifier":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def patch_is_valid(patch: np.ndarray) -> bool:
    return (
        patch is not None
        and patch.ndim in (2, 3)
        and patch.shape[0] >= MIN_PATCH_SIDE
        and patch.shape[1] >= MIN_PATCH_SIDE
    )


def classify_patch(model: PatchClassifier, region: str, patch: np.ndarray):
    """Label a patch with its region's nearest centroid.

    Returns ``(label, margin)`` where margin is the runner-up distance
    minus the best distance, or ``None`` when the patch fails the 20x20
    validity gate or the region has no model. For the person region the
    label is None when no centroid lies within ``person_radius``.
    """
    if region not in REGION_CLASSES:
        raise InvalidInputError(f"unknown region {region!r}")
    if not patch_is_valid(patch):
        return None
    pairs = model.distances(region, patch)
    if not pairs:
        return None
    best_distance, best_label = pairs[0]
    margin = (pairs[1][0] - best_distance) if len(pairs) > 1 else math.inf
    if region == "person" and best_distance > model.person_radius:
        return (None, margin)
    return (best_label, margin)


def person_labels(model: PatchClassifier, patch: np.ndarray) -> set | None:
    """All person-crop classes within the configured radius (multi-label)."""
    if not patch_is_valid(patch):
        return None
    pairs = model.distances("person", patch)
    if not pairs:
        return None
    return {label for distance, label in pairs if distance <= model.person_radius}


def train_patch_classifier(
    source: str | Path | Mapping[str, list],
    person_radius: float = math.inf,
) -> PatchClassifier:
    """Compute class centroids from labeled patches.

    ``source`` is either a mapping of class-directory name to rasters or
    a directory containing one subdirectory per class name (the ten
    classes plus ``noeyeglass`` for the eye patch's negative side).
    """
    if isinstance(source, (str, Path)):
        root = Path(source)
        data: dict[str, list] = {}
        for sub in sorted(p for p in root.iterdir() if p.is_dir()):
            rasters = [
                images.rgb_to_gray(images.decode_image(f.read_bytes()))
                for f in sorted(sub.iterdir())
                if f.suffix.lower() in (".png", ".jpg", ".jpeg")
            ]
            if rasters:
                data[sub.name] = rasters
    else:
        data = dict(source)

    dir_to_label = {c.value: c for c in AttributeClass}
    dir_to_label[NO_EYEGLASS_DIR] = None
    label_region = {}
    for region, labels in REGION_CLASSES.items():
        for label in labels:
            label_region[label] = region
    label_region[None] = "ep"

    centroids: dict[str, dict] = {}
    for name, rasters in data.items():
        if name not in dir_to_label:
            raise InvalidInputError(f"unknown class directory {name!r}")
        label = dir_to_label[name]
        region = label_region[label]
        hists = np.stack([lbp_histogram(raster) for raster in rasters])
        centroids.setdefault(region, {})[label] = hists.mean(axis=0)
    return PatchClassifier(centroids, person_radius)


def hair_color(hp: np.ndarray) -> str | None:
    """Color name from the head patch's 256-bin intensity histogram."""
    if not patch_is_valid(hp):
        return None
    gray = images.rgb_to_gray(hp) if hp.ndim == 3 else hp
    histogram = np.bincount(gray.reshape(-1), minlength=256)
    mean = float(np.arange(256) @ histogram) / float(histogram.sum())
    for cut, name in HAIR_COLOR_CUTS:
        if mean < cut:
            return name
    return HAIR_COLOR_CUTS[-1][1]


# ---------------------------------------------------------------------------
# Augmentation transforms used to expand classifier training patches.

DEFAULT_PAD = 8
DEFAULT_OPS = ("pad", "flip_h", "rotate:-15", "rotate:+15", "scale:0.9", "scale:1.1")


def _rotate_nearest(raster: np.ndarray, degrees: float) -> np.ndarray:
    h, w = raster.shape[0], raster.shape[1]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    out_r, out_c = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy = out_r - cy
    dx = out_c - cx
    # Inverse map: rotate output coordinates by -theta back into the source.
    src_c = np.floor(cos_t * dx + sin_t * dy + cx + 0.5).astype(np.int64)
    src_r = np.floor(-sin_t * dx + cos_t * dy + cy + 0.5).astype(np.int64)
    inside = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    result = np.zeros_like(raster)
    result[inside] = raster[src_r[inside], src_c[inside]]
    return result


def _scale_nearest(raster: np.ndarray, factor: float) -> np.ndarray:
    h, w = raster.shape[0], raster.shape[1]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    out_r, out_c = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    src_r = np.floor((out_r - cy) / factor + cy + 0.5).astype(np.int64)
    src_c = np.floor((out_c - cx) / factor + cx + 0.5).astype(np.int64)
    inside = (src_r >= 0) & (src_r < h) & (src_c >= 0) & (src_c < w)
    result = np.zeros_like(raster)
    result[inside] = raster[src_r[inside], src_c[inside]]
    return result


def _pad(raster: np.ndarray, amount: int) -> np.ndarray:
    width = [(amount, amount), (amount, amount)] + [(0, 0)] * (raster.ndim - 2)
    return np.pad(raster, width, mode="constant", constant_values=0)


def apply_augment_op(chip: np.ndarray, op: str) -> np.ndarray:
    name, _, arg = op.partition(":")
    if name == "pad":
        return _pad(chip, int(arg) if arg else DEFAULT_PAD)
    if name == "flip_h":
        return chip[:, ::-1].copy()
    if name == "rotate":
        return _rotate_nearest(chip, float(arg))
    if name == "scale":
        return _scale_nearest(chip, float(arg))
    raise InvalidInputError(f"unknown augmentation op {op!r}")


def augment(chip: np.ndarray, ops: Iterable[str] = DEFAULT_OPS) -> list[np.ndarray]:
    """One augmented raster per op; deterministic, zero-filled borders."""
    if chip.size == 0:
        raise InvalidInputError("cannot augment an empty chip")
    return [apply_augment_op(chip, op) for op in ops]


# ---------------------------------------------------------------------------
# Scene facts.


@dataclass(frozen=True)
class SceneFacts:
    """Everything the description grammar consumes for one person.

    Attribute booleans are tri-state: True/False when a classifier spoke,
    None when it never ran or the patch was unusable.
    """

    identity: str
    location_label: str
    has_gun: bool | None = None
    has_phone: bool | None = None
    has_mask: bool | None = None
    has_eyeglass: bool | None = None
    has_beard: bool | None = None
    has_mustache: bool | None = None
    is_bald: bool | None = None
    hair_color: str | None = None
    person_present_without_face: bool = False

    def __post_init__(self):
        if self.is_bald is True and self.hair_color is not None:
            raise InvalidInputError("a bald head cannot carry a hair color")


def build_facts(
    identify_result,
    patch_labels: Mapping[str, object],
    hair: str | None,
    location_label: str,
    person_without_face: bool = False,
) -> SceneFacts:
    """Merge recognition, patch labels, and hair color into SceneFacts.

    ``patch_labels`` maps region name to its classified label; a missing
    region stays unknown. The ``person`` entry is an iterable of classes
    found within radius on the person crop.
    """
    identity = getattr(identify_result, "identity", identify_result)

    def binary(region: str, positive: AttributeClass) -> bool | None:
        if region not in patch_labels:
            return None
        return patch_labels[region] == positive

    gun = phone = mask = None
    if "person" in patch_labels:
        found = set(patch_labels["person"] or ())
        gun = AttributeClass.GUN in found
        phone = AttributeClass.CELLPHONE in found
        mask = AttributeClass.MASK in found

    is_bald = binary("hp", AttributeClass.BALDHEAD)
    return SceneFacts(
        identity=str(identity),
        location_label=location_label,
        has_gun=gun,
        has_phone=phone,
        has_mask=mask,
        has_eyeglass=binary("ep", AttributeClass.EYEGLASS),
        has_beard=binary("bp", AttributeClass.BEARD),
        has_mustache=binary("mp", AttributeClass.MUSTACHE),
        is_bald=is_bald,
        hair_color=None if is_bald else hair,
        person_present_without_face=person_without_face,
    )
