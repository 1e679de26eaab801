"""Face-part cropping from 68-point landmarks and the face bound rect.

Produces the four analysis patches (eye, head, beard, mustache) used by
the attribute classifiers. All ranges are half-open ``rows[a, b) x
cols[a, b)`` in face-image coordinates; arithmetic is integer with
division truncating toward zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backend import BoundingBox, Landmarks68
from .errors import InvalidInputError

MIN_PATCH_SIDE = 20

PATCH_NAMES = ("ep", "hp", "bp", "mp")


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle: rows [top, bottom), cols [left, right)."""

    top: int
    bottom: int
    left: int
    right: int

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def width(self) -> int:
        return self.right - self.left

    def translated(self, dx: int, dy: int) -> "Rect":
        return Rect(self.top + dy, self.bottom + dy, self.left + dx, self.right + dx)

    def clamped(self, img_h: int, img_w: int) -> "Rect":
        return Rect(
            min(max(self.top, 0), img_h),
            min(max(self.bottom, 0), img_h),
            min(max(self.left, 0), img_w),
            min(max(self.right, 0), img_w),
        )


@dataclass(frozen=True)
class CropGeometry:
    """Every symbol the crop arithmetic derives, for inspection and tests.

    p3 and p12 are read from the landmark set and exposed but feed no
    rectangle.
    """

    p1: tuple[int, int]
    p2: tuple[int, int]
    p3: tuple[int, int]
    p4: tuple[int, int]
    p5: tuple[int, int]
    p6: tuple[int, int]
    p7: tuple[int, int]
    p8: tuple[int, int]
    p9: tuple[int, int]
    p10: tuple[int, int]
    p11: tuple[int, int]
    p12: tuple[int, int]
    offset_up: int
    offset_down: int
    offset_left: int
    head_offset: int


@dataclass(frozen=True)
class Alg1Inputs:
    """A face image with its bound rect and 68 landmarks."""

    face_image: np.ndarray
    rect: BoundingBox
    landmarks: Landmarks68

    def geometry(self) -> CropGeometry:
        pts = self.landmarks.points
        p1, p2 = pts[0], pts[16]
        p3 = pts[29]
        p4, p5 = pts[19], pts[24]
        p6, p7 = pts[4], pts[12]
        p8 = pts[8]
        p9, p10, p11 = pts[30], pts[33], pts[31]
        p12 = pts[57]
        return CropGeometry(
            p1=p1,
            p2=p2,
            p3=p3,
            p4=p4,
            p5=p5,
            p6=p6,
            p7=p7,
            p8=p8,
            p9=p9,
            p10=p10,
            p11=p11,
            p12=p12,
            offset_up=_trunc_div(p8[1] - p1[1], 3),
            offset_down=_trunc_div(p11[1] - p9[1], 3),
            offset_left=_trunc_div(p1[0] - self.rect.x, 2),
            head_offset=p8[1] - p1[1],
        )


@dataclass(frozen=True)
class FacePatches:
    """The four cropped patches with their source rectangles.

    ``raw_rects`` hold the unclamped arithmetic (translation-equivariant);
    ``rects`` are clamped to the image and sliced into the patch rasters.
    A patch whose clamped side falls under 20 pixels is flagged invalid.
    """

    ep: np.ndarray
    hp: np.ndarray
    bp: np.ndarray
    mp: np.ndarray
    rects: dict[str, Rect]
    raw_rects: dict[str, Rect]
    valid: dict[str, bool]
    geometry: CropGeometry

    def patch(self, name: str) -> np.ndarray:
        return {"ep": self.ep, "hp": self.hp, "bp": self.bp, "mp": self.mp}[name]


def crop_face_patches(inputs: Alg1Inputs) -> FacePatches:
    """Cut eye, head, beard, and mustache patches from a face image.

    The eye patch spans the jaw-width columns padded by offset_left and
    rows from above the outer eye corner down past the jawline; the head
    patch runs from the (offset-raised) rect top to the brow line; beard
    and mustache patches share jaw columns, split at the nose-base and
    chin rows.
    """
    rect = inputs.rect
    if rect.w <= 0 or rect.h <= 0:
        raise InvalidInputError(f"degenerate face rect {rect.w}x{rect.h}")
    img = inputs.face_image
    if img.ndim != 2:
        raise InvalidInputError("face_image must be a grayscale raster")
    img_h, img_w = img.shape

    g = inputs.geometry()
    (x1, y1), (x2, _) = g.p1, g.p2
    (_, y5) = g.p5
    (x6, y6), (x7, _) = g.p6, g.p7
    (_, y8) = g.p8
    (_, y10) = g.p10

    raw = {
        "ep": Rect(y1 - g.offset_up, y6 + g.offset_down, x1 - g.offset_left, x2 + g.offset_left),
        "hp": Rect(rect.y - g.head_offset, y5, rect.x, x2),
        "bp": Rect(y6, y8, x6, x7),
        "mp": Rect(y10, y6, x6, x7),
    }

    rects: dict[str, Rect] = {}
    valid: dict[str, bool] = {}
    patches: dict[str, np.ndarray] = {}
    for name, r in raw.items():
        clamped = r.clamped(img_h, img_w)
        inverted = clamped.height <= 0 or clamped.width <= 0
        if inverted:
            clamped = Rect(clamped.top, clamped.top, clamped.left, clamped.left)
        rects[name] = clamped
        valid[name] = clamped.height >= MIN_PATCH_SIDE and clamped.width >= MIN_PATCH_SIDE
        patches[name] = img[clamped.top : clamped.bottom, clamped.left : clamped.right]

    return FacePatches(
        ep=patches["ep"],
        hp=patches["hp"],
        bp=patches["bp"],
        mp=patches["mp"],
        rects=rects,
        raw_rects=raw,
        valid=valid,
        geometry=g,
    )
