"""Frame sources and change-detection gating.

Frames come from directory replay (PNG/JPEG files consumed in
lexicographic order) or a configured stream. Change detection compares
each frame against the previous retained frame and drops frames with no
activity before any detector runs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import images, kernels
from .errors import ConfigError, InvalidInputError


@dataclass(frozen=True)
class Frame:
    """One camera frame: RGB raster plus the derived grayscale plane."""

    camera_id: str
    seq: int
    timestamp_ms: int
    pixels_rgb: np.ndarray
    pixels_gray: np.ndarray

    @classmethod
    def from_rgb(cls, camera_id: str, seq: int, timestamp_ms: int, rgb: np.ndarray) -> "Frame":
        rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
        if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] < 1 or rgb.shape[1] < 1:
            raise InvalidInputError(f"frame raster must be (h, w, 3), got {rgb.shape}")
        gray = images.rgb_to_gray(rgb)
        rgb.setflags(write=False)
        gray.setflags(write=False)
        return cls(camera_id, seq, timestamp_ms, rgb, gray)

    @property
    def width(self) -> int:
        return self.pixels_rgb.shape[1]

    @property
    def height(self) -> int:
        return self.pixels_rgb.shape[0]


@dataclass(frozen=True)
class CameraConfig:
    camera_id: str
    location_label: str
    source: str

    def __post_init__(self):
        if not self.location_label:
            raise ConfigError("location_label must be non-empty", field=self.camera_id)


@dataclass(frozen=True)
class ChangeParams:
    pixel_delta: int = 25
    active_fraction: float = 0.01

    def __post_init__(self):
        if not 0 <= self.pixel_delta <= 255:
            raise InvalidInputError(f"pixel_delta {self.pixel_delta} outside [0, 255]")
        if not 0.0 <= self.active_fraction <= 1.0:
            raise InvalidInputError(f"active_fraction {self.active_fraction} outside [0, 1]")


def change_score(prev: Frame, cur: Frame, params: ChangeParams) -> float:
    """Fraction of pixels whose grayscale value moved by more than pixel_delta."""
    if prev.camera_id != cur.camera_id:
        raise InvalidInputError(
            f"frames from different cameras: {prev.camera_id!r} vs {cur.camera_id!r}"
        )
    if prev.pixels_gray.shape != cur.pixels_gray.shape:
        raise InvalidInputError(
            f"frame dimensions differ: {prev.pixels_gray.shape} vs {cur.pixels_gray.shape}"
        )
    changed = kernels.count_exceeding(prev.pixels_gray, cur.pixels_gray, params.pixel_delta)
    return changed / prev.pixels_gray.size


def is_active(prev: Frame | None, cur: Frame, params: ChangeParams) -> bool:
    """True when the frame shows activity. The first frame is always active."""
    if prev is None:
        return True
    return change_score(prev, cur, params) > params.active_fraction


class ChangeGate:
    """Stateful per-camera gate comparing against the last retained frame.

    A frame is retained only when active, so slow drift accumulates until
    it crosses the threshold instead of hiding below it frame by frame.
    """

    def __init__(self, params: ChangeParams):
        self.params = params
        self._retained: dict[str, Frame] = {}

    def admit(self, frame: Frame) -> bool:
        prev = self._retained.get(frame.camera_id)
        if is_active(prev, frame, self.params):
            self._retained[frame.camera_id] = frame
            return True
        return False


@dataclass
class DecodeError:
    """A file in a replay directory that could not be decoded."""

    path: str
    reason: str


_REPLAY_SUFFIXES = {".png", ".jpg", ".jpeg"}


class DirectorySource:
    """Replays a directory of images as frames, lexicographic file order.

    Undecodable files are recorded in ``errors`` and skipped; the stream
    continues. ``seq`` numbers count successfully decoded frames.
    """

    def __init__(self, camera_id: str, directory: str | Path, clock: Callable[[], float] = time.time):
        self.camera_id = camera_id
        self.directory = Path(directory)
        self.clock = clock
        self.errors: list[DecodeError] = []
        if not self.directory.is_dir():
            raise ConfigError(f"replay directory does not exist: {self.directory}")

    def __iter__(self) -> Iterator[Frame]:
        seq = 0
        for path in sorted(self.directory.iterdir(), key=lambda p: p.name):
            if path.suffix.lower() not in _REPLAY_SUFFIXES or not path.is_file():
                continue
            try:
                rgb = images.decode_image(path.read_bytes())
            except (InvalidInputError, OSError) as exc:
                self.errors.append(DecodeError(str(path), str(exc)))
                continue
            yield Frame.from_rgb(self.camera_id, seq, int(self.clock() * 1000), rgb)
            seq += 1


def open_source(camera: CameraConfig, clock: Callable[[], float] = time.time) -> DirectorySource:
    """Open the configured source for a camera.

    Directory paths (optionally ``file://`` URIs) replay image files; other
    URI schemes are not part of the tested contract and are rejected.
    """
    source = camera.source
    if source.startswith("file://"):
        source = source[len("file://"):]
    path = Path(source)
    if path.is_dir():
        return DirectorySource(camera.camera_id, path, clock)
    raise ConfigError(
        f"unsupported source {camera.source!r} for camera {camera.camera_id!r}; "
        "expected a replay directory"
    )
