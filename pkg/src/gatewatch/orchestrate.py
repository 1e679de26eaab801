"""Per-frame pipeline: gate, detect, identify, describe, persist, notify.

Each admitted frame flows person-detect -> face-detect (within person
boxes, whole-frame fallback) -> identification -> face-part cropping ->
attribute classification -> description -> one ThreatEvent per detected
person. Events append to a JSONL log; notifications are debounced per
(camera, identity) and dispatched through the notify module. A failing
backend skips the frame, never the camera loop.
"""

from __future__ import annotations

import json
import logging
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import images
from .attributes import (
    AttributeClass,
    PatchClassifier,
    build_facts,
    classify_patch,
    hair_color,
    person_labels,
)
from .backend import BackendSession, BoundingBox, FaceDetection
from .describe import IdentityRefiner, Refiner, facts_to_sequence, refine
from .errors import BackendUnavailableError, StorageError
from .faceparts import Alg1Inputs, crop_face_patches
from .ingest import ChangeGate, ChangeParams, Frame
from .notify import Dispatcher
from .recognize import UNKNOWN, extract_chip, identify, lbp_histogram

log = logging.getLogger(__name__)

EVENT_FIELDS = (
    "event_id",
    "timestamp",
    "camera_id",
    "location_label",
    "identity",
    "classes",
    "description",
    "image_ref",
    "notified",
)


@dataclass(frozen=True)
class ThreatEvent:
    event_id: str
    timestamp: int  # UTC milliseconds
    camera_id: str
    location_label: str
    identity: str
    classes: tuple[str, ...]
    description: str
    image_ref: str
    notified: bool

    def to_json(self) -> str:
        payload = {name: getattr(self, name) for name in EVENT_FIELDS}
        payload["classes"] = list(self.classes)
        return json.dumps(payload, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "ThreatEvent":
        payload = json.loads(line)
        return cls(
            event_id=payload["event_id"],
            timestamp=int(payload["timestamp"]),
            camera_id=payload["camera_id"],
            location_label=payload["location_label"],
            identity=payload["identity"],
            classes=tuple(payload["classes"]),
            description=payload["description"],
            image_ref=payload["image_ref"],
            notified=bool(payload["notified"]),
        )


class EventLog:
    """Append-only JSONL event log, one ThreatEvent per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, event: ThreatEvent):
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(event.to_json() + "\n")

    def read(self) -> list[ThreatEvent]:
        if not self.path.exists():
            return []
        events = []
        try:
            with open(self.path, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        events.append(ThreatEvent.from_json(line))
                    except (ValueError, KeyError) as exc:
                        raise StorageError(
                            f"{self.path}:{line_no}: bad event record: {exc}"
                        ) from exc
        except OSError as exc:
            raise StorageError(f"cannot read event log {self.path}: {exc}") from exc
        return events


@dataclass(frozen=True)
class DebouncePolicy:
    cooldown_seconds: float = 60.0

    def __post_init__(self):
        if self.cooldown_seconds < 0:
            raise ValueError("cooldown must be >= 0")


class DebounceTable:
    """Last successful notification time per (camera_id, identity)."""

    def __init__(self):
        self._last_ms: dict[tuple[str, str], int] = {}

    def should_notify(self, event: ThreatEvent, policy: DebouncePolicy, now_ms: int) -> bool:
        last = self._last_ms.get((event.camera_id, event.identity))
        if last is None:
            return True
        return (now_ms - last) >= policy.cooldown_seconds * 1000

    def mark_notified(self, event: ThreatEvent, now_ms: int):
        self._last_ms[(event.camera_id, event.identity)] = now_ms


def should_notify(
    event: ThreatEvent, policy: DebouncePolicy, table: DebounceTable, now_ms: int
) -> bool:
    return table.should_notify(event, policy, now_ms)


@dataclass
class OperationalError:
    camera_id: str
    seq: int
    stage: str
    message: str


@dataclass
class HistorySummary:
    total: int
    identity_counts: list[tuple[str, int]]
    camera_counts: list[tuple[str, int]]
    class_counts: list[tuple[str, int]]
    recent_descriptions: list[str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "total": self.total,
                "identity_counts": [list(p) for p in self.identity_counts],
                "camera_counts": [list(p) for p in self.camera_counts],
                "class_counts": [list(p) for p in self.class_counts],
                "recent_descriptions": self.recent_descriptions,
            },
            ensure_ascii=False,
        )


def _ranked(counter: dict[str, int]) -> list[tuple[str, int]]:
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))


def summarize_history(
    events: Sequence[ThreatEvent],
    since_ms: int | None = None,
    until_ms: int | None = None,
    top_n: int = 5,
) -> HistorySummary:
    """Counts by identity, camera, and class plus the most recent descriptions."""
    selected = [
        e
        for e in events
        if (since_ms is None or e.timestamp >= since_ms)
        and (until_ms is None or e.timestamp <= until_ms)
    ]
    identities: dict[str, int] = {}
    cameras: dict[str, int] = {}
    classes: dict[str, int] = {}
    for event in selected:
        identities[event.identity] = identities.get(event.identity, 0) + 1
        cameras[event.camera_id] = cameras.get(event.camera_id, 0) + 1
        for name in event.classes:
            classes[name] = classes.get(name, 0) + 1
    recent = [e.description for e in sorted(selected, key=lambda e: -e.timestamp)[:top_n]]
    return HistorySummary(
        total=len(selected),
        identity_counts=_ranked(identities),
        camera_counts=_ranked(cameras),
        class_counts=_ranked(classes),
        recent_descriptions=recent,
    )


def prune_images(image_dir: str | Path, max_count: int | None, max_age_seconds: float | None,
                 now: float | None = None):
    """Apply the retention rule to saved scene images."""
    directory = Path(image_dir)
    if not directory.is_dir():
        return
    files = sorted(directory.glob("*.png"), key=lambda p: (p.stat().st_mtime, p.name))
    now = time.time() if now is None else now
    doomed = set()
    if max_age_seconds is not None:
        doomed.update(p for p in files if now - p.stat().st_mtime > max_age_seconds)
    if max_count is not None and len(files) > max_count:
        doomed.update(files[: len(files) - max_count])
    for path in doomed:
        path.unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# Pipeline.

FACE_REGIONS = ("ep", "hp", "bp", "mp")


class Pipeline:
    """Drives the full detection-to-notification flow for camera frames."""

    def __init__(
        self,
        *,
        locations: dict[str, str],
        backend: BackendSession,
        templates_provider: Callable[[], list],
        threshold: float,
        recognition_mode: str = "lbp",
        classifier: PatchClassifier | None = None,
        refiner: Refiner | None = None,
        change_params: ChangeParams = ChangeParams(),
        debounce: DebouncePolicy = DebouncePolicy(),
        dispatcher: Dispatcher | None = None,
        event_log: EventLog | None = None,
        image_dir: str | Path = "scene-images",
        clock: Callable[[], float] = time.time,
        notify_classes: Sequence[str] | None = None,
    ):
        self.locations = locations
        self.backend = backend
        self.templates_provider = templates_provider
        self.threshold = threshold
        self.recognition_mode = recognition_mode
        self.classifier = classifier
        self.refiner = refiner or IdentityRefiner()
        self.gate = ChangeGate(change_params)
        self.debounce_policy = debounce
        self.debounce = DebounceTable()
        self.dispatcher = dispatcher
        self.event_log = event_log
        self.image_dir = Path(image_dir)
        self.clock = clock
        self.notify_classes = set(notify_classes) if notify_classes else None
        self.errors: list[OperationalError] = []

    # -- helpers ---------------------------------------------------------

    def _record_error(self, frame: Frame, stage: str, message: str):
        self.errors.append(OperationalError(frame.camera_id, frame.seq, stage, message))
        log.warning("%s seq=%d %s: %s", frame.camera_id, frame.seq, stage, message)

    def _identify_face(self, frame: Frame, face: FaceDetection):
        chip = extract_chip(
            frame.pixels_gray, face.box.x, face.box.y, face.box.w, face.box.h
        )
        templates = self.templates_provider()
        if self.recognition_mode == "embedding":
            query = self.backend.embed_face(chip)
        else:
            query = lbp_histogram(chip)
        return identify(query, templates, self.threshold, mode=self.recognition_mode)

    def _classify_patches(self, frame: Frame, face: FaceDetection) -> tuple[dict, str | None]:
        patch_labels: dict[str, object] = {}
        hair = None
        patches = crop_face_patches(
            Alg1Inputs(face_image=frame.pixels_gray, rect=face.box, landmarks=face.landmarks)
        )
        if self.classifier is None:
            return patch_labels, hair
        for region in FACE_REGIONS:
            if not patches.valid[region]:
                continue
            outcome = classify_patch(self.classifier, region, patches.patch(region))
            if outcome is None:
                continue
            patch_labels[region] = outcome[0]
        if patch_labels.get("hp") is AttributeClass.HAIR:
            hair = hair_color(patches.hp)
        return patch_labels, hair

    def _person_crop_labels(self, frame: Frame, person: BoundingBox):
        if self.classifier is None or "person" not in self.classifier.centroids:
            return None
        crop = extract_chip(frame.pixels_gray, person.x, person.y, person.w, person.h)
        return person_labels(self.classifier, crop)

    def _describe(self, facts) -> str:
        sequence = facts_to_sequence(facts)
        return refine([sequence], self.refiner).rendered

    def _event_classes(self, patch_labels: dict) -> tuple[str, ...]:
        found = set()
        for region in FACE_REGIONS:
            label = patch_labels.get(region)
            if isinstance(label, AttributeClass):
                found.add(label)
        for label in patch_labels.get("person") or ():
            if isinstance(label, AttributeClass):
                found.add(label)
        return tuple(c.value for c in AttributeClass if c in found)

    def _save_scene(self, frame: Frame, event_id: str) -> str:
        self.image_dir.mkdir(parents=True, exist_ok=True)
        path = self.image_dir / f"{event_id}.png"
        path.write_bytes(images.encode_png(frame.pixels_rgb))
        return str(path)

    def _emit(self, frame: Frame, identity: str, patch_labels: dict, hair,
              person_without_face: bool) -> ThreatEvent:
        location = self.locations.get(frame.camera_id, frame.camera_id)
        facts = build_facts(identity, patch_labels, hair, location, person_without_face)
        description = self._describe(facts)
        event_id = str(uuid.uuid4())
        image_ref = self._save_scene(frame, event_id)
        classes = self._event_classes(patch_labels)

        event = ThreatEvent(
            event_id=event_id,
            timestamp=frame.timestamp_ms,
            camera_id=frame.camera_id,
            location_label=location,
            identity=identity,
            classes=classes,
            description=description,
            image_ref=image_ref,
            notified=False,
        )
        event = self._maybe_notify(event)
        if self.event_log is not None:
            self.event_log.append(event)
        return event

    def _maybe_notify(self, event: ThreatEvent) -> ThreatEvent:
        if self.dispatcher is None:
            return event
        if self.notify_classes is not None and not (
            self.notify_classes & set(event.classes)
        ):
            return event
        now_ms = int(self.clock() * 1000)
        if not self.debounce.should_notify(event, self.debounce_policy, now_ms):
            return event
        image_png = Path(event.image_ref).read_bytes() if event.image_ref else None
        results = self.dispatcher.notify_event(
            event.event_id, event.description, event.timestamp, image_png
        )
        delivered = any(r.ok for r in results)
        for result in results:
            if not result.ok:
                log.warning(
                    "delivery failed for %s via %s to %s: %s",
                    event.event_id, result.mode, result.recipient, result.error,
                )
        if delivered:
            self.debounce.mark_notified(event, now_ms)
            return ThreatEvent(**{**event.__dict__, "notified": True})
        return event

    # -- main entry point --------------------------------------------------

    def process_frame(self, frame: Frame) -> list[ThreatEvent]:
        """Run one frame through the pipeline, returning emitted events."""
        if not self.gate.admit(frame):
            return []
        try:
            persons = self.backend.detect_persons(frame)
        except BackendUnavailableError as exc:
            self._record_error(frame, "person_detect", str(exc))
            return []

        events: list[ThreatEvent] = []
        if persons:
            for person in persons:
                try:
                    faces = self.backend.detect_faces(frame, within=person)
                except BackendUnavailableError as exc:
                    self._record_error(frame, "face_detect", str(exc))
                    continue
                events.append(self._process_person(frame, person, faces))
        else:
            try:
                faces = self.backend.detect_faces(frame)
            except BackendUnavailableError as exc:
                self._record_error(frame, "face_detect", str(exc))
                return events
            for face in faces:
                events.append(self._process_face_only(frame, face))
        return events

    def _process_person(
        self, frame: Frame, person: BoundingBox, faces: list[FaceDetection]
    ) -> ThreatEvent:
        patch_labels: dict[str, object] = {}
        hair = None
        identity = UNKNOWN
        person_without_face = not faces
        if faces:
            face = faces[0]
            try:
                identity = self._identify_face(frame, face).identity
            except BackendUnavailableError as exc:
                self._record_error(frame, "identify", str(exc))
            patch_labels, hair = self._classify_patches(frame, face)
        found = self._person_crop_labels(frame, person)
        if found is not None:
            patch_labels["person"] = found
        return self._emit(frame, identity, patch_labels, hair, person_without_face)

    def _process_face_only(self, frame: Frame, face: FaceDetection) -> ThreatEvent:
        identity = UNKNOWN
        try:
            identity = self._identify_face(frame, face).identity
        except BackendUnavailableError as exc:
            self._record_error(frame, "identify", str(exc))
        patch_labels, hair = self._classify_patches(frame, face)
        return self._emit(frame, identity, patch_labels, hair, person_without_face=False)
