"""Pluggable inference backend: wire protocol client and test stub.

Detection models (person boxes, face boxes + 68-point landmarks, face
embeddings, optional patch classification) sit behind a JSON
request/response contract:

  request:  {"id": str, "task": str, "image": base64 PNG, "params": {...}}
  response: {"id": echo, "ok": bool, ...task fields..., "error": str}

Task fields: ``detections`` is a list of ``{"box": [x, y, w, h],
"score": float}``; ``landmarks`` is a list of 68-point ``[x, y]`` lists,
one entry per detected face; ``embedding`` is a flat float list;
``labels`` (classify extension) is a list of ``[label, margin]`` pairs.
The first exchange on a connection is ``{"task": "hello"}`` answered with
``{"ok": true, "tasks": [...], "embed_dim": N}``.

Transports: newline-delimited JSON over a child process's stdio, HTTP
POST of the same bodies, or the in-process annotation-driven stub used
throughout the tests. Annotation files map image ids (lowercase sha256
hex of the PNG bytes) to recorded persons/faces/embedding.
"""

from __future__ import annotations

import base64
import hashlib
import json
import queue
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import requests

from . import images
from .errors import BackendUnavailableError, InvalidInputError

if TYPE_CHECKING:
    from .ingest import Frame

MIN_FACE_SIDE = 20
DEFAULT_TIMEOUT = 5.0
LANDMARK_COUNT = 68


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int
    score: float = 1.0

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise InvalidInputError(f"box sides must be >= 1, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise InvalidInputError(f"box origin must be >= 0, got ({self.x}, {self.y})")
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"box score {self.score} outside [0, 1]")

    def clamped(self, frame_w: int, frame_h: int) -> "BoundingBox":
        x = min(self.x, frame_w - 1)
        y = min(self.y, frame_h - 1)
        return BoundingBox(x, y, min(self.w, frame_w - x), min(self.h, frame_h - y), self.score)

    def contains_point(self, px: int, py: int) -> bool:
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h

    @property
    def center(self) -> tuple[int, int]:
        return (self.x + self.w // 2, self.y + self.h // 2)


@dataclass(frozen=True)
class Landmarks68:
    """The standard 68-point face annotation: jaw 0-16, brows 17-26,
    nose 27-35, eyes 36-47, mouth 48-67."""

    points: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if len(self.points) != LANDMARK_COUNT:
            raise InvalidInputError(f"expected 68 landmark points, got {len(self.points)}")

    def clamped(self, frame_w: int, frame_h: int) -> "Landmarks68":
        pts = tuple(
            (min(max(x, 0), frame_w - 1), min(max(y, 0), frame_h - 1)) for x, y in self.points
        )
        return Landmarks68(pts)

    def translated(self, dx: int, dy: int) -> "Landmarks68":
        return Landmarks68(tuple((x + dx, y + dy) for x, y in self.points))


@dataclass(frozen=True)
class FaceDetection:
    box: BoundingBox
    landmarks: Landmarks68


def image_id(png_bytes: bytes) -> str:
    """Content identifier for an image: lowercase sha256 hex of its PNG bytes."""
    return hashlib.sha256(png_bytes).hexdigest()


def _box_json(box) -> list[int]:
    return [int(box[0]), int(box[1]), int(box[2]), int(box[3])]


def _parse_box(obj, what: str) -> BoundingBox:
    try:
        x, y, w, h = (int(v) for v in obj["box"])
        return BoundingBox(x, y, w, h, float(obj.get("score", 1.0)))
    except (KeyError, TypeError, ValueError, InvalidInputError) as exc:
        raise BackendUnavailableError(f"malformed {what} in backend reply: {exc}") from exc


def _parse_landmarks(obj, what: str) -> Landmarks68:
    try:
        pts = tuple((int(p[0]), int(p[1])) for p in obj)
        return Landmarks68(pts)
    except (TypeError, ValueError, IndexError, InvalidInputError) as exc:
        raise BackendUnavailableError(f"malformed {what} in backend reply: {exc}") from exc


# ---------------------------------------------------------------------------
# Raw transports: each turns one request object into one response object.


class InProcessStub:
    """Deterministic annotation-driven backend, no models, no wire.

    A pure function of (annotation set, request); lenient mode answers
    unknown images with empty results, strict mode reports an error.
    """

    def __init__(self, annotations: dict | str | Path, strict: bool = False):
        if not isinstance(annotations, dict):
            annotations = json.loads(Path(annotations).read_text(encoding="utf-8"))
        self.annotations = annotations
        self.strict = strict

    def infer(self, request: dict) -> dict:
        task = request.get("task")
        rid = request.get("id")
        if task == "hello":
            return {
                "id": rid,
                "ok": True,
                "tasks": ["person_detect", "face_detect", "landmarks", "embed", "classify"],
                "embed_dim": self._embed_dim(),
            }
        entry, error = self._lookup(request)
        if error is not None:
            return {"id": rid, "ok": False, "error": error}
        params = request.get("params") or {}
        if task == "person_detect":
            return {"id": rid, "ok": True, "detections": entry.get("persons", [])}
        if task == "face_detect":
            faces = _faces_within(entry.get("faces", []), params.get("within"))
            return {
                "id": rid,
                "ok": True,
                "detections": [{"box": f["box"], "score": f.get("score", 1.0)} for f in faces],
                "landmarks": [f["landmarks"] for f in faces],
            }
        if task == "landmarks":
            faces = _faces_within(entry.get("faces", []), params.get("box"))
            return {"id": rid, "ok": True, "landmarks": [f["landmarks"] for f in faces]}
        if task == "embed":
            embedding = entry.get("embedding")
            if embedding is None:
                if self.strict:
                    return {"id": rid, "ok": False, "error": "no embedding recorded"}
                embedding = [0.0] * self._embed_dim()
            return {"id": rid, "ok": True, "embedding": embedding}
        if task == "classify":
            region = params.get("region", "person")
            labels = entry.get("classify", {}).get(region, [])
            return {"id": rid, "ok": True, "labels": labels}
        return {"id": rid, "ok": False, "error": f"unknown task {task!r}"}

    def _embed_dim(self) -> int:
        for key in sorted(self.annotations):
            embedding = self.annotations[key].get("embedding")
            if embedding:
                return len(embedding)
        return 128

    def _lookup(self, request: dict):
        image_b64 = request.get("image")
        if not image_b64:
            return None, "request has no image"
        digest = image_id(base64.b64decode(image_b64))
        entry = self.annotations.get(digest)
        if entry is None:
            if self.strict:
                return None, f"unknown image {digest}"
            return {}, None
        return entry, None

    def close(self):
        pass


def _faces_within(faces: list, within) -> list:
    if within is None:
        return faces
    wx, wy, ww, wh = (int(v) for v in within)
    kept = []
    for face in faces:
        x, y, w, h = (int(v) for v in face["box"])
        cx, cy = x + w // 2, y + h // 2
        if wx <= cx < wx + ww and wy <= cy < wy + wh:
            kept.append(face)
    return kept


class SubprocessBackend:
    """JSON-lines client for a backend running as a child process."""

    def __init__(self, cmd: list[str], timeout: float = DEFAULT_TIMEOUT):
        self.cmd = cmd
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()

    def _ensure_started(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        self._proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            encoding="utf-8",
        )
        self._lines = queue.Queue()
        thread = threading.Thread(target=self._reader, args=(self._proc,), daemon=True)
        thread.start()

    def _reader(self, proc: subprocess.Popen):
        for line in proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def infer(self, request: dict) -> dict:
        with self._lock:
            self._ensure_started()
            try:
                self._proc.stdin.write(json.dumps(request) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._kill()
                raise BackendUnavailableError(f"backend process write failed: {exc}") from exc
            # Re-associate replies by id: skip stray lines until ours shows up.
            while True:
                try:
                    line = self._lines.get(timeout=self.timeout)
                except queue.Empty:
                    self._kill()
                    raise BackendUnavailableError(
                        f"backend timed out after {self.timeout}s"
                    ) from None
                if line is None:
                    self._kill()
                    raise BackendUnavailableError("backend process closed its output")
                try:
                    response = json.loads(line)
                except json.JSONDecodeError as exc:
                    self._kill()
                    raise BackendUnavailableError(f"unparseable backend reply: {exc}") from exc
                if isinstance(response, dict) and response.get("id") == request["id"]:
                    return response

    def _kill(self):
        if self._proc is not None:
            try:
                self._proc.kill()
            except OSError:
                pass
            self._proc = None

    def close(self):
        with self._lock:
            if self._proc is not None and self._proc.poll() is None:
                try:
                    self._proc.stdin.close()
                    self._proc.wait(timeout=2)
                except (OSError, subprocess.TimeoutExpired):
                    self._kill()
            self._proc = None


class HttpBackend:
    """HTTP transport: POST the request object to the configured endpoint."""

    def __init__(self, endpoint: str, timeout: float = DEFAULT_TIMEOUT):
        self.endpoint = endpoint
        self.timeout = timeout
        self._session = requests.Session()

    def infer(self, request: dict) -> dict:
        try:
            reply = self._session.post(self.endpoint, json=request, timeout=self.timeout)
            reply.raise_for_status()
            return reply.json()
        except (requests.RequestException, ValueError) as exc:
            raise BackendUnavailableError(f"http backend failed: {exc}") from exc

    def close(self):
        self._session.close()


# ---------------------------------------------------------------------------
# Typed client session on top of a raw transport.


class BackendSession:
    """Typed inference client enforcing the protocol invariants.

    One request in flight at a time; response ids must echo request ids;
    returned geometry is clamped into the frame; faces under 20x20 are
    dropped; detections come back sorted by descending score.
    """

    def __init__(self, raw):
        self._raw = raw
        self._lock = threading.Lock()
        self._next_id = 0
        self._hello: dict | None = None

    def _request(self, task: str, image_png: bytes | None, params: dict | None = None) -> dict:
        with self._lock:
            self._next_id += 1
            request: dict = {"id": str(self._next_id), "task": task}
            if image_png is not None:
                request["image"] = base64.b64encode(image_png).decode("ascii")
            if params:
                request["params"] = params
            response = self._raw.infer(request)
        if not isinstance(response, dict) or "id" not in response:
            raise BackendUnavailableError("backend reply is missing its id")
        if response["id"] != request["id"]:
            raise BackendUnavailableError(
                f"backend reply id {response['id']!r} does not match request {request['id']!r}"
            )
        if not response.get("ok"):
            raise BackendUnavailableError(
                f"backend error for task {task!r}: {response.get('error', 'unspecified')}"
            )
        return response

    def _handshake(self) -> dict:
        if self._hello is None:
            self._hello = self._request("hello", None)
        return self._hello

    @property
    def tasks(self) -> list[str]:
        return list(self._handshake().get("tasks", []))

    @property
    def embed_dim(self) -> int:
        return int(self._handshake().get("embed_dim", 0))

    def detect_persons(self, frame: "Frame") -> list[BoundingBox]:
        self._handshake()
        response = self._request("person_detect", images.encode_png(frame.pixels_rgb))
        boxes = [
            _parse_box(d, "person detection").clamped(frame.width, frame.height)
            for d in response.get("detections", [])
        ]
        return sorted(boxes, key=lambda b: -b.score)

    def detect_faces(self, frame: "Frame", within: BoundingBox | None = None) -> list[FaceDetection]:
        self._handshake()
        params = {"within": _box_json((within.x, within.y, within.w, within.h))} if within else {}
        response = self._request("face_detect", images.encode_png(frame.pixels_rgb), params)
        detections = response.get("detections", [])
        landmark_sets = response.get("landmarks", [])
        if len(detections) != len(landmark_sets):
            raise BackendUnavailableError(
                "face_detect reply has mismatched detections and landmarks"
            )
        faces = []
        for det, lm in zip(detections, landmark_sets):
            box = _parse_box(det, "face detection").clamped(frame.width, frame.height)
            if box.w < MIN_FACE_SIDE or box.h < MIN_FACE_SIDE:
                continue
            points = _parse_landmarks(lm, "landmarks").clamped(frame.width, frame.height)
            faces.append(FaceDetection(box, points))
        return sorted(faces, key=lambda f: -f.box.score)

    def embed_face(self, chip: np.ndarray) -> np.ndarray:
        if chip.size == 0:
            raise InvalidInputError("cannot embed an empty chip")
        self._handshake()
        response = self._request("embed", images.encode_png(chip))
        values = np.asarray(response.get("embedding", []), dtype=np.float64)
        if values.ndim != 1 or values.size != self.embed_dim:
            raise BackendUnavailableError(
                f"embedding length {values.size} does not match declared {self.embed_dim}"
            )
        if not np.all(np.isfinite(values)):
            raise BackendUnavailableError("embedding contains non-finite values")
        return values

    def classify(self, patch: np.ndarray, region: str) -> list[tuple[str, float]]:
        """Optional classify task; only valid when advertised in tasks."""
        response = self._request("classify", images.encode_png(patch), {"region": region})
        try:
            return [(str(label), float(margin)) for label, margin in response.get("labels", [])]
        except (TypeError, ValueError) as exc:
            raise BackendUnavailableError(f"malformed classify labels: {exc}") from exc

    def close(self):
        self._raw.close()


def open_backend(kind: str, *, annotations=None, cmd=None, endpoint=None,
                 strict: bool = False, timeout: float = DEFAULT_TIMEOUT) -> BackendSession:
    """Construct a session for one of the configured backend kinds."""
    if kind == "stub":
        if annotations is None:
            raise InvalidInputError("stub backend requires an annotations file")
        return BackendSession(InProcessStub(annotations, strict=strict))
    if kind == "subprocess":
        if not cmd:
            raise InvalidInputError("subprocess backend requires a command")
        return BackendSession(SubprocessBackend(cmd, timeout))
    if kind == "http":
        if not endpoint:
            raise InvalidInputError("http backend requires an endpoint")
        return BackendSession(HttpBackend(endpoint, timeout))
    raise InvalidInputError(f"unknown backend kind {kind!r}")
