"""Request handling shared by both transports.

One JSON object in, one JSON object out. Responses serialize with sorted
keys and fixed separators so identical requests produce identical bytes
on every run and platform.
"""

from __future__ import annotations

import base64
import json

from .annotations import image_id

TASKS = ("person_detect", "face_detect", "landmarks", "embed", "classify")
DEFAULT_EMBED_DIM = 128


def encode_response(response: dict) -> str:
    return json.dumps(response, sort_keys=True, separators=(",", ":"))


def error_response(request_id, message: str) -> dict:
    return {"id": request_id, "ok": False, "error": message}


class StubEngine:
    """Pure function of (annotation set, request)."""

    def __init__(self, annotations: dict, strict: bool = False):
        self.annotations = annotations
        self.strict = strict

    def embed_dim(self) -> int:
        for digest in sorted(self.annotations):
            embedding = self.annotations[digest].get("embedding")
            if embedding:
                return len(embedding)
        return DEFAULT_EMBED_DIM

    def handle(self, request) -> dict:
        if not isinstance(request, dict):
            return error_response("?", "request must be a JSON object")
        rid = request.get("id")
        task = request.get("task")
        if task == "hello":
            return {
                "id": rid,
                "ok": True,
                "tasks": list(TASKS),
                "embed_dim": self.embed_dim(),
            }
        if task not in TASKS:
            return error_response(rid, f"unknown task {task!r}")

        image_b64 = request.get("image")
        if not image_b64:
            return error_response(rid, "request has no image")
        try:
            digest = image_id(base64.b64decode(image_b64))
        except (ValueError, TypeError) as exc:
            return error_response(rid, f"image is not valid base64: {exc}")
        entry = self.annotations.get(digest)
        if entry is None:
            if self.strict:
                return error_response(rid, f"unknown image {digest}")
            entry = {}
        params = request.get("params") or {}

        if task == "person_detect":
            return {"id": rid, "ok": True, "detections": entry.get("persons", [])}
        if task == "face_detect":
            faces = _faces_within(entry.get("faces", []), params.get("within"))
            return {
                "id": rid,
                "ok": True,
                "detections": [
                    {"box": f["box"], "score": f.get("score", 1.0)} for f in faces
                ],
                "landmarks": [f["landmarks"] for f in faces],
            }
        if task == "landmarks":
            faces = _faces_within(entry.get("faces", []), params.get("box"))
            return {"id": rid, "ok": True, "landmarks": [f["landmarks"] for f in faces]}
        if task == "embed":
            embedding = entry.get("embedding")
            if embedding is None:
                if self.strict:
                    return error_response(rid, "no embedding recorded")
                embedding = [0.0] * self.embed_dim()
            return {"id": rid, "ok": True, "embedding": embedding}
        # classify
        region = params.get("region", "person")
        labels = entry.get("classify", {}).get(region, [])
        return {"id": rid, "ok": True, "labels": labels}


def _faces_within(faces: list, within) -> list:
    if within is None:
        return faces
    try:
        wx, wy, ww, wh = (int(v) for v in within)
    except (TypeError, ValueError):
        return faces
    kept = []
    for face in faces:
        x, y, w, h = (int(v) for v in face["box"])
        cx, cy = x + w // 2, y + h // 2
        if wx <= cx < wx + ww and wy <= cy < wy + wh:
            kept.append(face)
    return kept


def handle_line(engine, line: str) -> str:
    """One request line to one response line; never raises."""
    try:
        request = json.loads(line)
    except json.JSONDecodeError as exc:
        return encode_response(error_response("?", f"unparseable request: {exc.msg}"))
    try:
        return encode_response(engine.handle(request))
    except Exception as exc:  # a bad request must not kill the server
        rid = request.get("id", "?") if isinstance(request, dict) else "?"
        return encode_response(error_response(rid, f"internal error: {exc}"))
