"""Best-effort real-model mode.

Wraps pre-trained OpenCV models behind the stub's response schema: a
YuNet face detector (``--face-model`` ONNX) and optionally an SFace
embedder (``--embed-model``). Person boxes are derived from face boxes,
and the 68-point landmark sets are a proportional template laid into
each face box. Outputs are schema-valid, nothing more; this mode is
excluded from CI and never used for fixture-equality tests.
"""

from __future__ import annotations

import base64

from .protocol import TASKS, error_response

_FACE_TEMPLATE = None


def landmark_template():
    """68 (u, v) positions in [0, 1]^2 roughly following the annotation
    convention: jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, mouth 48-67."""
    global _FACE_TEMPLATE
    if _FACE_TEMPLATE is not None:
        return _FACE_TEMPLATE
    points = []
    for i in range(17):  # jaw arc
        u = i / 16
        v = 0.55 + 0.45 * (1 - abs(u - 0.5) * 2) ** 0.5
        points.append((u, min(v, 1.0)))
    for i in range(5):  # right brow
        points.append((0.12 + 0.06 * i, 0.30))
    for i in range(5):  # left brow
        points.append((0.58 + 0.06 * i, 0.30))
    for i in range(4):  # nose bridge
        points.append((0.5, 0.35 + 0.06 * i))
    for i in range(5):  # nose base
        points.append((0.38 + 0.06 * i, 0.60))
    for i in range(6):  # right eye
        points.append((0.22 + 0.04 * i, 0.40))
    for i in range(6):  # left eye
        points.append((0.58 + 0.04 * i, 0.40))
    for i in range(20):  # mouth
        points.append((0.30 + 0.02 * i, 0.78))
    assert len(points) == 68
    _FACE_TEMPLATE = points
    return points


class ModelEngine:
    """OpenCV-model-backed engine answering the same tasks as the stub."""

    def __init__(self, face_model: str, embed_model: str | None = None,
                 embed_dim: int = 128):
        try:
            import cv2
            import numpy as np
        except ImportError as exc:
            raise RuntimeError(
                "model mode needs opencv-python-headless and numpy "
                "(pip install 'refbackend[model]')"
            ) from exc
        if not face_model:
            raise RuntimeError(
                "model mode needs --face-model pointing at a YuNet ONNX file"
            )
        if not hasattr(cv2, "FaceDetectorYN_create"):
            raise RuntimeError("this OpenCV build has no FaceDetectorYN")
        self.cv2 = cv2
        self.np = np
        self.detector = cv2.FaceDetectorYN_create(face_model, "", (320, 320))
        self.embedder = None
        if embed_model:
            self.embedder = cv2.FaceRecognizerSF_create(embed_model, "")
        self.embed_dim = embed_dim

    def _decode(self, image_b64: str):
        data = base64.b64decode(image_b64)
        raster = self.cv2.imdecode(
            self.np.frombuffer(data, dtype=self.np.uint8), self.cv2.IMREAD_COLOR
        )
        if raster is None:
            raise ValueError("undecodable image")
        return raster

    def _detect_faces(self, raster):
        h, w = raster.shape[:2]
        self.detector.setInputSize((w, h))
        _, rows = self.detector.detect(raster)
        faces = []
        if rows is not None:
            for row in rows:
                x, y, fw, fh = (int(v) for v in row[:4])
                score = float(min(max(row[-1], 0.0), 1.0))
                faces.append((max(x, 0), max(y, 0), max(fw, 1), max(fh, 1), score))
        return faces

    def handle(self, request) -> dict:
        if not isinstance(request, dict):
            return error_response("?", "request must be a JSON object")
        rid = request.get("id")
        task = request.get("task")
        if task == "hello":
            # embed is always advertised: SFace when provided, a normalized
            # resized-pixel vector otherwise.
            tasks = ["person_detect", "face_detect", "landmarks", "embed"]
            return {"id": rid, "ok": True, "tasks": tasks, "embed_dim": self.embed_dim}
        if task not in TASKS:
            return error_response(rid, f"unknown task {task!r}")
        try:
            raster = self._decode(request.get("image") or "")
        except (ValueError, TypeError) as exc:
            return error_response(rid, str(exc))

        if task == "person_detect":
            # No bundled person model: a person box is estimated around each
            # detected face (torso extent below, margins at the sides).
            h, w = raster.shape[:2]
            detections = []
            for x, y, fw, fh, score in self._detect_faces(raster):
                px = max(x - fw, 0)
                py = max(y - fh // 2, 0)
                pw = min(3 * fw, w - px)
                ph = min(6 * fh, h - py)
                detections.append({"box": [px, py, max(pw, 1), max(ph, 1)],
                                   "score": score})
            return {"id": rid, "ok": True, "detections": detections}
        if task in ("face_detect", "landmarks"):
            detections, landmark_sets = [], []
            for x, y, fw, fh, score in self._detect_faces(raster):
                detections.append({"box": [x, y, fw, fh], "score": score})
                landmark_sets.append(
                    [[int(x + u * fw), int(y + v * fh)] for u, v in landmark_template()]
                )
            if task == "landmarks":
                return {"id": rid, "ok": True, "landmarks": landmark_sets}
            return {"id": rid, "ok": True, "detections": detections,
                    "landmarks": landmark_sets}
        if task == "embed":
            if self.embedder is not None:
                aligned = self.cv2.resize(raster, (112, 112))
                values = self.embedder.feature(aligned).reshape(-1)
            else:
                gray = self.cv2.cvtColor(raster, self.cv2.COLOR_BGR2GRAY)
                small = self.cv2.resize(
                    gray, (self.embed_dim // 8, 8), interpolation=self.cv2.INTER_AREA
                ).astype(self.np.float64).reshape(-1)
                norm = self.np.linalg.norm(small)
                values = (small / norm) if norm > 0 else small
            values = list(values)[: self.embed_dim]
            values += [0.0] * (self.embed_dim - len(values))
            return {"id": rid, "ok": True, "embedding": [float(v) for v in values]}
        return error_response(rid, "classify is not available in model mode")
