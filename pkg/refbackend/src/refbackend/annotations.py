"""Annotation sets: image digest -> recorded detections.

Schema::

    {
      "<sha256 hex of PNG bytes>": {
        "persons": [{"box": [x, y, w, h], "score": 0.98}, ...],
        "faces": [{"box": [...], "score": 0.9, "landmarks": [[x, y] * 68]}, ...],
        "embedding": [...],
        "classify": {"<region>": [["label", margin], ...]}
      }
    }
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

LANDMARK_COUNT = 68


def image_id(data: bytes) -> str:
    """Lowercase hex content digest of image bytes."""
    return hashlib.sha256(data).hexdigest()


def validate(annotations: dict) -> None:
    """Reject structurally broken annotation sets."""
    if not isinstance(annotations, dict):
        raise ValueError("annotation root must be an object")
    for digest, entry in annotations.items():
        if not isinstance(entry, dict):
            raise ValueError(f"{digest}: entry must be an object")
        for person in entry.get("persons", []):
            box = person.get("box")
            if not (isinstance(box, list) and len(box) == 4):
                raise ValueError(f"{digest}: person box must be [x, y, w, h]")
        for face in entry.get("faces", []):
            box = face.get("box")
            if not (isinstance(box, list) and len(box) == 4):
                raise ValueError(f"{digest}: face box must be [x, y, w, h]")
            landmarks = face.get("landmarks")
            if not (isinstance(landmarks, list) and len(landmarks) == LANDMARK_COUNT):
                raise ValueError(
                    f"{digest}: face landmarks must hold exactly {LANDMARK_COUNT} points"
                )


def load(path: str | Path) -> dict:
    annotations = json.loads(Path(path).read_text(encoding="utf-8"))
    validate(annotations)
    return annotations


def verify_images(annotations: dict, images_dir: str | Path) -> list[str]:
    """Digests in the set with no matching file under images_dir."""
    present = {
        image_id(p.read_bytes())
        for p in Path(images_dir).iterdir()
        if p.is_file()
    }
    return sorted(d for d in annotations if d not in present)
