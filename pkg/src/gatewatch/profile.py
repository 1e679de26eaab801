"""Personal-profile store: enrollment, views, deletion, summary.

Layout on disk::

    profile_root/
      index.json                 # {"persons": {person_id: name}}
      snapshots/snapshot-N.npz   # last K recognition snapshots
      <person_id>/meta.json      # demographics + chip list
      <person_id>/chips/NNN.png

Every metadata write goes through write-new-then-rename, so a crash
between the two leaves either the old or the new state, never a torn
file. Recognition reads an immutable template snapshot that enrollment
operations swap out whole.
"""

from __future__ import annotations

import json
import re
import shutil
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import images
from .errors import ConflictError, InvalidInputError, NotFoundError, QualityError, StorageError
from .recognize import FaceTemplate, lbp_histogram

MIN_CHIP_SIDE = 20

# Laplacian-variance floor below which a chip counts as blurry. Calibrated
# on the bundled sharp/blurred fixture pairs (see tests/fixtures/
# calibration.json); override per deployment.
DEFAULT_BLUR_FLOOR = 306.8

SNAPSHOT_KEEP = 3


def laplacian_variance(gray: np.ndarray) -> float:
    """Variance of the 4-neighbor discrete Laplacian over interior pixels."""
    if gray.ndim == 3:
        gray = images.rgb_to_gray(gray)
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        return 0.0
    g = gray.astype(np.float64)
    lap = g[:-2, 1:-1] + g[2:, 1:-1] + g[1:-1, :-2] + g[1:-1, 2:] - 4.0 * g[1:-1, 1:-1]
    return float(lap.var())


def quality_check(chip: np.ndarray, blur_floor: float = DEFAULT_BLUR_FLOOR) -> list[str]:
    """Reasons a chip fails enrollment; empty list means it passes."""
    reasons = []
    if chip.ndim not in (2, 3) or min(chip.shape[0], chip.shape[1]) < MIN_CHIP_SIDE:
        reasons.append("below 20x20")
    elif laplacian_variance(chip) < blur_floor:
        reasons.append("blurry")
    return reasons


def _slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug or "person"


def _write_atomic(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


@dataclass
class PersonRecord:
    person_id: str
    name: str
    email: str
    contact: str
    templates: list[FaceTemplate]
    created_ms: int
    updated_ms: int


@dataclass
class AddViewsResult:
    accepted: int
    duplicates: int
    rejected: dict[str, list[str]]

    @property
    def warning(self) -> str | None:
        if self.accepted == 0:
            return "no new views accepted"
        return None


class ProfileStore:
    """Single-writer store of enrolled persons and their face templates."""

    def __init__(
        self,
        root: str | Path,
        blur_floor: float = DEFAULT_BLUR_FLOOR,
        embedder: Callable[[np.ndarray], np.ndarray] | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.root = Path(root)
        self.blur_floor = blur_floor
        self.embedder = embedder
        self.clock = clock
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "snapshots").mkdir(exist_ok=True)
        self._index = self._load_index()
        self._templates: list[FaceTemplate] = []
        if not self._load_latest_snapshot():
            self._rebuild_snapshot()

    # -- index and metadata ------------------------------------------------

    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _load_index(self) -> dict[str, str]:
        path = self._index_path()
        if not path.exists():
            return {}
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            return dict(payload["persons"])
        except (OSError, ValueError, KeyError) as exc:
            raise StorageError(f"profile index unreadable: {exc}") from exc

    def _save_index(self):
        data = json.dumps({"format": "profile-v1", "persons": self._index}, indent=2)
        _write_atomic(self._index_path(), data.encode("utf-8"))

    def _meta_path(self, person_id: str) -> Path:
        return self.root / person_id / "meta.json"

    def _load_meta(self, person_id: str) -> dict:
        try:
            return json.loads(self._meta_path(person_id).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise StorageError(f"person {person_id} metadata unreadable: {exc}") from exc

    def _save_meta(self, meta: dict):
        path = self._meta_path(meta["person_id"])
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_atomic(path, json.dumps(meta, indent=2).encode("utf-8"))

    # -- templates and snapshots --------------------------------------------

    def templates(self) -> list[FaceTemplate]:
        """Immutable snapshot of all enrolled templates."""
        return list(self._templates)

    def _person_templates(self, meta: dict) -> list[FaceTemplate]:
        out = []
        for rel in meta["chips"]:
            chip_path = self.root / meta["person_id"] / rel
            gray = images.rgb_to_gray(images.decode_image(chip_path.read_bytes()))
            embedding = self.embedder(gray) if self.embedder else None
            out.append(
                FaceTemplate(
                    person_id=meta["person_id"],
                    person_name=meta["name"],
                    histogram=lbp_histogram(gray),
                    embedding=embedding,
                    source_image_ref=f"{meta['person_id']}/{rel}",
                )
            )
        return out

    def _rebuild_snapshot(self):
        templates: list[FaceTemplate] = []
        for person_id in sorted(self._index):
            templates.extend(self._person_templates(self._load_meta(person_id)))
        self._templates = templates
        self._persist_snapshot()

    def _snapshot_dir(self) -> Path:
        return self.root / "snapshots"

    def _persist_snapshot(self):
        existing = sorted(self._snapshot_dir().glob("snapshot-*.npz"))
        next_seq = 0
        if existing:
            next_seq = max(int(p.stem.split("-")[1]) for p in existing) + 1
        path = self._snapshot_dir() / f"snapshot-{next_seq:06d}.npz"
        hists = (
            np.stack([t.histogram for t in self._templates])
            if self._templates
            else np.zeros((0, 0))
        )
        embeddings = None
        if self._templates and all(t.embedding is not None for t in self._templates):
            embeddings = np.stack([t.embedding for t in self._templates])
        meta = [[t.person_id, t.person_name, t.source_image_ref] for t in self._templates]
        tmp = path.with_name(path.name + ".tmp.npz")
        with open(tmp, "wb") as fh:
            if embeddings is None:
                np.savez(fh, histograms=hists, meta=np.array(meta, dtype=str))
            else:
                np.savez(
                    fh, histograms=hists, embeddings=embeddings, meta=np.array(meta, dtype=str)
                )
        tmp.replace(path)
        for old in sorted(self._snapshot_dir().glob("snapshot-*.npz"))[:-SNAPSHOT_KEEP]:
            old.unlink()

    def _load_latest_snapshot(self) -> bool:
        snapshots = sorted(self._snapshot_dir().glob("snapshot-*.npz"))
        if not snapshots:
            return False
        try:
            with np.load(snapshots[-1], allow_pickle=False) as payload:
                meta = payload["meta"]
                hists = payload["histograms"]
                embeddings = payload["embeddings"] if "embeddings" in payload else None
                templates = []
                for i in range(meta.shape[0]):
                    person_id, name, ref = (str(v) for v in meta[i])
                    if person_id not in self._index:
                        return False  # stale snapshot; rebuild from chips
                    templates.append(
                        FaceTemplate(
                            person_id=person_id,
                            person_name=name,
                            histogram=hists[i],
                            embedding=None if embeddings is None else embeddings[i],
                            source_image_ref=ref,
                        )
                    )
        except (OSError, ValueError, KeyError):
            return False
        named = {t.person_id for t in templates}
        if named != set(self._index):
            return False
        self._templates = templates
        return True

    # -- operations ----------------------------------------------------------

    def _gate_chips(self, chips: Sequence[np.ndarray]):
        accepted, rejected = [], {}
        for i, chip in enumerate(chips):
            reasons = quality_check(chip, self.blur_floor)
            if reasons:
                rejected[f"chip[{i}]"] = reasons
            else:
                accepted.append(chip)
        return accepted, rejected

    def _unique_person_id(self, name: str) -> str:
        base = _slugify(name)
        candidate = base
        suffix = 2
        while candidate in self._index or (self.root / candidate).exists():
            candidate = f"{base}-{suffix}"
            suffix += 1
        return candidate

    def add_person(
        self, name: str, email: str, contact: str, chips: Sequence[np.ndarray]
    ) -> PersonRecord:
        if not name:
            raise InvalidInputError("person name must be non-empty")
        lowered = {n.lower() for n in self._index.values()}
        if name.lower() in lowered:
            raise ConflictError(f"person named {name!r} already enrolled")
        accepted, rejected = self._gate_chips(chips)
        if not accepted:
            raise QualityError(f"all {len(chips)} chips rejected", reasons=rejected)

        person_id = self._unique_person_id(name)
        now = int(self.clock() * 1000)
        chips_dir = self.root / person_id / "chips"
        chips_dir.mkdir(parents=True, exist_ok=True)
        rels = []
        for i, chip in enumerate(accepted):
            rel = f"chips/{i:03d}.png"
            (self.root / person_id / rel).write_bytes(images.encode_png(chip))
            rels.append(rel)
        meta = {
            "person_id": person_id,
            "name": name,
            "email": email,
            "contact": contact,
            "created_ms": now,
            "updated_ms": now,
            "chips": rels,
        }
        self._save_meta(meta)
        self._index[person_id] = name
        self._save_index()
        self._rebuild_snapshot()
        return self._record(meta)

    def add_views(self, person_id: str, chips: Sequence[np.ndarray]):
        if person_id not in self._index:
            raise NotFoundError(f"no person {person_id!r}")
        meta = self._load_meta(person_id)
        existing = {
            (self.root / person_id / rel).read_bytes() for rel in meta["chips"]
        }
        accepted, rejected = self._gate_chips(chips)
        fresh = []
        duplicates = 0
        for chip in accepted:
            png = images.encode_png(chip)
            if png in existing:
                duplicates += 1
                continue
            existing.add(png)
            fresh.append(png)
        if fresh:
            start = len(meta["chips"])
            for i, png in enumerate(fresh):
                rel = f"chips/{start + i:03d}.png"
                (self.root / person_id / rel).write_bytes(png)
                meta["chips"].append(rel)
            meta["updated_ms"] = int(self.clock() * 1000)
            self._save_meta(meta)
            self._rebuild_snapshot()
        return self._record(meta), AddViewsResult(len(fresh), duplicates, rejected)

    def delete_person(self, person_id: str):
        if person_id not in self._index:
            raise NotFoundError(f"no person {person_id!r}")
        del self._index[person_id]
        self._save_index()
        target = self.root / person_id
        trash = self.root / f".{person_id}.deleted"
        if target.exists():
            target.replace(trash)
            shutil.rmtree(trash, ignore_errors=True)
        self._rebuild_snapshot()

    def get_person(self, person_id: str) -> PersonRecord:
        if person_id not in self._index:
            raise NotFoundError(f"no person {person_id!r}")
        return self._record(self._load_meta(person_id))

    def find_by_name(self, name: str) -> PersonRecord | None:
        for person_id, stored in self._index.items():
            if stored.lower() == name.lower():
                return self.get_person(person_id)
        return None

    def persons(self) -> list[PersonRecord]:
        return [self.get_person(pid) for pid in sorted(self._index)]

    def readout_summary(self) -> str:
        records = sorted(self.persons(), key=lambda r: r.name.lower())
        if not records:
            return "0 persons enrolled"
        lines = [f"{len(records)} persons enrolled" if len(records) != 1 else "1 person enrolled"]
        for r in records:
            updated = time.strftime("%Y-%m-%d %H:%M:%S", time.gmtime(r.updated_ms / 1000))
            lines.append(f"{r.name}: {len(r.templates)} views, updated {updated} UTC")
        return "\n".join(lines)

    def _record(self, meta: dict) -> PersonRecord:
        return PersonRecord(
            person_id=meta["person_id"],
            name=meta["name"],
            email=meta["email"],
            contact=meta["contact"],
            templates=self._person_templates(meta),
            created_ms=meta["created_ms"],
            updated_ms=meta["updated_ms"],
        )
