from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import pytest

from gatewatch.backend import (
    BackendSession,
    BoundingBox,
    SubprocessBackend,
    image_id,
)
from gatewatch.errors import BackendUnavailableError
from gatewatch import images
from synth import annotate, face_entry, gray_frame, landmarks_for_box, random_gray


def checker_frame(camera_id="cam0", size=(120, 160), seed=5):
    rng = np.random.default_rng(seed)
    return gray_frame(camera_id=camera_id, gray=random_gray(rng, *size))


class TestStubBackendSuite:
    """Contract tests for annotation-driven backends.

    This suite also runs unchanged against the reference backend over
    stdio and HTTP when GATEWATCH_CONFORMANCE_TRANSPORT is set.
    """

    def test_handshake_advertises_tasks_and_embed_dim(self, backend_factory):
        chip = np.full((32, 32), 7, dtype=np.uint8)
        session = backend_factory(annotate((chip, {"embedding": [0.5] * 16})))
        assert "person_detect" in session.tasks
        assert "face_detect" in session.tasks
        assert "embed" in session.tasks
        assert session.embed_dim == 16

    def test_person_detect_returns_recorded_boxes(self, backend_factory):
        frame = checker_frame()
        entry = {
            "persons": [
                {"box": [5, 6, 30, 60], "score": 0.5},
                {"box": [10, 20, 50, 120], "score": 0.98},
            ]
        }
        session = backend_factory(annotate((frame.pixels_rgb, entry)))
        boxes = session.detect_persons(frame)
        assert boxes[0] == BoundingBox(10, 20, 50, 100, 0.98)  # clamped to 120 rows
        assert [b.score for b in boxes] == [0.98, 0.5]

    def test_unknown_frame_yields_no_persons(self, backend_factory):
        session = backend_factory(annotate())
        assert session.detect_persons(checker_frame(seed=99)) == []

    def test_face_detect_returns_full_frame_geometry(self, backend_factory):
        frame = checker_frame()
        box = (40, 30, 60, 70)
        entry = {"faces": [face_entry(box)]}
        session = backend_factory(annotate((frame.pixels_rgb, entry)))
        faces = session.detect_faces(frame)
        assert len(faces) == 1
        assert (faces[0].box.x, faces[0].box.y, faces[0].box.w, faces[0].box.h) == box
        assert len(faces[0].landmarks.points) == 68
        expected = landmarks_for_box(*box)
        clamped = [[min(max(x, 0), 159), min(max(y, 0), 119)] for x, y in expected]
        assert [list(p) for p in faces[0].landmarks.points] == clamped

    def test_small_faces_are_dropped(self, backend_factory):
        frame = checker_frame()
        entry = {"faces": [face_entry((10, 10, 15, 15))]}
        session = backend_factory(annotate((frame.pixels_rgb, entry)))
        assert session.detect_faces(frame) == []

    def test_person_box_without_face_yields_empty(self, backend_factory):
        frame = checker_frame()
        entry = {
            "persons": [{"box": [0, 0, 40, 100], "score": 0.9}],
            "faces": [face_entry((100, 40, 40, 40))],
        }
        session = backend_factory(annotate((frame.pixels_rgb, entry)))
        within = session.detect_persons(frame)[0]
        assert session.detect_faces(frame, within=within) == []
        # The face is still found inside its own region.
        assert len(session.detect_faces(frame, within=BoundingBox(90, 30, 60, 60))) == 1

    def test_embed_returns_declared_vector(self, backend_factory):
        chip = random_gray(np.random.default_rng(3), 40, 40)
        vector = [round(0.1 * i, 3) for i in range(12)]
        session = backend_factory(annotate((chip, {"embedding": vector})))
        np.testing.assert_allclose(session.embed_face(chip), vector)

    def test_embed_is_deterministic(self, backend_factory):
        chip = random_gray(np.random.default_rng(4), 40, 40)
        session = backend_factory(annotate((chip, {"embedding": [1.0] * 8})))
        first = session.embed_face(chip)
        second = session.embed_face(chip)
        np.testing.assert_array_equal(first, second)

    def test_unknown_chip_strict_mode_errors(self, backend_factory):
        chip = random_gray(np.random.default_rng(6), 40, 40)
        session = backend_factory(annotate(), strict=True)
        with pytest.raises(BackendUnavailableError):
            session.embed_face(chip)

    def test_classify_task_returns_labels(self, backend_factory):
        patch = random_gray(np.random.default_rng(8), 32, 32)
        entry = {"classify": {"bp": [["beard", 0.42]]}}
        session = backend_factory(annotate((patch, entry)))
        if "classify" not in session.tasks:
            pytest.skip("backend does not advertise classify")
        assert session.classify(patch, "bp") == [("beard", 0.42)]
        assert session.classify(patch, "mp") == []


def _wire_session(tmp_path, behavior, annotations=None, timeout=5.0):
    cmd = [sys.executable, str(Path(__file__).parent / "wire_stub.py"), "--behavior", behavior]
    if annotations is not None:
        path = tmp_path / "wire-annotations.json"
        path.write_text(json.dumps(annotations), encoding="utf-8")
        cmd += ["--annotations", str(path)]
    return BackendSession(SubprocessBackend(cmd, timeout=timeout))


class TestWireTransport:
    def test_normal_round_trip_over_stdio(self, tmp_path):
        frame = checker_frame()
        entry = {"persons": [{"box": [1, 2, 20, 30], "score": 0.7}]}
        session = _wire_session(tmp_path, "normal", annotate((frame.pixels_rgb, entry)))
        try:
            assert session.detect_persons(frame) == [BoundingBox(1, 2, 20, 30, 0.7)]
        finally:
            session.close()

    def test_reply_without_id_is_protocol_violation(self, tmp_path):
        session = _wire_session(tmp_path, "garble", annotate())
        try:
            with pytest.raises(BackendUnavailableError):
                session.detect_persons(checker_frame())
        finally:
            session.close()

    def test_stray_replies_are_reassociated_by_id(self, tmp_path):
        frame = checker_frame()
        entry = {"persons": [{"box": [3, 4, 25, 35], "score": 0.9}]}
        session = _wire_session(tmp_path, "stray", annotate((frame.pixels_rgb, entry)))
        try:
            assert session.detect_persons(frame) == [BoundingBox(3, 4, 25, 35, 0.9)]
        finally:
            session.close()

    def test_hung_backend_times_out(self, tmp_path):
        session = _wire_session(tmp_path, "hang", annotate(), timeout=0.5)
        try:
            with pytest.raises(BackendUnavailableError, match="timed out"):
                session.detect_persons(checker_frame())
        finally:
            session.close()

    def test_dead_backend_reported(self, tmp_path):
        session = _wire_session(tmp_path, "die", annotate(), timeout=2.0)
        try:
            with pytest.raises(BackendUnavailableError):
                session.detect_persons(checker_frame())
        finally:
            session.close()


class TestStubPurity:
    def test_responses_bytewise_stable_across_sessions(self, backend_factory):
        frame = checker_frame()
        chip = random_gray(np.random.default_rng(10), 30, 30)
        annotations = annotate(
            (frame.pixels_rgb, {"persons": [{"box": [2, 2, 40, 50], "score": 0.8}],
                                "faces": [face_entry((10, 10, 40, 40))]}),
            (chip, {"embedding": [0.25] * 8}),
        )
        runs = []
        for _ in range(2):
            session = backend_factory(annotations)
            persons = session.detect_persons(frame)
            faces = session.detect_faces(frame)
            vector = session.embed_face(chip)
            runs.append((persons, [(f.box, f.landmarks) for f in faces], vector.tolist()))
        assert runs[0] == runs[1]

    def test_image_id_is_content_digest(self):
        raster = np.zeros((8, 8), dtype=np.uint8)
        png = images.encode_png(raster)
        assert image_id(png) == image_id(bytes(png))
        assert len(image_id(png)) == 64
