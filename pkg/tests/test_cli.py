from __future__ import annotations

import json
import os
import signal
import threading
import time
from pathlib import Path

import numpy as np
import pytest

from gatewatch import images
from gatewatch.cli import main
from synth import annotate, build_scene_kit, stripes

FIXTURES = Path(__file__).parent / "fixtures"
CAL = json.loads((FIXTURES / "calibration.json").read_text())


@pytest.fixture(scope="module")
def kit():
    return build_scene_kit()


def write_config(tmp_path, kit, *, cameras=None, recipients=False, classifier=True):
    replay = tmp_path / "replay"
    replay.mkdir(exist_ok=True)
    annotations = tmp_path / "annotations.json"
    annotations.write_text(json.dumps(annotate((kit.john_rgb, kit.john_entry))))
    model_path = tmp_path / "model.json"
    if classifier:
        kit.person_model.save(model_path)
    config = {
        "cameras": cameras
        or [
            {
                "camera_id": "cam-entrance",
                "location_label": "entrance",
                "source": str(replay),
            }
        ],
        "backend": {"kind": "stub", "annotations": str(annotations)},
        "recognition": {"mode": "lbp", "threshold": CAL["tau"]},
        "change": {"pixel_delta": 25, "active_fraction": 0.01},
        "debounce": {"cooldown_seconds": 60},
        "attributes": (
            {"model_path": str(model_path), "person_radius": kit.person_model.person_radius}
            if classifier
            else {}
        ),
        "feedback": {
            "modes": ["mms"],
            "transport": "file-sink",
            "outbox_dir": str(tmp_path / "outbox"),
            "recipients": (
                [
                    {
                        "name": "Pat",
                        "phone_number": "5550001111",
                        "carrier_gateway_domain": "mms.example.net",
                    }
                ]
                if recipients
                else []
            ),
        },
        "storage": {
            "profile_root": str(tmp_path / "profiles"),
            "event_log_path": str(tmp_path / "events.jsonl"),
            "image_dir": str(tmp_path / "scenes"),
            "blur_floor": 10.0,
        },
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config, indent=2))
    return path, replay


class TestRun:
    def test_replay_produces_event_log(self, kit, tmp_path, capsys):
        config, replay = write_config(tmp_path, kit)
        for i in range(3):
            (replay / f"{i:03d}.png").write_bytes(images.encode_png(kit.john_rgb))
        rc = main(
            ["enroll", "add-person", "--config", str(config), "--name", "John",
             "--chips", str(FIXTURES / "chips" / "person1")]
        )
        assert rc == 0
        rc = main(["run", "--config", str(config)])
        assert rc == 0
        events = [
            json.loads(line)
            for line in (tmp_path / "events.jsonl").read_text().splitlines()
        ]
        assert len(events) == 1  # static replay collapses to the first frame
        assert events[0]["identity"] == "John"
        assert events[0]["description"] == "John at the entrance talking over the phone"

    def test_missing_config_exits_2(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "absent.json")]) == 2

    def test_unparseable_config_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["run", "--config", str(path)]) == 2
        assert "line" in capsys.readouterr().err

    def test_sigint_is_clean_shutdown(self, kit, tmp_path):
        config, replay = write_config(tmp_path, kit, classifier=False)
        for i in range(300):
            frame = stripes(size=240, period=8, orientation="v", phase=i)
            (replay / f"{i:04d}.png").write_bytes(images.encode_png(frame))
        timer = threading.Timer(0.4, lambda: os.kill(os.getpid(), signal.SIGINT))
        timer.start()
        try:
            rc = main(["run", "--config", str(config)])
        finally:
            timer.cancel()
        assert rc == 0


class TestEnroll:
    def test_add_person_then_summary(self, kit, tmp_path, capsys):
        config, _ = write_config(tmp_path, kit)
        chips_dir = FIXTURES / "chips" / "person2"
        assert main(["enroll", "add-person", "--config", str(config), "--name", "Mia",
                     "--chips", str(chips_dir)]) == 0
        assert main(["enroll", "summary", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "Mia: 10 views" in out

    def test_duplicate_name_exits_3(self, kit, tmp_path):
        config, _ = write_config(tmp_path, kit)
        chips_dir = str(FIXTURES / "chips" / "person3")
        assert main(["enroll", "add-person", "--config", str(config), "--name", "Ann",
                     "--chips", chips_dir]) == 0
        assert main(["enroll", "add-person", "--config", str(config), "--name", "ann",
                     "--chips", chips_dir]) == 3

    def test_delete_unknown_exits_4(self, kit, tmp_path):
        config, _ = write_config(tmp_path, kit)
        assert main(["enroll", "delete-person", "--config", str(config),
                     "--person-id", "ghost"]) == 4

    def test_blurry_chips_exit_5_with_reasons(self, kit, tmp_path, capsys):
        config, _ = write_config(tmp_path, kit)
        blurry_dir = tmp_path / "blurry"
        blurry_dir.mkdir()
        for i in range(2):
            flat = np.full((64, 64), 100 + i, dtype=np.uint8)
            (blurry_dir / f"{i}.png").write_bytes(images.encode_png(flat))
        rc = main(["enroll", "add-person", "--config", str(config), "--name", "Blur",
                   "--chips", str(blurry_dir)])
        assert rc == 5
        err = capsys.readouterr().err
        assert "blurry" in err

    def test_add_views_unknown_person_exits_4(self, kit, tmp_path):
        config, _ = write_config(tmp_path, kit)
        assert main(["enroll", "add-views", "--config", str(config), "--person-id",
                     "nobody", "--chips", str(FIXTURES / "chips" / "person1")]) == 4


class TestHistory:
    def test_empty_log_prints_no_events(self, kit, tmp_path, capsys):
        config, _ = write_config(tmp_path, kit)
        assert main(["history", "--config", str(config)]) == 0
        assert "no events" in capsys.readouterr().out

    def test_counts_and_top(self, kit, tmp_path, capsys):
        config, _ = write_config(tmp_path, kit)
        log = tmp_path / "events.jsonl"
        rows = [
            {"event_id": "1", "timestamp": 1000, "camera_id": "cam-entrance",
             "location_label": "entrance", "identity": "John", "classes": [],
             "description": "John at the entrance", "image_ref": "", "notified": False},
            {"event_id": "2", "timestamp": 2000, "camera_id": "cam-entrance",
             "location_label": "entrance", "identity": "John", "classes": ["cellphone"],
             "description": "John at the entrance talking over the phone",
             "image_ref": "", "notified": True},
            {"event_id": "3", "timestamp": 3000, "camera_id": "cam-back",
             "location_label": "back door", "identity": "Unknown", "classes": ["gun"],
             "description": "An unknown person with a gun at the back door",
             "image_ref": "", "notified": True},
        ]
        log.write_text("".join(json.dumps(r) + "\n" for r in rows))
        assert main(["history", "--config", str(config), "--top", "1"]) == 0
        out = capsys.readouterr().out
        assert "John: 2" in out
        assert "Unknown: 1" in out
        assert out.count("An unknown person") == 1  # --top 1 keeps newest only

    def test_json_output_machine_readable(self, kit, tmp_path, capsys):
        config, _ = write_config(tmp_path, kit)
        assert main(["history", "--config", str(config), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["total"] == 0

    def test_bad_time_exits_2(self, kit, tmp_path):
        config, _ = write_config(tmp_path, kit)
        assert main(["history", "--config", str(config), "--since", "yesterdayish"]) == 2


class TestCalibrate:
    def test_threshold_reproducible_bit_exact(self, capsys):
        argv = ["calibrate", "--genuine", str(FIXTURES / "chips"), "--json"]
        assert main(argv) == 0
        first = json.loads(capsys.readouterr().out)
        assert main(argv) == 0
        second = json.loads(capsys.readouterr().out)
        assert first == second
        assert first["suggested_threshold"] > 0
        assert first["f1"] == 1.0  # the bundled identities separate cleanly

    def test_identical_sets_degenerate_warning(self, tmp_path, capsys):
        single = tmp_path / "single"
        for person in ("a", "b"):
            directory = single / person
            directory.mkdir(parents=True)
            chip = (FIXTURES / "chips" / "person1" / "chip_00.png").read_bytes()
            (directory / "0.png").write_bytes(chip)
            (directory / "1.png").write_bytes(chip)
        assert main(["calibrate", "--genuine", str(single)]) == 0
        assert "identical" in capsys.readouterr().out

    def test_apply_updates_config_atomically(self, kit, tmp_path, capsys):
        config, _ = write_config(tmp_path, kit)
        rc = main(["calibrate", "--genuine", str(FIXTURES / "chips"), "--apply",
                   "--config", str(config)])
        assert rc == 0
        capsys.readouterr()
        updated = json.loads(config.read_text())
        assert updated["recognition"]["threshold"] > 0
        assert not config.with_name("config.json.tmp").exists()

    def test_empty_directory_exits_2(self, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["calibrate", "--genuine", str(empty)]) == 2


class TestTrain:
    def test_train_writes_loadable_model(self, tmp_path, capsys):
        out = tmp_path / "model.json"
        rc = main(["train", "--data", str(FIXTURES / "patches"), "--out", str(out),
                   "--person-radius", "5.0"])
        assert rc == 0
        from gatewatch.attributes import PatchClassifier

        model = PatchClassifier.load(out)
        assert model.person_radius == 5.0
        assert set(model.centroids) == {"bp", "mp", "hp", "ep", "person"}
