from __future__ import annotations

import base64
import json
import random
import subprocess
import sys
import threading
import urllib.request
from pathlib import Path

import pytest

from refbackend.annotations import image_id
from refbackend.protocol import StubEngine
from refbackend.server import make_http_server

FAKE_PNG = b"stdio-image-bytes"


def annotations_file(tmp_path):
    annotations = {
        image_id(FAKE_PNG): {
            "persons": [{"box": [1, 2, 30, 40], "score": 0.7}],
            "faces": [],
            "embedding": [1.0] * 8,
        }
    }
    path = tmp_path / "annotations.json"
    path.write_text(json.dumps(annotations))
    return path


def spawn_stdio(tmp_path, *extra):
    cmd = [
        sys.executable, "-m", "refbackend", "serve", "--mode", "stub",
        "--annotations", str(annotations_file(tmp_path)), "--transport", "stdio",
        *extra,
    ]
    return subprocess.Popen(
        cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
        stderr=subprocess.PIPE, text=True, encoding="utf-8",
    )


def roundtrip(proc, request):
    proc.stdin.write(json.dumps(request) + "\n")
    proc.stdin.flush()
    return json.loads(proc.stdout.readline())


class TestStdio:
    def test_serves_until_eof(self, tmp_path):
        proc = spawn_stdio(tmp_path)
        try:
            hello = roundtrip(proc, {"id": "1", "task": "hello"})
            assert hello["ok"] is True and hello["embed_dim"] == 8
            request = {
                "id": "2", "task": "person_detect",
                "image": base64.b64encode(FAKE_PNG).decode(),
            }
            response = roundtrip(proc, request)
            assert response["detections"] == [{"box": [1, 2, 30, 40], "score": 0.7}]
        finally:
            proc.stdin.close()
            assert proc.wait(timeout=5) == 0

    def test_malformed_line_then_recovery(self, tmp_path):
        proc = spawn_stdio(tmp_path)
        try:
            proc.stdin.write("this is not json\n")
            proc.stdin.flush()
            error = json.loads(proc.stdout.readline())
            assert error["id"] == "?"
            assert error["ok"] is False
            follow_up = roundtrip(proc, {"id": "3", "task": "hello"})
            assert follow_up["ok"] is True
        finally:
            proc.stdin.close()
            proc.wait(timeout=5)

    def test_response_id_echo_under_randomized_requests(self, tmp_path):
        rng = random.Random(20_47)
        tasks = ["hello", "person_detect", "face_detect", "embed", "landmarks",
                 "classify", "bogus_task"]
        proc = spawn_stdio(tmp_path)
        try:
            for i in range(1000):
                rid = f"{rng.randrange(10**9)}-{i}"
                request = {"id": rid, "task": rng.choice(tasks)}
                if request["task"] != "hello":
                    payload = bytes(rng.getrandbits(8) for _ in range(rng.randrange(1, 24)))
                    request["image"] = base64.b64encode(payload).decode()
                response = roundtrip(proc, request)
                assert response["id"] == rid
        finally:
            proc.stdin.close()
            proc.wait(timeout=5)

    def test_strict_flag_propagates(self, tmp_path):
        proc = spawn_stdio(tmp_path, "--strict")
        try:
            request = {
                "id": "9", "task": "person_detect",
                "image": base64.b64encode(b"never-annotated").decode(),
            }
            response = roundtrip(proc, request)
            assert response["ok"] is False
        finally:
            proc.stdin.close()
            proc.wait(timeout=5)

    def test_missing_annotations_exits_2(self):
        proc = subprocess.run(
            [sys.executable, "-m", "refbackend", "serve", "--mode", "stub",
             "--transport", "stdio"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 2


@pytest.fixture
def http_server():
    engine = StubEngine(
        {
            image_id(FAKE_PNG): {
                "persons": [{"box": [5, 6, 20, 30], "score": 0.9}],
            }
        }
    )
    server = make_http_server(engine, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/infer"
    server.shutdown()
    server.server_close()


def post(url, payload):
    data = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
    request = urllib.request.Request(
        url, data=data, headers={"Content-Type": "application/json"}
    )
    with urllib.request.urlopen(request, timeout=5) as reply:
        return reply.status, json.loads(reply.read())


class TestHttp:
    def test_hello_and_detect(self, http_server):
        status, hello = post(http_server, {"id": "1", "task": "hello"})
        assert status == 200 and hello["ok"] is True
        status, response = post(
            http_server,
            {"id": "2", "task": "person_detect",
             "image": base64.b64encode(FAKE_PNG).decode()},
        )
        assert response["detections"] == [{"box": [5, 6, 20, 30], "score": 0.9}]

    def test_malformed_body_answers_question_mark(self, http_server):
        status, response = post(http_server, b"{nope")
        assert status == 200
        assert response["id"] == "?"
        assert response["ok"] is False

    def test_get_rejected(self, http_server):
        try:
            urllib.request.urlopen(http_server, timeout=5)
        except urllib.error.HTTPError as err:
            assert err.code == 405
        else:
            pytest.fail("GET should not be accepted")
