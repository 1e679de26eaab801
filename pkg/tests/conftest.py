from __future__ import annotations

import json
import os
import shlex
import socket
import subprocess
import time

import pytest

from gatewatch.backend import (
    BackendSession,
    HttpBackend,
    InProcessStub,
    SubprocessBackend,
)


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def _wait_for_port(port: int, proc: subprocess.Popen, timeout: float = 10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if proc.poll() is not None:
            raise RuntimeError(f"conformance backend exited early with {proc.returncode}")
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.2):
                return
        except OSError:
            time.sleep(0.05)
    raise RuntimeError(f"conformance backend never opened port {port}")


@pytest.fixture
def backend_factory(tmp_path):
    """Build a backend session from an annotation map.

    Default: the in-process stub. Setting GATEWATCH_CONFORMANCE_TRANSPORT
    to ``stdio`` or ``http`` (with GATEWATCH_CONFORMANCE_CMD naming the
    server command) points the identical tests at an external backend
    speaking the wire protocol.
    """
    sessions = []
    procs = []

    def make(annotations: dict, strict: bool = False) -> BackendSession:
        transport = os.environ.get("GATEWATCH_CONFORMANCE_TRANSPORT", "")
        if not transport:
            session = BackendSession(InProcessStub(annotations, strict=strict))
            sessions.append(session)
            return session

        path = tmp_path / f"annotations-{len(sessions)}.json"
        path.write_text(json.dumps(annotations), encoding="utf-8")
        cmd = shlex.split(os.environ["GATEWATCH_CONFORMANCE_CMD"])
        cmd += ["--annotations", str(path)]
        if strict:
            cmd += ["--strict"]
        if transport == "stdio":
            session = BackendSession(SubprocessBackend(cmd + ["--transport", "stdio"]))
        elif transport == "http":
            port = _free_port()
            proc = subprocess.Popen(
                cmd + ["--transport", "http", "--port", str(port)],
                stdout=subprocess.DEVNULL,
                stderr=subprocess.DEVNULL,
            )
            procs.append(proc)
            _wait_for_port(port, proc)
            session = BackendSession(HttpBackend(f"http://127.0.0.1:{port}/infer"))
        else:
            raise RuntimeError(f"unknown conformance transport {transport!r}")
        sessions.append(session)
        return session

    yield make
    for session in sessions:
        session.close()
    for proc in procs:
        proc.terminate()
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
