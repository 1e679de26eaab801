"""Transports: stdio JSON lines and HTTP POST /infer."""

from __future__ import annotations

import json
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .protocol import encode_response, error_response, handle_line


def serve_stdio(engine, stdin=None, stdout=None) -> int:
    """Answer one JSON line per request line until EOF."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(handle_line(engine, line) + "\n")
        stdout.flush()
    return 0


class _Handler(BaseHTTPRequestHandler):
    engine = None

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = self.rfile.read(length).decode("utf-8", errors="replace")
        payload = handle_line(self.engine, body)
        data = payload.encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        data = encode_response(error_response("?", "POST JSON requests to this endpoint"))
        body = data.encode("utf-8")
        self.send_response(405)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):  # keep stdio clean for tests
        pass


def make_http_server(engine, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    handler = type("BoundHandler", (_Handler,), {"engine": engine})
    return ThreadingHTTPServer((host, port), handler)


def serve_http(engine, host: str, port: int) -> int:
    server = make_http_server(engine, host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0
