"""Reference implementation of the scoring wire protocol.

Wraps any in-process backend (in practice the n-gram backend) behind the
same HTTP and stdio surfaces a neural scorer exposes, so gateway transport
code can be exercised without one.
"""

from __future__ import annotations

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO

__all__ = ["handle_request", "serve_stdio", "make_http_server", "serve_http"]

_MODES = ("forward", "infill")


def handle_request(backend, payload) -> tuple[int, dict]:
    """Validate one request and produce (status, response-body)."""
    if not isinstance(payload, dict):
        return 400, {"error": "request body must be a JSON object"}
    mode = payload.get("mode")
    if mode not in _MODES:
        return 400, {"error": f"mode must be one of {list(_MODES)}"}
    pre = payload.get("pre", [])
    suf = payload.get("suf", [])
    candidates = payload.get("candidates")
    for name, val in (("pre", pre), ("suf", suf)):
        if not isinstance(val, list) or not all(isinstance(t, str) for t in val):
            return 400, {"error": f"'{name}' must be a list of strings"}
    if (
        not isinstance(candidates, list)
        or not candidates
        or not all(isinstance(t, str) for t in candidates)
    ):
        return 400, {"error": "'candidates' must be a non-empty list of strings"}
    unk: set[str] = set()
    try:
        if mode == "forward":
            logprobs = backend.score_forward(pre, candidates, unk)
        else:
            logprobs = backend.score_infill(pre, suf, candidates, unk)
    except ValueError as e:
        return 400, {"error": str(e)}
    except Exception as e:  # noqa: BLE001 - surfaced as a backend fault
        return 500, {"error": f"backend fault: {e}"}
    body = {"logprobs": logprobs, "model_id": backend.backend_id}
    if unk:
        body["unk_candidates"] = sorted(unk)
    return 200, body


def serve_stdio(backend, stdin: IO[str] | None = None, stdout: IO[str] | None = None) -> None:
    """Line-delimited JSON loop: one request per line, one response per line."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as e:
            body = {"error": f"invalid JSON: {e.msg}", "code": 400}
            stdout.write(json.dumps(body) + "\n")
            stdout.flush()
            continue
        status, body = handle_request(backend, payload)
        if status != 200:
            body = {"error": body["error"], "code": status}
        stdout.write(json.dumps(body) + "\n")
        stdout.flush()


def make_http_server(backend, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Build (but do not start) an HTTP server answering POST /score."""

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # keep tests quiet
            pass

        def _reply(self, status: int, body: dict) -> None:
            data = json.dumps(body).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            if self.path != "/score":
                self._reply(404, {"error": f"unknown path {self.path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"null")
            except (ValueError, json.JSONDecodeError) as e:
                self._reply(400, {"error": f"invalid JSON body: {e}"})
                return
            status, body = handle_request(backend, payload)
            self._reply(status, body)

    return ThreadingHTTPServer((host, port), Handler)


def serve_http(backend, host: str = "127.0.0.1", port: int = 8777, background: bool = False):
    """Serve the wire protocol over HTTP; returns (server, thread) in background mode."""
    server = make_http_server(backend, host, port)
    if background:
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        return server, thread
    try:
        server.serve_forever()
    finally:
        server.server_close()
    return server, None
