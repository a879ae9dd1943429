"""HTTP plumbing for the stub server.

Implements the wire protocol byte-exactly:
  POST /v1/answer {"image_b64"?, "prompt", "want_logprobs"} ->
      {"text", "token_logprobs": [[token, logprob], ...], "cumulative_logprob"}
  POST /v1/embed  {"texts": [...]} -> {"vectors": [...]}
  POST /v1/health -> {"status": "ok"}
plus GET or POST /v1/stats exposing the max observed request concurrency,
which integration tests use to verify the client-side limiter.
"""
from __future__ import annotations

import argparse
import json
import logging
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .stubs import StubError, StubScript, hash_embedding

log = logging.getLogger("modelserver")


class _Stats:
    def __init__(self):
        self._lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0
        self.requests = 0

    def enter(self) -> None:
        with self._lock:
            self.in_flight += 1
            self.requests += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)

    def leave(self) -> None:
        with self._lock:
            self.in_flight -= 1

    def snapshot(self) -> dict:
        with self._lock:
            return {"requests": self.requests, "in_flight": self.in_flight,
                    "max_in_flight": self.max_in_flight}


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "StubServer"

    def log_message(self, fmt, *args):  # route through logging, not stderr
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/v1/stats":
            self._send(200, self.server.stats.snapshot())
        else:
            self._send(404, {"error": f"unknown path {self.path}"})

    def do_POST(self):
        stats = self.server.stats
        stats.enter()
        try:
            self._handle_post()
        finally:
            stats.leave()

    def _handle_post(self):
        correlation = self.headers.get("X-Correlation-ID") or str(uuid.uuid4())
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)

        if self.path == "/v1/stats":
            self._send(200, self.server.stats.snapshot())
            return
        if self.path == "/v1/health":
            self._send(200, {"status": "ok"})
            return
        if self.path not in ("/v1/answer", "/v1/embed"):
            self._send(404, {"error": f"unknown path {self.path}"})
            return

        try:
            payload = json.loads(raw) if raw else {}
        except json.JSONDecodeError:
            self._send(400, {"error": "malformed JSON body"})
            return
        if not isinstance(payload, dict):
            self._send(400, {"error": "body must be a JSON object"})
            return

        log.info("%s %s correlation=%s", self.path, self.client_address[0], correlation)
        if self.path == "/v1/answer":
            prompt = payload.get("prompt")
            if not prompt or not isinstance(prompt, str):
                self._send(400, {"error": "missing or empty 'prompt'"})
                return
            want = bool(payload.get("want_logprobs", True))
            try:
                body = self.server.script.reply(prompt, payload.get("image_b64"), want)
            except StubError as exc:
                self._send(exc.status, {"error": str(exc)})
                return
            self._send(200, body)
        else:
            texts = payload.get("texts")
            if not texts or not isinstance(texts, list):
                self._send(400, {"error": "missing or empty 'texts'"})
                return
            self._send(200, {"vectors": [hash_embedding(str(t)) for t in texts]})


class StubServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, script: StubScript):
        super().__init__(address, _Handler)
        self.script = script
        self.stats = _Stats()

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def serve(script: StubScript, host: str = "127.0.0.1", port: int = 0) -> StubServer:
    """Create a server and run it on a daemon thread; caller shuts it down."""
    server = StubServer((host, port), script)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="figclass-modelserver")
    parser.add_argument("--config", default=None, help="JSON stub config")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8040)
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(message)s")
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            script = StubScript.from_config(json.load(f))
    else:
        script = StubScript()

    server = StubServer((args.host, args.port), script)
    log.info("serving %s mode on %s", script.mode, server.url)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
