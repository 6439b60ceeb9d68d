"""Shared test helpers: a scriptable local HTTP server."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest


class MockEndpoint:
    """A local HTTP endpoint whose responses are scripted per test.

    ``responder`` is a callable (payload dict, request number) -> either
    (status, json-serializable body) or (status, body, raw_bytes_flag).
    Requests are recorded for assertions.
    """

    def __init__(self, responder):
        self.responder = responder
        self.requests = []
        self._lock = threading.Lock()

        mock = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length) or b"{}")
                with mock._lock:
                    mock.requests.append(
                        {
                            "path": self.path,
                            "payload": payload,
                            "headers": dict(self.headers),
                        }
                    )
                    count = len(mock.requests)
                status, body = mock.responder(payload, count)
                data = body if isinstance(body, bytes) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def mock_endpoint():
    endpoints = []

    def make(responder):
        ep = MockEndpoint(responder)
        endpoints.append(ep)
        return ep

    yield make
    for ep in endpoints:
        ep.close()
