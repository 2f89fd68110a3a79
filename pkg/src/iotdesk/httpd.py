"""Thin HTTP/1.1 facade over a deployment runtime.

Routes the 13 JSON endpoints plus `/healthz` onto `Runtime.handle`, which
computes each response and sleeps out its modeled latency. One route table
is generated from the shared endpoint specs, so the HTTP surface cannot
drift from the in-process dispatch surface.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .api import ENDPOINTS, Request
from .runtime import Runtime


def _compile_routes():
    routes = []
    for spec in ENDPOINTS.values():
        pattern = re.sub(r"\{(\w+)\}", r"(?P<\1>[^/]+)", spec.path)
        routes.append((spec.method, re.compile(f"^{pattern}$"), spec.name))
    return routes


_ROUTES = _compile_routes()


def resolve(method: str, path: str) -> tuple[str | None, dict, int]:
    """Map (method, path) to (endpoint, path_params, error_status)."""
    path_seen = False
    for route_method, regex, name in _ROUTES:
        match = regex.match(path)
        if match:
            if route_method == method:
                return name, match.groupdict(), 0
            path_seen = True
    return None, {}, 405 if path_seen else 404


class _Handler(BaseHTTPRequestHandler):
    runtime: Runtime  # attached by make_handler
    protocol_version = "HTTP/1.1"
    disable_nagle_algorithm = True  # small JSON writes must not wait on ACKs

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        pass  # request logging is the caller's concern, not the server's

    def _send_json(self, status: int, body, headers: dict | None = None) -> None:
        payload = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        for key, value in (headers or {}).items():
            self.send_header(key, value)
        self.end_headers()
        self.wfile.write(payload)

    def _read_body(self):
        length = int(self.headers.get("Content-Length") or 0)
        if length == 0:
            return None, None
        raw = self.rfile.read(length)
        try:
            return json.loads(raw), None
        except ValueError:
            return None, "request body is not valid JSON"

    def _dispatch(self, method: str) -> None:
        url = urlsplit(self.path)
        if method == "GET" and url.path == "/healthz":
            self._send_json(200, {"ok": True})
            return
        endpoint, path_params, error = resolve(method, url.path)
        if endpoint is None:
            code = "method_not_allowed" if error == 405 else "not_found"
            self._send_json(error, {"error": code, "detail": url.path})
            return
        body, parse_error = self._read_body()
        if parse_error is not None:
            self._send_json(400, {"error": "invalid", "detail": parse_error})
            return
        query = parse_qs(url.query)
        if "limit" in query:
            path_params["limit"] = query["limit"][0]
        request = Request(
            endpoint=endpoint,
            headers={k.lower(): v for k, v in self.headers.items()},
            path_params=path_params,
            body=body,
        )
        response = self.runtime.handle(request)
        self._send_json(response.status, response.body, response.headers)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")


def make_handler(runtime: Runtime):
    return type("BoundHandler", (_Handler,), {"runtime": runtime})


class ApiServer:
    """Threaded HTTP server bound to one runtime."""

    def __init__(self, runtime: Runtime, host: str = "127.0.0.1", port: int = 8080):
        self.httpd = ThreadingHTTPServer((host, port), make_handler(runtime))
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def host(self) -> str:
        return self.httpd.server_address[0]

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    @property
    def base_url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def start(self) -> None:
        """Serve on a background thread (used by tests and embedded tools)."""
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=10.0)
            self._thread = None
