"""Local HTTP front for the mock federation, and a matching client transport.

Routes (entity ids are percent-encoded into the first path segment):

    GET  /{entity_id}/.well-known/federation   entity configuration (compact token)
    GET  /{entity_id}/fetch?sub={subject_id}   subordinate statement
    POST /{entity_id}/status                   {"trust_mark_id": ...} -> {"active": bool}
    POST /status                               same, routed by the mark's holder
    POST /admin/{action}                       fault injection, JSON body

Plain HTTP only. The endpoint certificate travels in the ``X-Endpoint-Cert``
header and stands in for the TLS server certificate.
"""

from __future__ import annotations

import json
import logging
import socket
import threading
import time
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import TYPE_CHECKING, Optional
from urllib.parse import quote, unquote, urlsplit

from ..errors import TransportError, TransportTimeout
from .model import EndpointCert, origin_of
from .transport import DEFAULT_TIMEOUT_S, Exchange

if TYPE_CHECKING:
    from .mock import FederationHandle

logger = logging.getLogger(__name__)

CERT_HEADER = "X-Endpoint-Cert"
_POLL_S = 0.05


def _handler_for(handle: "FederationHandle"):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # route through logging, not stderr
            logger.debug("federation http: " + fmt, *args)

        def _send(self, status: int, body: bytes, cert: Optional[EndpointCert] = None,
                  ctype: str = "application/json") -> None:
            self.send_response(status)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            if cert is not None:
                self.send_header(CERT_HEADER, cert.encode())
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> bytes:
            n = int(self.headers.get("Content-Length") or 0)
            return self.rfile.read(n) if n else b""

        def _logical_url(self) -> Optional[str]:
            parts = urlsplit(self.path)
            segs = parts.path.split("/", 2)
            if len(segs) < 3 or not segs[1]:
                return None
            origin = unquote(segs[1])
            url = origin + "/" + segs[2]
            if parts.query:
                url += "?" + parts.query
            return url

        def _proxy(self, method: str, body: bytes) -> None:
            url = self._logical_url()
            if url is None:
                self._send(404, b"")
                return
            delay = handle._state.latency.get(origin_of(url), 0.0)
            if delay:
                time.sleep(delay)
            try:
                ex = handle.dispatch(method, url, body)
            except TransportError:
                self._send(503, b"")
                return
            ctype = "application/json" if method == "POST" else "application/entity-statement+jwt"
            self._send(ex.status, ex.body, ex.cert, ctype)

        def do_GET(self):
            self._proxy("GET", b"")

        def do_POST(self):
            body = self._body()
            path = urlsplit(self.path).path
            if path == "/status":
                try:
                    mark_id = json.loads(body)["trust_mark_id"]
                except (json.JSONDecodeError, KeyError, TypeError, UnicodeDecodeError):
                    self._send(400, b"")
                    return
                holder = next((e.entity_id for e in handle.topology.entities
                               for m in e.marks if handle.mark_id(e.entity_id, m.mark_type) == mark_id), None)
                if holder is None:
                    self._send(404, b"")
                    return
                self.path = "/" + quote(holder, safe="") + "/status"
                self._proxy("POST", body)
            elif path.startswith("/admin/"):
                self._admin(path[len("/admin/"):], body)
            else:
                self._proxy("POST", body)

        def _admin(self, action: str, body: bytes) -> None:
            try:
                args = json.loads(body or b"{}")
                if action == "outage":
                    handle.inject_outage(args["entity_id"])
                elif action == "restore":
                    handle.restore(args["entity_id"])
                elif action == "revoke":
                    handle.revoke_mark(args["mark_id"])
                elif action == "rotate":
                    handle.rotate_key(args["entity_id"])
                elif action == "silent":
                    handle.set_silent(args["entity_id"])
                else:
                    self._send(404, b'{"error":"unknown action"}')
                    return
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                self._send(400, json.dumps({"error": str(exc)}).encode())
                return
            self._send(200, b'{"ok":true}')

    return Handler


class FederationHttpServer:
    def __init__(self, handle: "FederationHandle", host: str = "127.0.0.1", port: int = 0) -> None:
        self.server = ThreadingHTTPServer((host, port), _handler_for(handle))
        self.server.daemon_threads = True
        self._thread: Optional[threading.Thread] = None

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.server.serve_forever, args=(_POLL_S,), daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self.server.serve_forever(_POLL_S)

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()


class HttpTransport:
    """Maps logical federation URLs onto a running :class:`FederationHttpServer`."""

    def __init__(self, base_url: str) -> None:
        self.base_url = base_url.rstrip("/")

    def _physical(self, url: str) -> str:
        parts = urlsplit(url)
        origin = f"{parts.scheme}://{parts.netloc}"
        out = f"{self.base_url}/{quote(origin, safe='')}{parts.path}"
        if parts.query:
            out += "?" + parts.query
        return out

    def _do(self, method: str, url: str, body: bytes, timeout: float) -> Exchange:
        req = urllib.request.Request(self._physical(url), data=body if method == "POST" else None, method=method)
        if method == "POST":
            req.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                status, payload, headers = resp.status, resp.read(), resp.headers
        except urllib.error.HTTPError as exc:
            if exc.code == 503:
                raise TransportError(f"{url}: service unavailable") from exc
            status, payload, headers = exc.code, exc.read(), exc.headers
        except (socket.timeout, TimeoutError) as exc:
            raise TransportTimeout(f"{url}: timed out") from exc
        except (urllib.error.URLError, ConnectionError, OSError) as exc:
            if isinstance(getattr(exc, "reason", None), (socket.timeout, TimeoutError)):
                raise TransportTimeout(f"{url}: timed out") from exc
            raise TransportError(f"{url}: {exc}") from exc
        cert_text = headers.get(CERT_HEADER)
        cert = EndpointCert.decode(cert_text) if cert_text else None
        return Exchange(method, url, body, status, payload, cert)

    def get(self, url: str, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange:
        return self._do("GET", url, b"", timeout)

    def post(self, url: str, body: bytes, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange:
        return self._do("POST", url, body, timeout)


def admin(base_url: str, action: str, **args) -> dict:
    req = urllib.request.Request(
        base_url.rstrip("/") + "/admin/" + action,
        data=json.dumps(args).encode(),
        method="POST",
        headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(req, timeout=DEFAULT_TIMEOUT_S) as resp:
            return json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return json.loads(exc.read() or b"{}") | {"status": exc.code}
