"""Request/response plumbing shared by the in-process and HTTP federations.

Transports speak in logical federation URLs (``https://anchor.example/...``).
A transport raises :class:`TransportError` when the endpoint cannot be
reached; any response that did arrive is returned as an :class:`Exchange`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import List, Optional, Protocol

from ..clock import Clock
from ..crypto import sha256
from ..errors import TransportError
from .model import EndpointCert

DEFAULT_TIMEOUT_S = 2.0


@dataclass(frozen=True)
class Exchange:
    method: str
    url: str
    request_body: bytes
    status: int
    body: bytes
    cert: Optional[EndpointCert]


class Transport(Protocol):
    def get(self, url: str, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange: ...

    def post(self, url: str, body: bytes, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange: ...


def request_digest(method: str, url: str, body: bytes) -> bytes:
    return sha256(method.encode() + b" " + url.encode() + b"\n" + body)


@dataclass(frozen=True)
class Observation:
    """One endpoint interaction as seen by the verifying party."""

    method: str
    url: str
    cert_fingerprint: Optional[bytes]
    request_digest: bytes
    response_digest: Optional[bytes]
    timestamp: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "url": self.url,
            "cert_fingerprint": self.cert_fingerprint.hex() if self.cert_fingerprint else None,
            "request_digest": self.request_digest.hex(),
            "response_digest": self.response_digest.hex() if self.response_digest else None,
            "timestamp": self.timestamp,
        }


class RecordingTransport:
    """Wraps a transport and keeps an ordered log of every exchange attempted."""

    def __init__(self, inner: Transport, clock: Clock) -> None:
        self.inner = inner
        self.clock = clock
        self.observations: List[Observation] = []

    def _record(self, method: str, url: str, body: bytes, call):
        ts = self.clock.now()
        req = request_digest(method, url, body)
        try:
            ex = call()
        except TransportError:
            self.observations.append(Observation(method, url, None, req, None, ts))
            raise
        fp = ex.cert.fingerprint if ex.cert is not None else None
        self.observations.append(Observation(method, url, fp, req, sha256(ex.body), ts))
        return ex

    def get(self, url: str, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange:
        return self._record("GET", url, b"", lambda: self.inner.get(url, timeout))

    def post(self, url: str, body: bytes, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange:
        return self._record("POST", url, body, lambda: self.inner.post(url, body, timeout))


class CountingTransport:
    """Counts calls; used to prove that a code path stays offline."""

    def __init__(self, inner: Optional[Transport] = None) -> None:
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    def _bump(self) -> None:
        with self._lock:
            self.calls += 1

    def get(self, url: str, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange:
        self._bump()
        if self.inner is None:
            raise TransportError(f"no route to {url}")
        return self.inner.get(url, timeout)

    def post(self, url: str, body: bytes, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange:
        self._bump()
        if self.inner is None:
            raise TransportError(f"no route to {url}")
        return self.inner.post(url, body, timeout)
