"""Confidential verification-as-a-service.

The service process is modelled as a simulated platform running a measured,
publicly described workload. Clients must attest it (fresh nonce, pinned
provider key, expected measurement supplied out of band) before any
credential leaves the client; :class:`ServiceHandle` objects only come out
of a successful :func:`attest_service`.

HTTP API (JSON bodies):

    GET  /descriptor                      public workload and expected measurement
    POST /attest   {"nonce_b64"}          ServiceAttestation
    POST /verify   {"sd_jwt_vc_compact"}  {"attested_jwt_vc", "event_ref", "verdict"} | {"error"}
    GET  /events?credential_digest=<hex>  [LedgerEvent]
    GET  /healthz                         {"ok": true}

The server accepts a raw POST /verify without prior attestation; only the
bundled client enforces attest-before-send.
"""

from __future__ import annotations

import json
import logging
import os
import socket
import struct
import threading
import urllib.error
import urllib.request
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Dict, List, Optional, Sequence, Tuple
from urllib.parse import parse_qs, urlsplit

from .attested import AttestedCredential
from .clock import Clock
from .crypto import Jwk, b64url_decode, b64url_encode, canonical_json, digest_from_hex, sha256
from .enclave import (
    Platform,
    Quote,
    QuoteVerdict,
    WorkloadDescriptor,
    encode_fields,
    measure_workload,
    report_data_for,
    verify_quote_report,
)
from .errors import AttestationFailed, MalformedToken, ServiceError, SsiBridgeError, Unreachable
from .ledger import Chain, EventRef, Index, VerifierContract, get_events
from .sdjwt import SdJwtVc
from .wallet import (
    DEFAULT_WINDOW_S,
    EnclaveContext,
    FederationContext,
    SsiWallet,
    create_attested_credential,
    publish_proof,
)

logger = logging.getLogger(__name__)

NONCE_SIZE = 32
# Short poll so shutdown() returns promptly.
_POLL_S = 0.05


@dataclass(frozen=True)
class ServiceDescriptor:
    provider_key: Jwk
    workload: WorkloadDescriptor
    expected_measurement: bytes
    base_endpoint: str = ""

    def consistent(self) -> bool:
        """The published measurement must be recomputable from the published workload."""
        return measure_workload(self.workload) == self.expected_measurement

    def to_dict(self) -> dict:
        return {
            "provider_key": self.provider_key.public_dict(),
            "workload": self.workload.to_dict(),
            "expected_measurement": self.expected_measurement.hex(),
            "base_endpoint": self.base_endpoint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceDescriptor":
        return cls(Jwk.from_dict(d["provider_key"]), WorkloadDescriptor.from_dict(d["workload"]),
                   digest_from_hex(d["expected_measurement"]), d.get("base_endpoint", ""))


def service_report_data(measurement: bytes, provider_key_fp: bytes, nonce: bytes, timestamp: int) -> bytes:
    return report_data_for(sha256(encode_fields([measurement, provider_key_fp, nonce, struct.pack(">Q", timestamp)])))


@dataclass(frozen=True)
class ServiceAttestation:
    quote: Quote
    provider_key_fingerprint: bytes
    nonce: bytes
    timestamp: int
    provider_signature: bytes

    def to_dict(self) -> dict:
        return {
            "quote": self.quote.to_dict(),
            "provider_key_fingerprint": self.provider_key_fingerprint.hex(),
            "nonce_b64": b64url_encode(self.nonce),
            "timestamp": self.timestamp,
            "provider_signature": b64url_encode(self.provider_signature),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceAttestation":
        return cls(Quote.from_dict(d["quote"]), digest_from_hex(d["provider_key_fingerprint"]),
                   b64url_decode(d["nonce_b64"]), int(d["timestamp"]), b64url_decode(d["provider_signature"]))


class VerifierService:
    """Server-side pipeline. One instance per simulated confidential VM."""

    def __init__(
        self,
        *,
        platform: Platform,
        workload: WorkloadDescriptor,
        provider_key: Jwk,
        signing_key: Jwk,
        federation: FederationContext,
        chain: Chain,
        contract: VerifierContract,
        clock: Clock,
        window_s: int = DEFAULT_WINDOW_S,
        chain_path: Optional[str] = None,
    ) -> None:
        self.platform = platform
        self.workload = workload
        self.provider_key = provider_key
        self.signing_key = signing_key
        self.federation = federation
        self.chain = chain
        self.contract = contract
        self.clock = clock
        self.window_s = window_s
        self.chain_path = chain_path
        self.index = Index.subscribe(chain)
        self.request_log: List[Tuple[str, str]] = []
        self._inflight: Dict[str, str] = {}
        self._lock = threading.Lock()
        self._server: Optional[ThreadingHTTPServer] = None

    @property
    def measurement(self) -> bytes:
        return measure_workload(self.workload)

    def descriptor(self, base_endpoint: str = "") -> ServiceDescriptor:
        return ServiceDescriptor(self.provider_key.public(), self.workload, self.measurement, base_endpoint)

    def attest(self, nonce: bytes) -> ServiceAttestation:
        ts = self.clock.now()
        pfp = self.provider_key.fingerprint()
        quote = self.platform.quote(self.measurement, service_report_data(self.measurement, pfp, nonce, ts), ts)
        sig = self.provider_key.sign(canonical_json(quote.to_dict()))
        return ServiceAttestation(quote, pfp, nonce, ts, sig)

    def verify(self, compact: str) -> dict:
        """Run the full pipeline for one credential; nothing about it is kept afterwards."""
        request_id = uuid.uuid4().hex
        with self._lock:
            self._inflight[request_id] = compact
        try:
            cred = SdJwtVc.parse(compact)
            wallet = SsiWallet(self.signing_key, self.window_s)
            enclave = EnclaveContext(self.platform, self.workload)
            attested = create_attested_credential(wallet, cred, self.federation, enclave, self.clock)
            ref = publish_proof(wallet, attested, self.chain, self.contract)
            return {
                "attested_jwt_vc": attested.jwt_vc,
                "event_ref": ref.to_dict(),
                "verdict": attested.claims["verification_result"],
            }
        finally:
            with self._lock:
                del self._inflight[request_id]
            if self.chain_path:
                self.chain.save(self.chain_path)

    def retained_state(self) -> bytes:
        """Everything the service keeps between requests, serialized for inspection."""
        with self._lock:
            inflight = canonical_json(self._inflight)
        return inflight + self.chain.dumps().encode() + canonical_json(self.index.to_dict())

    def events(self, credential_digest: bytes) -> List[dict]:
        return [e.to_dict() for e in get_events(self.chain, contract=self.contract.address,
                                                credential_digest=credential_digest)]

    # -- HTTP -------------------------------------------------------------

    def serve(self, host: str = "127.0.0.1", port: int = 0, background: bool = True) -> str:
        self._server = ThreadingHTTPServer((host, port), _service_handler(self))
        self._server.daemon_threads = True
        h, p = self._server.server_address[:2]
        base = f"http://{h}:{p}"
        if background:
            threading.Thread(target=self._server.serve_forever, args=(_POLL_S,), daemon=True).start()
        else:
            self._server.serve_forever(_POLL_S)
        return base

    def close(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None


def _service_handler(service: VerifierService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("verifier service: " + fmt, *args)

        def _json(self, status: int, obj) -> None:
            body = json.dumps(obj, sort_keys=True).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _read(self) -> dict:
            n = int(self.headers.get("Content-Length") or 0)
            return json.loads(self.rfile.read(n) or b"{}")

        def do_GET(self):
            parts = urlsplit(self.path)
            service.request_log.append(("GET", parts.path))
            if parts.path == "/healthz":
                self._json(200, {"ok": True})
            elif parts.path == "/descriptor":
                host, port = self.server.server_address[:2]
                self._json(200, service.descriptor(f"http://{host}:{port}").to_dict())
            elif parts.path == "/events":
                try:
                    digest = digest_from_hex(parse_qs(parts.query)["credential_digest"][0])
                except (KeyError, IndexError, ValueError):
                    self._json(400, {"error": {"code": "BadRequest", "message": "credential_digest required"}})
                    return
                self._json(200, service.events(digest))
            else:
                self._json(404, {"error": {"code": "NotFound", "message": parts.path}})

        def do_POST(self):
            path = urlsplit(self.path).path
            service.request_log.append(("POST", path))
            try:
                body = self._read()
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._json(400, {"error": {"code": "BadRequest", "message": "invalid JSON"}})
                return
            if path == "/attest":
                try:
                    nonce = b64url_decode(body["nonce_b64"])
                except (KeyError, TypeError, MalformedToken):
                    self._json(400, {"error": {"code": "BadRequest", "message": "nonce_b64 required"}})
                    return
                self._json(200, service.attest(nonce).to_dict())
            elif path == "/verify":
                try:
                    self._json(200, service.verify(body["sd_jwt_vc_compact"]))
                except KeyError:
                    self._json(400, {"error": {"code": "BadRequest", "message": "sd_jwt_vc_compact required"}})
                except SsiBridgeError as exc:
                    self._json(422, {"error": exc.to_dict()})
            else:
                self._json(404, {"error": {"code": "NotFound", "message": path}})

    return Handler


# ---------------------------------------------------------------------------
# client
# ---------------------------------------------------------------------------

_HANDLE_TOKEN = object()


class ServiceHandle:
    """Proof that the service at ``base_url`` attested successfully. Only attest_service makes these."""

    def __init__(self, token: object, base_url: str, measurement: bytes, provider_key: Jwk,
                 root_fingerprint: bytes, attestation: ServiceAttestation) -> None:
        if token is not _HANDLE_TOKEN:
            raise TypeError("ServiceHandle is created by attest_service only")
        self.base_url = base_url.rstrip("/")
        self.measurement = measurement
        self.provider_key = provider_key
        self.root_fingerprint = root_fingerprint
        self.attestation = attestation


def _http(method: str, url: str, body: Optional[dict] = None, timeout: float = 10.0):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, json.loads(resp.read() or b"null")
    except urllib.error.HTTPError as exc:
        try:
            return exc.code, json.loads(exc.read() or b"null")
        except json.JSONDecodeError:
            return exc.code, None
    except (urllib.error.URLError, socket.timeout, ConnectionError, OSError) as exc:
        raise Unreachable(f"{url}: {exc}") from exc


def check_service_attestation(att: ServiceAttestation, provider_pubkey: Jwk, expected_measurement: bytes,
                              nonce: bytes, trusted_roots: Sequence[bytes]) -> None:
    """Raise AttestationFailed unless ``att`` answers our nonce and comes from the expected workload."""
    if att.nonce != nonce:
        raise AttestationFailed("NonceMismatch")
    if att.provider_key_fingerprint != provider_pubkey.fingerprint() or not provider_pubkey.verify(
        canonical_json(att.quote.to_dict()), att.provider_signature
    ):
        raise AttestationFailed("ProviderSignatureInvalid")
    root = att.quote.root_fingerprint
    if root not in trusted_roots:
        raise AttestationFailed(QuoteVerdict.ROOT_MISMATCH.value)
    expected_rd = service_report_data(expected_measurement, att.provider_key_fingerprint, nonce, att.timestamp)
    verdict = verify_quote_report(att.quote, root, expected_measurement, expected_rd)
    if verdict is not QuoteVerdict.VALID:
        raise AttestationFailed(verdict.value)


def attest_service(base_url: str, provider_pubkey: Jwk, expected_measurement: bytes,
                   nonce: Optional[bytes] = None, trusted_roots: Sequence[bytes] = ()) -> ServiceHandle:
    """Challenge the service and return a handle only if its attestation checks out.

    ``expected_measurement`` must come from an independent channel; the
    service's own /descriptor is never used to bootstrap it.
    """
    nonce = nonce if nonce is not None else os.urandom(NONCE_SIZE)
    status, body = _http("POST", base_url.rstrip("/") + "/attest", {"nonce_b64": b64url_encode(nonce)})
    if status != 200 or not isinstance(body, dict):
        raise AttestationFailed("NoAttestation", f"service answered HTTP {status}")
    try:
        att = ServiceAttestation.from_dict(body)
    except (KeyError, TypeError, ValueError, MalformedToken) as exc:
        raise AttestationFailed("Malformed") from exc
    check_service_attestation(att, provider_pubkey, expected_measurement, nonce, trusted_roots)
    return ServiceHandle(_HANDLE_TOKEN, base_url, expected_measurement, provider_pubkey, att.quote.root_fingerprint, att)


@dataclass(frozen=True)
class VerificationResponse:
    attested: AttestedCredential
    event_ref: EventRef
    verdict: dict


def request_verification(handle: ServiceHandle, cred: SdJwtVc) -> VerificationResponse:
    if not isinstance(handle, ServiceHandle):
        raise TypeError("an attested ServiceHandle is required")
    status, body = _http("POST", handle.base_url + "/verify", {"sd_jwt_vc_compact": cred.compact})
    if status != 200:
        err = (body or {}).get("error", {}) if isinstance(body, dict) else {}
        raise ServiceError(err.get("code", f"HTTP{status}"), err.get("message", ""), err.get("details"))
    return VerificationResponse(AttestedCredential(body["attested_jwt_vc"]), EventRef.from_dict(body["event_ref"]),
                                body["verdict"])


def fetch_events(base_url: str, credential_digest: bytes) -> List[dict]:
    status, body = _http("GET", base_url.rstrip("/") + "/events?credential_digest=" + credential_digest.hex())
    if status != 200:
        raise ServiceError("EventsUnavailable", f"HTTP {status}")
    return body
