"""In-process mock federation with fault injection.

Every entity id is an origin (``https://name.example``) that hosts its
entity configuration, a fetch endpoint for statements about its
subordinates, and the status endpoint for the trust marks it holds.
Statements are re-derived from the current state on every request, and
that state is replaced atomically, so concurrent readers never observe a
half-applied mutation.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union
from urllib.parse import parse_qs, unquote, urlsplit

from ..clock import Clock
from ..crypto import Jwk, b64url_decode, b64url_encode, canonical_json, seeded_rng
from ..errors import InvalidTopology, TransportError, TransportTimeout
from .model import (
    CONFIGURATION_PATH,
    EndpointCert,
    EntityStatement,
    TrustMark,
    build_entity_statement,
    origin_of,
    status_url,
)
from .transport import DEFAULT_TIMEOUT_S, Exchange

ROLES = ("anchor", "intermediate", "provider")
STATEMENT_LIFETIME_S = 30 * 86400
CERT_LIFETIME_S = 10 * 365 * 86400


@dataclass(frozen=True)
class MarkSpec:
    mark_type: str
    issuer: Optional[str] = None  # None means the anchor


@dataclass(frozen=True)
class EntitySpec:
    entity_id: str
    role: str
    authority: Optional[str] = None
    marks: Tuple[MarkSpec, ...] = ()


@dataclass(frozen=True)
class FederationTopology:
    entities: Tuple[EntitySpec, ...]

    @property
    def anchor(self) -> EntitySpec:
        return next(e for e in self.entities if e.role == "anchor")

    def get(self, entity_id: str) -> EntitySpec:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise KeyError(entity_id)

    def ids(self) -> List[str]:
        return [e.entity_id for e in self.entities]

    def validate(self) -> None:
        anchors = [e for e in self.entities if e.role == "anchor"]
        if len(anchors) != 1:
            raise InvalidTopology(f"topology needs exactly one anchor, found {len(anchors)}")
        ids = self.ids()
        if len(set(ids)) != len(ids):
            raise InvalidTopology("duplicate entity ids")
        for e in self.entities:
            if e.role not in ROLES:
                raise InvalidTopology(f"unknown role {e.role!r} for {e.entity_id}")
            if origin_of(e.entity_id) != e.entity_id:
                raise InvalidTopology(f"entity id {e.entity_id!r} must be a bare origin URL")
            if e.role == "anchor":
                if e.authority is not None:
                    raise InvalidTopology("the anchor cannot have an authority")
            elif e.authority not in ids:
                raise InvalidTopology(f"{e.entity_id} has unknown authority {e.authority!r}")
            for m in e.marks:
                if m.issuer is not None and m.issuer not in ids:
                    raise InvalidTopology(f"mark issuer {m.issuer!r} is not in the topology")

    def to_dict(self) -> dict:
        return {
            "entities": [
                {
                    "id": e.entity_id,
                    "role": e.role,
                    "authority": e.authority,
                    "marks": [{"type": m.mark_type, "issuer": m.issuer} for m in e.marks],
                }
                for e in self.entities
            ]
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FederationTopology":
        try:
            entities = []
            for raw in d["entities"]:
                marks = []
                for m in raw.get("marks", []):
                    marks.append(MarkSpec(m) if isinstance(m, str) else MarkSpec(m["type"], m.get("issuer")))
                entities.append(EntitySpec(raw["id"], raw["role"], raw.get("authority"), tuple(marks)))
        except (KeyError, TypeError) as exc:
            raise InvalidTopology(f"malformed topology: {exc}") from exc
        topo = cls(tuple(entities))
        topo.validate()
        return topo

    @classmethod
    def load(cls, path: Union[str, Path]) -> "FederationTopology":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def default(cls) -> "FederationTopology":
        """Anchor, one accreditation intermediate, a QEAA provider under it, a wallet provider."""
        anchor = "https://trust-anchor.example"
        inter = "https://accreditation-body.example"
        return cls((
            EntitySpec(anchor, "anchor"),
            EntitySpec(inter, "intermediate", anchor, (MarkSpec("accreditation-body"),)),
            EntitySpec("https://qeaa-provider.example", "provider", inter, (MarkSpec("qeaa-provider"),)),
            EntitySpec("https://wallet-provider.example", "provider", anchor, (MarkSpec("wallet-provider"),)),
        ))


def short_name(entity_id: str) -> str:
    """``https://qeaa-provider.example`` -> ``qeaa-provider``."""
    host = urlsplit(entity_id).hostname or entity_id
    return host.split(".")[0]


@dataclass(frozen=True)
class _State:
    keys: Mapping[str, Jwk]
    generations: Mapping[str, int]
    certs: Mapping[str, EndpointCert]
    presented: Mapping[str, str] = field(default_factory=dict)
    outages: FrozenSet[str] = frozenset()
    silent: FrozenSet[str] = frozenset()
    latency: Mapping[str, float] = field(default_factory=dict)
    revoked: FrozenSet[str] = frozenset()
    expired: FrozenSet[str] = frozenset()
    corrupted: FrozenSet[str] = frozenset()


class FederationHandle:
    def __init__(self, topology: FederationTopology, rng_seed, clock: Clock,
                 statement_lifetime_s: int = STATEMENT_LIFETIME_S) -> None:
        topology.validate()
        self.topology = topology
        self.seed = rng_seed
        self.clock = clock
        self.issued_at = clock.now()
        self.statement_lifetime_s = statement_lifetime_s
        self._lock = threading.Lock()
        self._http = None
        self.on_rotate: Optional[Callable[[str, Jwk], None]] = None
        keys = {e: self._derive_key(e, 0) for e in topology.ids()}
        certs = {}
        for e in topology.ids():
            tls = Jwk.generate(f"{e}#tls", seeded_rng(rng_seed, f"tls|{e}"))
            certs[e] = EndpointCert(e, tls.public(), self.issued_at, self.issued_at + CERT_LIFETIME_S)
        self._state = _State(keys, {e: 0 for e in keys}, certs)

    # -- derived material -------------------------------------------------

    def _derive_key(self, entity_id: str, generation: int) -> Jwk:
        rng = seeded_rng(self.seed, f"federation-key|{entity_id}|{generation}")
        return Jwk.generate(f"{short_name(entity_id)}-k{generation}", rng)

    @property
    def anchor_id(self) -> str:
        return self.topology.anchor.entity_id

    def anchor_key(self) -> Jwk:
        """The anchor's public key, as a relying party would obtain it out of band."""
        return self._state.keys[self.anchor_id].public()

    def entity_key(self, entity_id: str) -> Jwk:
        """Private signing key of an entity (providers sign credentials with it)."""
        return self._state.keys[entity_id]

    def endpoint_cert(self, entity_id: str) -> EndpointCert:
        return self._state.certs[entity_id]

    def pinned_certs(self) -> Dict[str, bytes]:
        """Genuine endpoint certificate fingerprints keyed by origin."""
        return {e: c.fingerprint for e, c in self._state.certs.items()}

    def mark_id(self, entity_id: str, mark_type: str) -> str:
        return f"{mark_type}@{short_name(entity_id)}"

    def marks(self, entity_id: str, state: Optional[_State] = None) -> List[TrustMark]:
        st = state or self._state
        spec = self.topology.get(entity_id)
        out = []
        for m in spec.marks:
            issuer = m.issuer or self.anchor_id
            out.append(TrustMark.build(
                st.keys[issuer], self.mark_id(entity_id, m.mark_type), m.mark_type, issuer,
                entity_id, status_url(entity_id), self.issued_at,
            ))
        return out

    def all_mark_ids(self) -> List[str]:
        return [self.mark_id(e.entity_id, m.mark_type) for e in self.topology.entities for m in e.marks]

    def _trust_mark_issuers(self) -> Dict[str, List[str]]:
        out: Dict[str, List[str]] = {}
        for e in self.topology.entities:
            for m in e.marks:
                issuer = m.issuer or self.anchor_id
                lst = out.setdefault(m.mark_type, [])
                if issuer not in lst:
                    lst.append(issuer)
        return out

    def _times(self, subject: str, st: _State) -> Tuple[int, int]:
        iat, exp = self.issued_at, self.issued_at + self.statement_lifetime_s
        if subject in st.expired:
            exp = min(exp, self.clock.now() - 1)
            iat = min(iat, exp - 1)
        return iat, exp

    def _finish(self, statement: EntityStatement, st: _State) -> str:
        token = statement.token
        if statement.subject_id in st.corrupted:
            head, payload, sig = token.split(".")
            raw = bytearray(b64url_decode(sig))
            raw[0] ^= 0x01
            token = f"{head}.{payload}.{b64url_encode(bytes(raw))}"
        return token

    def entity_configuration(self, entity_id: str, state: Optional[_State] = None) -> str:
        st = state or self._state
        spec = self.topology.get(entity_id)
        iat, exp = self._times(entity_id, st)
        stmt = build_entity_statement(
            st.keys[entity_id], entity_id, entity_id, [st.keys[entity_id]], iat, exp,
            authority_hints=[spec.authority] if spec.authority else [],
            trust_marks=self.marks(entity_id, st),
            trust_mark_issuers=self._trust_mark_issuers() if spec.role == "anchor" else None,
        )
        return self._finish(stmt, st)

    def subordinate_statement(self, issuer_id: str, subject_id: str, state: Optional[_State] = None) -> Optional[str]:
        st = state or self._state
        try:
            spec = self.topology.get(subject_id)
        except KeyError:
            return None
        if spec.authority != issuer_id:
            return None
        iat, exp = self._times(subject_id, st)
        stmt = build_entity_statement(
            st.keys[issuer_id], issuer_id, subject_id, [st.keys[subject_id]], iat, exp,
            trust_marks=self.marks(subject_id, st),
        )
        return self._finish(stmt, st)

    # -- request dispatch -------------------------------------------------

    def dispatch(self, method: str, url: str, body: bytes = b"",
                 timeout: Optional[float] = None) -> Exchange:
        """Answer a logical federation request; raises TransportError on outage."""
        st = self._state
        origin = origin_of(url)
        if origin not in st.certs:
            raise TransportError(f"no such host {origin}")
        if origin in st.outages:
            raise TransportError(f"{origin} is down")
        if timeout is not None and st.latency.get(origin, 0.0) > timeout:
            raise TransportTimeout(f"{origin} did not answer within {timeout}s")
        cert = st.certs[st.presented.get(origin, origin)]
        path = urlsplit(url).path
        status, payload = 404, b""
        if method == "GET" and path == CONFIGURATION_PATH:
            status, payload = 200, self.entity_configuration(origin, st).encode("ascii")
        elif method == "GET" and path == "/fetch":
            sub = parse_qs(urlsplit(url).query).get("sub", [""])[0]
            token = self.subordinate_statement(origin, unquote(sub), st)
            if token is not None:
                status, payload = 200, token.encode("ascii")
        elif method == "POST" and path == "/status":
            status, payload = self._status_response(origin, body, st)
        return Exchange(method, url, body, status, payload, cert)

    def _status_response(self, origin: str, body: bytes, st: _State) -> Tuple[int, bytes]:
        if origin in st.silent:
            return 200, b""
        try:
            mark_id = json.loads(body)["trust_mark_id"]
        except (json.JSONDecodeError, KeyError, TypeError, UnicodeDecodeError):
            return 400, b""
        known = {self.mark_id(origin, m.mark_type) for m in self.topology.get(origin).marks}
        if mark_id not in known:
            return 404, b""
        # Unsigned plain JSON, as real federation status endpoints answer.
        return 200, canonical_json({"active": mark_id not in st.revoked})

    def transport(self) -> "MockTransport":
        return MockTransport(self)

    # -- mutations --------------------------------------------------------

    def _check(self, entity_id: str) -> None:
        if entity_id not in self._state.certs:
            raise KeyError(f"unknown entity {entity_id!r}")

    def inject_outage(self, entity_id: str) -> None:
        self._check(entity_id)
        with self._lock:
            self._state = replace(self._state, outages=self._state.outages | {entity_id})

    def restore(self, entity_id: str) -> None:
        """Clear every fault attached to ``entity_id`` (keys stay rotated)."""
        self._check(entity_id)
        with self._lock:
            st = self._state
            presented = {k: v for k, v in st.presented.items() if entity_id not in (k, v)}
            latency = {k: v for k, v in st.latency.items() if k != entity_id}
            self._state = replace(
                st,
                outages=st.outages - {entity_id},
                silent=st.silent - {entity_id},
                expired=st.expired - {entity_id},
                corrupted=st.corrupted - {entity_id},
                presented=presented,
                latency=latency,
            )

    def revoke_mark(self, mark_id: str) -> None:
        if mark_id not in self.all_mark_ids():
            raise KeyError(f"unknown trust mark {mark_id!r}")
        with self._lock:
            self._state = replace(self._state, revoked=self._state.revoked | {mark_id})

    def reinstate_mark(self, mark_id: str) -> None:
        with self._lock:
            self._state = replace(self._state, revoked=self._state.revoked - {mark_id})

    def rotate_key(self, entity_id: str) -> Jwk:
        self._check(entity_id)
        with self._lock:
            st = self._state
            gen = st.generations[entity_id] + 1
            key = self._derive_key(entity_id, gen)
            self._state = replace(
                st,
                keys={**st.keys, entity_id: key},
                generations={**st.generations, entity_id: gen},
            )
        if self.on_rotate is not None:
            self.on_rotate(entity_id, key)
        return key

    def set_silent(self, entity_id: str) -> None:
        self._check(entity_id)
        with self._lock:
            self._state = replace(self._state, silent=self._state.silent | {entity_id})

    def set_latency(self, entity_id: str, seconds: float) -> None:
        self._check(entity_id)
        with self._lock:
            self._state = replace(self._state, latency={**self._state.latency, entity_id: float(seconds)})

    def expire_statement(self, entity_id: str) -> None:
        """Statements about ``entity_id`` are served already expired."""
        self._check(entity_id)
        with self._lock:
            self._state = replace(self._state, expired=self._state.expired | {entity_id})

    def corrupt_signature(self, entity_id: str) -> None:
        """Statements about ``entity_id`` are served with a flipped signature bit."""
        self._check(entity_id)
        with self._lock:
            self._state = replace(self._state, corrupted=self._state.corrupted | {entity_id})

    def swap_certs(self, a: str, b: str) -> None:
        """Endpoints of ``a`` and ``b`` present each other's certificates."""
        self._check(a)
        self._check(b)
        with self._lock:
            self._state = replace(self._state, presented={**self._state.presented, a: b, b: a})

    # -- HTTP -------------------------------------------------------------

    def serve_http(self, host: str = "127.0.0.1", port: int = 0) -> str:
        from .http import FederationHttpServer

        if self._http is None:
            self._http = FederationHttpServer(self, host, port)
            self._http.start()
        return self._http.base_url

    def close(self) -> None:
        if self._http is not None:
            self._http.stop()
            self._http = None

    def __enter__(self) -> "FederationHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class MockTransport:
    """In-process transport; simulated latency beyond the timeout is a timeout."""

    def __init__(self, handle: FederationHandle) -> None:
        self.handle = handle

    def get(self, url: str, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange:
        return self.handle.dispatch("GET", url, b"", timeout)

    def post(self, url: str, body: bytes, timeout: float = DEFAULT_TIMEOUT_S) -> Exchange:
        return self.handle.dispatch("POST", url, body, timeout)


def serve_mock_federation(topology: FederationTopology, rng_seed, clock: Clock,
                          http: bool = False) -> FederationHandle:
    handle = FederationHandle(topology, rng_seed, clock)
    if http:
        handle.serve_http()
    return handle
