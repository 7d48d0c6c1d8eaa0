from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple
from urllib.parse import quote, urlsplit

from ..crypto import (
    Jwk,
    b64url_decode,
    b64url_encode,
    canonical_json,
    decode_compact,
    sha256,
    sign_compact,
)
from ..errors import MalformedToken

ENTITY_STATEMENT_TYP = "entity-statement+jwt"
TRUST_MARK_TYP = "trust-mark+jwt"
CONFIGURATION_PATH = "/.well-known/federation"


def origin_of(url: str) -> str:
    parts = urlsplit(url)
    return f"{parts.scheme}://{parts.netloc}"


def configuration_url(entity_id: str) -> str:
    return entity_id.rstrip("/") + CONFIGURATION_PATH


def fetch_url(issuer_id: str, subject_id: str) -> str:
    return issuer_id.rstrip("/") + "/fetch?sub=" + quote(subject_id, safe="")


def status_url(host_id: str) -> str:
    return host_id.rstrip("/") + "/status"


@dataclass(frozen=True)
class TrustMark:
    mark_id: str
    mark_type: str
    issuer_id: str
    subject_id: str
    status_endpoint: str
    iat: int
    token: str = field(compare=False, repr=False)

    @classmethod
    def build(cls, signing_key: Jwk, mark_id: str, mark_type: str, issuer_id: str,
              subject_id: str, status_endpoint: str, iat: int) -> "TrustMark":
        payload = {
            "id": mark_id,
            "trust_mark_type": mark_type,
            "iss": issuer_id,
            "sub": subject_id,
            "status_endpoint": status_endpoint,
            "iat": iat,
        }
        token = sign_compact(signing_key, payload, TRUST_MARK_TYP)
        return cls(mark_id, mark_type, issuer_id, subject_id, status_endpoint, iat, token)

    @classmethod
    def parse(cls, token: str) -> "TrustMark":
        p = decode_compact(token).payload
        try:
            return cls(p["id"], p["trust_mark_type"], p["iss"], p["sub"], p["status_endpoint"], int(p["iat"]), token)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedToken(f"invalid trust mark: {exc}") from exc


@dataclass(frozen=True)
class EntityStatement:
    issuer_id: str
    subject_id: str
    jwks: Tuple[Jwk, ...]
    authority_hints: Tuple[str, ...]
    trust_marks: Tuple[TrustMark, ...]
    trust_mark_issuers: Mapping[str, Tuple[str, ...]]
    iat: int
    exp: int
    token: str = field(compare=False, repr=False)

    @property
    def is_configuration(self) -> bool:
        return self.issuer_id == self.subject_id

    @classmethod
    def parse(cls, token: str) -> "EntityStatement":
        p = decode_compact(token).payload
        try:
            return cls(
                issuer_id=p["iss"],
                subject_id=p["sub"],
                jwks=tuple(Jwk.from_dict(k) for k in p["jwks"]["keys"]),
                authority_hints=tuple(p.get("authority_hints", [])),
                trust_marks=tuple(TrustMark.parse(t) for t in p.get("trust_marks", [])),
                trust_mark_issuers={k: tuple(v) for k, v in p.get("trust_mark_issuers", {}).items()},
                iat=int(p["iat"]),
                exp=int(p["exp"]),
                token=token,
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise MalformedToken(f"invalid entity statement: {exc}") from exc


def build_entity_statement(
    signing_key: Jwk,
    issuer_id: str,
    subject_id: str,
    jwks: Sequence[Jwk],
    iat: int,
    exp: int,
    authority_hints: Sequence[str] = (),
    trust_marks: Sequence[TrustMark] = (),
    trust_mark_issuers: Optional[Mapping[str, Sequence[str]]] = None,
) -> EntityStatement:
    if exp <= iat:
        raise ValueError("statement exp must be after iat")
    payload: Dict[str, Any] = {
        "iss": issuer_id,
        "sub": subject_id,
        "iat": iat,
        "exp": exp,
        "jwks": {"keys": [k.public_dict() for k in jwks]},
    }
    if authority_hints:
        payload["authority_hints"] = list(authority_hints)
    if trust_marks:
        payload["trust_marks"] = [m.token for m in trust_marks]
    if trust_mark_issuers:
        payload["trust_mark_issuers"] = {k: list(v) for k, v in sorted(trust_mark_issuers.items())}
    token = sign_compact(signing_key, payload, ENTITY_STATEMENT_TYP)
    return EntityStatement(
        issuer_id,
        subject_id,
        tuple(k.public() for k in jwks),
        tuple(authority_hints),
        tuple(trust_marks),
        {k: tuple(v) for k, v in (trust_mark_issuers or {}).items()},
        iat,
        exp,
        token,
    )


@dataclass(frozen=True)
class EndpointCert:
    """Stand-in for the TLS server certificate of a federation endpoint."""

    entity_id: str
    public_key: Jwk
    not_before: int
    not_after: int

    def to_bytes(self) -> bytes:
        return canonical_json({
            "entity_id": self.entity_id,
            "public_key": self.public_key.public_dict(),
            "not_before": self.not_before,
            "not_after": self.not_after,
        })

    @property
    def fingerprint(self) -> bytes:
        return sha256(self.to_bytes())

    def encode(self) -> str:
        return b64url_encode(self.to_bytes())

    @classmethod
    def decode(cls, text: str) -> "EndpointCert":
        import json

        d = json.loads(b64url_decode(text))
        return cls(d["entity_id"], Jwk.from_dict(d["public_key"]), int(d["not_before"]), int(d["not_after"]))


@dataclass(frozen=True)
class TrustChain:
    """Statements ordered leaf configuration, subordinate statements, anchor configuration.

    ``served_by`` records, per fetch made while resolving, the URL and the
    fingerprint of the certificate its endpoint presented.
    """

    statements: Tuple[EntityStatement, ...]
    served_by: Tuple[Tuple[str, Optional[bytes]], ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.statements)

    @property
    def leaf_id(self) -> str:
        return self.statements[0].subject_id

    @property
    def anchor_id(self) -> str:
        return self.statements[-1].issuer_id

    def entity_ids(self) -> List[str]:
        out: List[str] = []
        for s in self.statements:
            if s.issuer_id not in out:
                out.append(s.issuer_id)
        return out

    def leaf_keys(self) -> Tuple[Jwk, ...]:
        """Keys vouched for the leaf by its superior (or the anchor config itself)."""
        if len(self.statements) == 1:
            return self.statements[0].jwks
        return self.statements[1].jwks

    def tokens(self) -> List[str]:
        return [s.token for s in self.statements]

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "TrustChain":
        return cls(tuple(EntityStatement.parse(t) for t in tokens))


class Status(str, enum.Enum):
    ACTIVE = "Active"
    REVOKED = "Revoked"
    UNREACHABLE = "Unreachable"
    SILENT = "Silent"


@dataclass(frozen=True)
class StatusResult:
    mark_id: str
    status: Status
    endpoint: str
    queried_at: int
    endpoint_cert_fingerprint: Optional[bytes] = None
    raw_response: Optional[bytes] = None

    def __post_init__(self) -> None:
        if self.status in (Status.UNREACHABLE, Status.SILENT) and self.raw_response is not None:
            raise ValueError("unreachable and silent results carry no response")

    def to_dict(self) -> dict:
        return {
            "mark_id": self.mark_id,
            "status": self.status.value,
            "endpoint": self.endpoint,
            "queried_at": self.queried_at,
            "endpoint_cert_fingerprint": self.endpoint_cert_fingerprint.hex() if self.endpoint_cert_fingerprint else None,
        }


class Reason(str, enum.Enum):
    CHAIN_BROKEN = "ChainBroken"
    FETCH_FAILED = "FetchFailed"
    DEPTH_EXCEEDED = "DepthExceeded"
    CYCLE_DETECTED = "CycleDetected"
    ANCHOR_MISMATCH = "AnchorMismatch"
    BAD_SIGNATURE = "BadSignature"
    STATEMENT_EXPIRED = "StatementExpired"
    STATEMENT_NOT_YET_VALID = "StatementNotYetValid"
    MARK_INVALID = "MarkInvalid"
    MARK_ISSUER_UNAUTHORIZED = "MarkIssuerUnauthorized"
    MARK_SIGNATURE_INVALID = "MarkSignatureInvalid"
    TRANSPORT_COMPROMISED = "TransportCompromised"
    MARK_REVOKED = "MarkRevoked"
    MARK_SILENT = "MarkSilent"
    MARK_UNREACHABLE = "MarkUnreachable"


@dataclass(frozen=True)
class EntityResult:
    entity_id: str
    signature_ok: bool
    unexpired: bool
    marks: Tuple[StatusResult, ...] = ()
    mark_problems: Tuple[Tuple[str, Reason], ...] = ()

    def to_dict(self) -> dict:
        return {
            "entity_id": self.entity_id,
            "signature_ok": self.signature_ok,
            "unexpired": self.unexpired,
            "marks": [m.to_dict() for m in self.marks],
            "mark_problems": [[m, r.value] for m, r in self.mark_problems],
        }


@dataclass(frozen=True)
class ChainVerdict:
    reason: Optional[Reason]
    anchor_key_fingerprint: bytes
    entities: Tuple[EntityResult, ...] = ()
    offending_entity: Optional[str] = None

    @property
    def valid(self) -> bool:
        return self.reason is None

    @property
    def outcome(self) -> str:
        return "Valid" if self.valid else "Invalid"

    def status_results(self) -> List[StatusResult]:
        return [m for e in self.entities for m in e.marks]

    def summary(self) -> dict:
        return {
            "outcome": self.outcome,
            "reason": self.reason.value if self.reason else None,
            "offending_entity": self.offending_entity,
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["anchor_key_fingerprint"] = self.anchor_key_fingerprint.hex()
        d["entities"] = [e.to_dict() for e in self.entities]
        return d

    @classmethod
    def failed(cls, reason: Reason, anchor_key_fingerprint: bytes, offending_entity: Optional[str] = None) -> "ChainVerdict":
        return cls(reason, anchor_key_fingerprint, (), offending_entity)
