"""SD-JWT-VC credentials with selectively disclosable claims.

Only the subset of SD-JWT needed here: flat ``_sd`` digests over top-level
claims, ``sha-256`` as the digest algorithm, no decoys, no key binding JWT.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple, Union

from .clock import Clock
from .crypto import (
    Jwk,
    b64url_decode,
    b64url_encode,
    canonical_json,
    decode_compact,
    sha256,
    sign_compact,
    verify_compact,
)
from .errors import (
    Expired,
    InvalidClaimName,
    InvalidLifetime,
    MalformedToken,
    NotYetValid,
    SigningKeyUnavailable,
    UnknownDisclosure,
    UnknownDisclosureDigest,
)

SD_ALG = "sha-256"
SD_JWT_TYP = "vc+sd-jwt"
SALT_SIZE = 16
RESERVED_CLAIMS = frozenset({"iss", "sub", "vct", "iat", "exp", "nbf", "_sd", "_sd_alg", "cnf", "status"})


@dataclass(frozen=True)
class Disclosure:
    salt: bytes
    claim_name: str
    claim_value: Any
    encoded: str = field(compare=False)

    def digest(self) -> bytes:
        return disclosure_digest(self)

    @classmethod
    def parse(cls, encoded: str) -> "Disclosure":
        try:
            arr = json.loads(b64url_decode(encoded))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedToken(f"undecodable disclosure: {exc}") from exc
        if not (isinstance(arr, list) and len(arr) == 3 and isinstance(arr[0], str) and isinstance(arr[1], str)):
            raise MalformedToken("disclosure must be a [salt, name, value] array")
        salt = b64url_decode(arr[0])
        if len(salt) != SALT_SIZE or not arr[1]:
            raise MalformedToken("disclosure salt or name invalid")
        return cls(salt, arr[1], arr[2], encoded)


def make_disclosure(salt: bytes, name: str, value: Any) -> Disclosure:
    if not isinstance(name, str) or not name:
        raise InvalidClaimName("claim name must be a non-empty string")
    if len(salt) != SALT_SIZE:
        raise ValueError(f"salt must be exactly {SALT_SIZE} bytes")
    encoded = b64url_encode(canonical_json([b64url_encode(salt), name, value]))
    return Disclosure(bytes(salt), name, value, encoded)


def disclosure_digest(d: Disclosure) -> bytes:
    return sha256(d.encoded.encode("ascii"))


@dataclass(frozen=True)
class SdJwtVc:
    issuer_jwt: str
    disclosures: Tuple[Disclosure, ...] = ()

    @property
    def compact(self) -> str:
        return self.issuer_jwt + "~" + "".join(d.encoded + "~" for d in self.disclosures)

    @property
    def payload(self) -> dict:
        return decode_compact(self.issuer_jwt).payload

    @property
    def issuer(self) -> str:
        return self.payload["iss"]

    def disclosable_names(self) -> Tuple[str, ...]:
        return tuple(d.claim_name for d in self.disclosures)

    @classmethod
    def parse(cls, compact: str) -> "SdJwtVc":
        if not isinstance(compact, str) or not compact.endswith("~"):
            raise MalformedToken("SD-JWT compact form must end with '~'")
        parts = compact.split("~")
        jwt, encoded = parts[0], parts[1:-1]
        decode_compact(jwt)
        if any(not e for e in encoded):
            raise MalformedToken("empty disclosure segment")
        return cls(jwt, tuple(Disclosure.parse(e) for e in encoded))


def credential_digest(compact_form: Union[str, bytes]) -> bytes:
    """SHA-256 over the compact form exactly as transmitted."""
    if isinstance(compact_form, str):
        compact_form = compact_form.encode("utf-8")
    return sha256(compact_form)


def issue_sd_jwt_vc(
    issuer_key: Jwk,
    always_visible: Mapping[str, Any],
    disclosable: Mapping[str, Any],
    vct: str,
    lifetime_s: int,
    clock: Clock,
    rng: Optional[random.Random] = None,
    cnf: Optional[dict] = None,
) -> SdJwtVc:
    """Issue a credential; ``iss`` defaults to the signing key id."""
    if not issuer_key.has_private:
        raise SigningKeyUnavailable(f"key {issuer_key.key_id!r} has no private material")
    if lifetime_s <= 0:
        raise InvalidLifetime("lifetime_s must be positive")
    for name in disclosable:
        if not name or name in RESERVED_CLAIMS:
            raise InvalidClaimName(f"claim {name!r} cannot be selectively disclosable")
        if name in always_visible:
            raise InvalidClaimName(f"claim {name!r} is both visible and disclosable")
    rng = rng or random.Random()
    disclosures = [make_disclosure(rng.randbytes(SALT_SIZE), n, v) for n, v in disclosable.items()]
    iat = clock.now()
    payload = dict(always_visible)
    payload.setdefault("iss", issuer_key.key_id)
    payload.update(
        vct=vct,
        iat=iat,
        exp=iat + int(lifetime_s),
        _sd=sorted(b64url_encode(disclosure_digest(d)) for d in disclosures),
        _sd_alg=SD_ALG,
    )
    if cnf is not None:
        payload["cnf"] = cnf
    jwt = sign_compact(issuer_key, payload, SD_JWT_TYP)
    return SdJwtVc(jwt, tuple(disclosures))


def present(cred: SdJwtVc, selected: Iterable[str]) -> SdJwtVc:
    """Keep only the disclosures named in ``selected``; the issuer JWT is untouched."""
    selected = set(selected)
    unknown = selected - set(cred.disclosable_names())
    if unknown:
        raise UnknownDisclosure(f"no disclosure for {sorted(unknown)}")
    return SdJwtVc(cred.issuer_jwt, tuple(d for d in cred.disclosures if d.claim_name in selected))


@dataclass(frozen=True)
class VerifiedClaims:
    claims: Dict[str, Any]
    disclosed: FrozenSet[str]
    issuer: str
    key_id: str


def check_disclosures(payload: Mapping[str, Any], disclosures: Sequence[Disclosure]) -> Dict[str, Any]:
    """Match disclosures against ``_sd`` and return the disclosed claims."""
    if payload.get("_sd_alg", SD_ALG) != SD_ALG:
        raise MalformedToken(f"unsupported _sd_alg {payload.get('_sd_alg')!r}")
    sd = payload.get("_sd", [])
    if not isinstance(sd, list) or len(set(sd)) != len(sd):
        raise MalformedToken("_sd must be a list of distinct digests")
    allowed = set(sd)
    seen = set()
    out: Dict[str, Any] = {}
    for d in disclosures:
        dig = b64url_encode(disclosure_digest(d))
        if dig not in allowed or dig in seen:
            raise UnknownDisclosureDigest(f"disclosure for {d.claim_name!r} is not committed in _sd")
        if d.claim_name in payload or d.claim_name in out:
            raise MalformedToken(f"disclosed claim {d.claim_name!r} collides with another claim")
        seen.add(dig)
        out[d.claim_name] = d.claim_value
    return out


def verify_sd_jwt_vc(cred: SdJwtVc, issuer_keys: Sequence[Jwk], clock: Clock, leeway_s: int = 0) -> VerifiedClaims:
    """Check the issuer signature first, then the validity interval, then disclosures.

    The credential is valid for ``iat <= now < exp``; ``leeway_s`` only
    relaxes the ``iat`` bound for issuer clock skew.
    """
    decoded = verify_compact(cred.issuer_jwt, issuer_keys)
    payload = decoded.payload
    now = clock.now()
    iat, exp = payload.get("iat"), payload.get("exp")
    if not isinstance(iat, int) or not isinstance(exp, int):
        raise MalformedToken("iat and exp must be integers")
    if iat > now + leeway_s:
        raise NotYetValid(f"credential not valid before {iat}")
    if now >= exp:
        raise Expired(f"credential expired at {exp}")
    disclosed = check_disclosures(payload, cred.disclosures)
    claims = {k: v for k, v in payload.items() if k not in ("_sd", "_sd_alg")}
    claims.update(disclosed)
    return VerifiedClaims(claims, frozenset(disclosed), payload.get("iss", ""), decoded.header.get("kid", ""))
