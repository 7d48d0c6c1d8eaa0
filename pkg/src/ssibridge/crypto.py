"""Keys, digests and the compact signed-token format.

The compact token is ``b64url(header).b64url(payload).b64url(signature)``
with unpadded base64url. The signature covers the ASCII bytes of
``b64url(header).b64url(payload)`` exactly as transmitted.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import MalformedToken, SignatureInvalid, SigningKeyUnavailable

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)


# ---------------------------------------------------------------------------
# encoding helpers
# ---------------------------------------------------------------------------

def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    """Strict unpadded base64url decode.

    Rejects padding, foreign characters and non-canonical trailing bits, so
    every byte string has exactly one accepted encoding.
    """
    if not isinstance(text, str) or "=" in text or len(text) % 4 == 1:
        raise MalformedToken("invalid base64url segment")
    try:
        raw = base64.b64decode(text + "=" * (-len(text) % 4), altchars=b"-_", validate=True)
    except (binascii.Error, ValueError) as exc:
        raise MalformedToken("invalid base64url segment") from exc
    if b64url_encode(raw) != text:
        raise MalformedToken("non-canonical base64url segment")
    return raw


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def sha256(data: Union[bytes, str]) -> bytes:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).digest()


def digest_hex(d: bytes) -> str:
    if len(d) != DIGEST_SIZE:
        raise ValueError(f"digest must be {DIGEST_SIZE} bytes, got {len(d)}")
    return d.hex()


def digest_from_hex(text: str) -> bytes:
    if len(text) != 2 * DIGEST_SIZE or text != text.lower():
        raise ValueError("digest hex must be 64 lowercase characters")
    return bytes.fromhex(text)


# ---------------------------------------------------------------------------
# signature suites
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignatureSuite:
    """A named signature scheme operating on raw key material."""

    suite_id: str
    generate: Callable[[bytes], Tuple[bytes, bytes]]  # seed -> (private, public)
    sign: Callable[[bytes, bytes], bytes]
    verify: Callable[[bytes, bytes, bytes], bool]


def _ed_generate(seed: bytes) -> Tuple[bytes, bytes]:
    sk = Ed25519PrivateKey.from_private_bytes(sha256(seed))
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    return sk.private_bytes(
        serialization.Encoding.Raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()
    ), pk


def _ed_sign(private: bytes, message: bytes) -> bytes:
    # The curve signature is taken over the 32-byte SHA-256 of the message.
    return Ed25519PrivateKey.from_private_bytes(private).sign(sha256(message))


def _ed_verify(public: bytes, message: bytes, signature: bytes) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, sha256(message))
    except (InvalidSignature, ValueError):
        return False
    return True


ED25519_SHA256 = SignatureSuite("Ed25519-SHA256", _ed_generate, _ed_sign, _ed_verify)

SUITES: Dict[str, SignatureSuite] = {ED25519_SHA256.suite_id: ED25519_SHA256}
DEFAULT_SUITE = ED25519_SHA256.suite_id


def register_suite(suite: SignatureSuite) -> None:
    if suite.suite_id in SUITES:
        raise ValueError(f"suite {suite.suite_id!r} already registered")
    SUITES[suite.suite_id] = suite


def get_suite(suite_id: str) -> SignatureSuite:
    try:
        return SUITES[suite_id]
    except KeyError:
        raise ValueError(f"unknown signature suite {suite_id!r}") from None


# ---------------------------------------------------------------------------
# keys
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Jwk:
    key_id: str
    suite_id: str
    public_material: bytes
    private_material: Optional[bytes] = None

    def __repr__(self) -> str:  # never print private material
        return f"Jwk(key_id={self.key_id!r}, suite_id={self.suite_id!r}, private={self.has_private})"

    @classmethod
    def generate(cls, key_id: str, rng: Optional[random.Random] = None,
                 suite_id: str = DEFAULT_SUITE) -> "Jwk":
        seed = rng.randbytes(32) if rng is not None else os.urandom(32)
        private, public = get_suite(suite_id).generate(seed)
        return cls(key_id, suite_id, public, private)

    @property
    def has_private(self) -> bool:
        return self.private_material is not None

    def public(self) -> "Jwk":
        return Jwk(self.key_id, self.suite_id, self.public_material)

    def sign(self, message: bytes) -> bytes:
        if self.private_material is None:
            raise SigningKeyUnavailable(f"key {self.key_id!r} has no private material")
        return get_suite(self.suite_id).sign(self.private_material, message)

    def verify(self, message: bytes, signature: bytes) -> bool:
        return get_suite(self.suite_id).verify(self.public_material, message, signature)

    def public_dict(self) -> dict:
        return {"kid": self.key_id, "suite": self.suite_id, "pub": b64url_encode(self.public_material)}

    def to_dict(self, include_private: bool = False) -> dict:
        d = self.public_dict()
        if include_private and self.private_material is not None:
            d["priv"] = b64url_encode(self.private_material)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Jwk":
        try:
            priv = d.get("priv")
            return cls(
                str(d["kid"]),
                str(d["suite"]),
                b64url_decode(d["pub"]),
                b64url_decode(priv) if priv is not None else None,
            )
        except (KeyError, TypeError) as exc:
            raise MalformedToken(f"invalid key object: {exc}") from exc

    def fingerprint(self) -> bytes:
        """SHA-256 over the canonical public key object."""
        return sha256(canonical_json(self.public_dict()))

    def same_public(self, other: "Jwk") -> bool:
        return self.suite_id == other.suite_id and self.public_material == other.public_material


def save_key(key_dir: Union[str, Path], key: Jwk, include_private: bool = True) -> Path:
    """Persist ``key`` as ``<key_dir>/keys/<key_id>.json``."""
    safe = key.key_id.replace("/", "_").replace(":", "_")
    path = Path(key_dir) / "keys" / f"{safe}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(key.to_dict(include_private), indent=2, sort_keys=True) + "\n")
    return path


def load_key(key_dir: Union[str, Path], key_id: str) -> Jwk:
    safe = key_id.replace("/", "_").replace(":", "_")
    path = Path(key_dir) / "keys" / f"{safe}.json"
    return Jwk.from_dict(json.loads(path.read_text()))


# ---------------------------------------------------------------------------
# compact signed tokens
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecodedToken:
    header: dict
    payload: dict
    signing_input: bytes
    signature: bytes
    raw: str


def sign_compact(key: Jwk, payload: dict, typ: str, extra_header: Optional[dict] = None) -> str:
    header = {"alg": key.suite_id, "kid": key.key_id, "typ": typ}
    if extra_header:
        header.update(extra_header)
    signing_input = b64url_encode(canonical_json(header)) + "." + b64url_encode(canonical_json(payload))
    signature = key.sign(signing_input.encode("ascii"))
    return signing_input + "." + b64url_encode(signature)


def decode_compact(token: str) -> DecodedToken:
    """Split and decode a compact token without verifying it."""
    if not isinstance(token, str):
        raise MalformedToken("token must be a string")
    parts = token.split(".")
    if len(parts) != 3:
        raise MalformedToken("compact token must have three segments")
    try:
        header = json.loads(b64url_decode(parts[0]))
        payload = json.loads(b64url_decode(parts[1]))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedToken(f"undecodable token segment: {exc}") from exc
    if not isinstance(header, dict) or not isinstance(payload, dict):
        raise MalformedToken("token header and payload must be JSON objects")
    signature = b64url_decode(parts[2])
    return DecodedToken(header, payload, (parts[0] + "." + parts[1]).encode("ascii"), signature, token)


def verify_compact(token: Union[str, DecodedToken], keys: Iterable[Jwk]) -> DecodedToken:
    """Verify ``token`` under any of ``keys``; the header ``kid`` narrows the search."""
    decoded = token if isinstance(token, DecodedToken) else decode_compact(token)
    kid = decoded.header.get("kid")
    alg = decoded.header.get("alg")
    candidates = [k for k in keys if k.suite_id == alg]
    if kid is not None:
        by_kid = [k for k in candidates if k.key_id == kid]
        candidates = by_kid or candidates
    for key in candidates:
        if key.verify(decoded.signing_input, decoded.signature):
            return decoded
    raise SignatureInvalid("no key verifies the token signature")


def seeded_rng(seed: Any, label: str = "") -> random.Random:
    """Independent deterministic RNG stream for ``(seed, label)``."""
    return random.Random(sha256(f"{seed}|{label}"))
