"""Publishable proofs that an attested verification happened.

Backends implement ``prove(statement, witness)`` and
``verify(statement, proof, trusted_roots)``. The bundled ``transcript``
backend is sound but neither succinct nor zero-knowledge: the proof is the
quote itself plus the public inputs the statement does not carry, and
verification re-runs quote verification. A SNARK backend can register
alongside it; the registry refuses any backend that claims zero-knowledge
without providing a witness-indistinguishability self-test.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .attested import AttestedCredential
from .crypto import b64url_decode, b64url_encode, canonical_json, digest_from_hex, sha256
from .enclave import PublicInputs, Quote, QuoteVerdict, VerificationTranscript, encode_fields, verify_quote
from .errors import BackendRegistrationError, MalformedToken, UnknownBackend, WitnessStatementMismatch


@dataclass(frozen=True)
class ProofStatement:
    root_of_trust_fingerprint: bytes
    credential_digest: bytes
    measurement: bytes
    policy_digest: bytes
    verified_at: int
    outcome: int

    def encode(self) -> bytes:
        return encode_fields([
            self.root_of_trust_fingerprint,
            self.credential_digest,
            self.measurement,
            self.policy_digest,
            struct.pack(">Q", self.verified_at),
            bytes([self.outcome]),
        ])

    def to_dict(self) -> dict:
        return {
            "root_of_trust_fingerprint": self.root_of_trust_fingerprint.hex(),
            "credential_digest": self.credential_digest.hex(),
            "measurement": self.measurement.hex(),
            "policy_digest": self.policy_digest.hex(),
            "verified_at": self.verified_at,
            "outcome": self.outcome,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProofStatement":
        return cls(
            digest_from_hex(d["root_of_trust_fingerprint"]),
            digest_from_hex(d["credential_digest"]),
            digest_from_hex(d["measurement"]),
            digest_from_hex(d["policy_digest"]),
            int(d["verified_at"]),
            int(d["outcome"]),
        )

    @classmethod
    def from_attested(cls, att: AttestedCredential) -> "ProofStatement":
        pi = att.public_inputs()
        return cls(att.quote.root_fingerprint, pi.credential_digest, pi.measurement,
                   pi.policy_digest, pi.verified_at, pi.outcome)

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]


def statement_digest(s: ProofStatement) -> bytes:
    return sha256(s.encode())


@dataclass(frozen=True)
class ProofWitness:
    quote: Quote
    anchor_key_fingerprint: bytes
    endpoint_cert_fingerprints: Tuple[bytes, ...]

    @classmethod
    def from_transcript(cls, transcript: VerificationTranscript, quote: Quote) -> "ProofWitness":
        pi = transcript.public_inputs
        return cls(quote, pi.anchor_key_fingerprint, pi.endpoint_cert_fingerprints)

    @classmethod
    def from_attested(cls, att: AttestedCredential) -> "ProofWitness":
        pi = att.public_inputs()
        return cls(att.quote, pi.anchor_key_fingerprint, pi.endpoint_cert_fingerprints)

    def public_inputs_for(self, s: ProofStatement) -> PublicInputs:
        return PublicInputs(s.credential_digest, self.anchor_key_fingerprint, self.endpoint_cert_fingerprints,
                            s.measurement, s.policy_digest, s.verified_at, s.outcome)


@dataclass(frozen=True)
class Proof:
    backend_id: str
    payload: bytes

    def to_dict(self) -> dict:
        return {"backend_id": self.backend_id, "payload_b64": b64url_encode(self.payload)}

    @classmethod
    def from_dict(cls, d: dict) -> "Proof":
        return cls(d["backend_id"], b64url_decode(d["payload_b64"]))


class ProofBackend:
    backend_id: str = ""
    succinct: bool = False
    zero_knowledge: bool = False
    # Backends claiming zero-knowledge must set this to a callable returning bool.
    witness_indistinguishability_self_test: Optional[Callable[[], bool]] = None

    def prove(self, statement: ProofStatement, witness: ProofWitness) -> Proof:
        raise NotImplementedError

    def verify(self, statement: ProofStatement, proof: Proof, trusted_roots: Sequence[bytes]) -> bool:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"backend_id": self.backend_id, "succinct": self.succinct, "zero_knowledge": self.zero_knowledge}


class TranscriptBackend(ProofBackend):
    backend_id = "transcript"

    def prove(self, statement: ProofStatement, witness: ProofWitness) -> Proof:
        q = witness.quote
        inputs = witness.public_inputs_for(statement)
        if q.root_fingerprint != statement.root_of_trust_fingerprint:
            raise WitnessStatementMismatch("witness quote is rooted elsewhere")
        verdict = verify_quote(q, statement.root_of_trust_fingerprint, statement.measurement, inputs)
        if verdict is not QuoteVerdict.VALID:
            raise WitnessStatementMismatch(f"witness does not support the statement: {verdict.value}")
        payload = canonical_json({
            "quote": q.to_dict(),
            "anchor_key_fingerprint": witness.anchor_key_fingerprint.hex(),
            "endpoint_cert_fingerprints": [f.hex() for f in inputs.endpoint_cert_fingerprints],
        })
        return Proof(self.backend_id, payload)

    def verify(self, statement: ProofStatement, proof: Proof, trusted_roots: Sequence[bytes]) -> bool:
        if proof.backend_id != self.backend_id:
            return False
        try:
            body = json.loads(proof.payload)
            witness = ProofWitness(
                Quote.from_dict(body["quote"]),
                digest_from_hex(body["anchor_key_fingerprint"]),
                tuple(digest_from_hex(f) for f in body["endpoint_cert_fingerprints"]),
            )
        except (ValueError, KeyError, TypeError, IndexError, AttributeError, MalformedToken):
            return False
        root = statement.root_of_trust_fingerprint
        if root not in trusted_roots or witness.quote.root_fingerprint != root:
            return False
        inputs = witness.public_inputs_for(statement)
        return verify_quote(witness.quote, root, statement.measurement, inputs) is QuoteVerdict.VALID


_REGISTRY: Dict[str, ProofBackend] = {}


def register_backend(backend: ProofBackend) -> None:
    if not backend.backend_id:
        raise BackendRegistrationError("backend needs an id")
    if backend.zero_knowledge and not callable(backend.witness_indistinguishability_self_test):
        raise BackendRegistrationError(
            f"backend {backend.backend_id!r} claims zero-knowledge without a witness-indistinguishability self-test"
        )
    if backend.zero_knowledge and not backend.witness_indistinguishability_self_test():
        raise BackendRegistrationError(f"backend {backend.backend_id!r} failed its zero-knowledge self-test")
    _REGISTRY[backend.backend_id] = backend


def unregister_backend(backend_id: str) -> None:
    _REGISTRY.pop(backend_id, None)


def get_backend(backend_id: str) -> ProofBackend:
    try:
        return _REGISTRY[backend_id]
    except KeyError:
        raise UnknownBackend(f"no proof backend {backend_id!r}") from None


def registry() -> Dict[str, dict]:
    return {k: b.describe() for k, b in _REGISTRY.items()}


def prove(backend_id: str, statement: ProofStatement, witness: ProofWitness) -> Proof:
    return get_backend(backend_id).prove(statement, witness)


def prove_transcript_backend(statement: ProofStatement, witness: ProofWitness) -> Proof:
    return get_backend(TranscriptBackend.backend_id).prove(statement, witness)


def verify_proof(backend_id: str, statement: ProofStatement, proof: Proof, trusted_roots: Sequence[bytes]) -> bool:
    backend = get_backend(backend_id)
    if proof.backend_id != backend_id:
        return False
    return backend.verify(statement, proof, tuple(trusted_roots))


register_backend(TranscriptBackend())
