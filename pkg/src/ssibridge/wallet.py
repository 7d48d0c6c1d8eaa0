"""End-to-end holder and relying-party flows.

Creation (IT-Wallet export, preflight outside the enclave, attested run,
re-issuance), publication (proof plus verifier-contract transaction) and
presentation with an offline relying-party check that never contacts the
federation.
"""

from __future__ import annotations

import enum
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from . import sdjwt
from .attested import AttestedCredential, holder_did, issue_attested_jwt_vc
from .clock import Clock
from .crypto import Jwk, digest_from_hex, sha256
from .enclave import Platform, Quote, QuoteVerdict, VerificationTranscript, WorkloadDescriptor, run_attested_verification, verify_quote
from .errors import (
    CycleDetected,
    DepthExceeded,
    EnclaveTransportCompromised,
    FetchFailed,
    MalformedToken,
    NotAuthenticated,
    NotPublished,
    PreflightFailed,
    ProofRejected,
    SignatureInvalid,
    SsiBridgeError,
    TransportCompromised,
    UnknownCredential,
    WitnessStatementMismatch,
)
from .federation import ChainVerdict, Reason, Transport, resolve_trust_chain, verify_trust_chain
from .ledger import Chain, EventRef, Index, VerifierContract, submit_proof_tx, EVENT_NAME
from .proof import ProofStatement, ProofWitness, prove, statement_digest
from .sdjwt import SdJwtVc, credential_digest

DEFAULT_WINDOW_S = 7 * 86400


# ---------------------------------------------------------------------------
# IT-Wallet side
# ---------------------------------------------------------------------------

@dataclass
class SimItWallet:
    """Stand-in for the government wallet: stores credentials, exports after eID login."""

    holder_id: str
    credentials: Dict[str, SdJwtVc] = field(default_factory=dict)
    authenticated: bool = False

    def login(self, eid_credential: str) -> None:
        if not eid_credential:
            raise NotAuthenticated("empty eID credential")
        self.authenticated = True

    def logout(self) -> None:
        self.authenticated = False

    def store(self, cred_id: str, cred: SdJwtVc) -> None:
        self.credentials[cred_id] = cred

    def to_dict(self) -> dict:
        return {
            "holder_id": self.holder_id,
            "authenticated": self.authenticated,
            "credentials": {k: v.compact for k, v in self.credentials.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimItWallet":
        creds = {k: SdJwtVc.parse(v) for k, v in d.get("credentials", {}).items()}
        return cls(d["holder_id"], creds, bool(d.get("authenticated", False)))


def export_credential(it_wallet: SimItWallet, cred_id: str) -> SdJwtVc:
    if not it_wallet.authenticated:
        raise NotAuthenticated("log in with an eID before exporting")
    try:
        cred = it_wallet.credentials[cred_id]
    except KeyError:
        raise UnknownCredential(f"no credential {cred_id!r}") from None
    return SdJwtVc.parse(cred.compact)


# ---------------------------------------------------------------------------
# contexts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FederationContext:
    """How the wallet reaches the federation, and what it pins out of band."""

    transport: Transport
    anchor_key: Jwk
    pinned_certs: Mapping[str, bytes]
    timeout: float = 2.0


@dataclass
class EnclaveContext:
    platform: Platform
    workload: WorkloadDescriptor
    calls: int = 0

    def run(self, cred: SdJwtVc, fed: FederationContext, clock: Clock):
        self.calls += 1
        return run_attested_verification(
            self.platform, self.workload, cred, fed.anchor_key, fed.transport, clock, fed.pinned_certs, fed.timeout
        )


# ---------------------------------------------------------------------------
# SSI wallet
# ---------------------------------------------------------------------------

class SsiWallet:
    """Holder wallet. Credentials are keyed by the hex digest of their full compact form."""

    def __init__(self, key: Jwk, window_s: int = DEFAULT_WINDOW_S, backend_id: str = "transcript") -> None:
        self.key = key
        self.holder_id = holder_did(key)
        self.window_s = window_s
        self.backend_id = backend_id
        self.imported: Dict[str, SdJwtVc] = {}
        self.attested: Dict[str, AttestedCredential] = {}
        self.event_refs: Dict[str, List[EventRef]] = {}
        self._lock = threading.RLock()

    def import_credential(self, cred: SdJwtVc) -> str:
        cid = credential_digest(cred.compact).hex()
        with self._lock:
            self.imported[cid] = cred
        return cid

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "key": self.key.to_dict(include_private=True),
                "window_s": self.window_s,
                "backend_id": self.backend_id,
                "imported": {k: v.compact for k, v in self.imported.items()},
                "attested": {k: v.jwt_vc for k, v in self.attested.items()},
                "event_refs": {k: [r.to_dict() for r in v] for k, v in self.event_refs.items()},
            }

    @classmethod
    def from_dict(cls, d: dict) -> "SsiWallet":
        w = cls(Jwk.from_dict(d["key"]), int(d["window_s"]), d.get("backend_id", "transcript"))
        w.imported = {k: SdJwtVc.parse(v) for k, v in d.get("imported", {}).items()}
        w.attested = {k: AttestedCredential(v) for k, v in d.get("attested", {}).items()}
        w.event_refs = {k: [EventRef.from_dict(r) for r in v] for k, v in d.get("event_refs", {}).items()}
        return w

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SsiWallet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def preflight_verify(cred: SdJwtVc, fed: FederationContext, clock: Clock) -> ChainVerdict:
    """Out-of-enclave check of the issuer's trust chain and of the credential itself.

    Raises PreflightFailed on any failure; returns the Valid verdict otherwise.
    """
    anchor_fp = fed.anchor_key.fingerprint()
    try:
        chain = resolve_trust_chain(cred.issuer, fed.transport, timeout=fed.timeout)
    except FetchFailed as exc:
        raise PreflightFailed(ChainVerdict.failed(Reason.FETCH_FAILED, anchor_fp, exc.entity_id)) from exc
    except DepthExceeded as exc:
        raise PreflightFailed(ChainVerdict.failed(Reason.DEPTH_EXCEEDED, anchor_fp)) from exc
    except CycleDetected as exc:
        raise PreflightFailed(ChainVerdict.failed(Reason.CYCLE_DETECTED, anchor_fp)) from exc
    verdict = verify_trust_chain(chain, fed.anchor_key, fed.transport, clock, fed.pinned_certs, fed.timeout)
    if not verdict.valid:
        raise PreflightFailed(verdict)
    try:
        sdjwt.verify_sd_jwt_vc(cred, chain.leaf_keys(), clock)
    except SsiBridgeError as exc:
        err = PreflightFailed(verdict, f"credential rejected: {exc.code}")
        err.details["credential_error"] = exc.code
        raise err from exc
    return verdict


def create_attested_credential(
    wallet: SsiWallet,
    cred: SdJwtVc,
    fed: FederationContext,
    enclave: EnclaveContext,
    clock: Clock,
    window_s: Optional[int] = None,
) -> AttestedCredential:
    """Preflight outside the enclave, attested run, then re-issuance.

    The preflight aborts early so a failing credential never costs an
    enclave run. If the federation changes between the two phases, the
    enclave result is the one recorded.
    """
    verdict = preflight_verify(cred, fed, clock)
    try:
        transcript, quote = enclave.run(cred, fed, clock)
    except TransportCompromised as exc:
        raise EnclaveTransportCompromised(str(exc), **exc.details) from exc
    attested = issue_attested_jwt_vc(
        wallet.key, cred, quote, verdict, window_s or wallet.window_s, clock, transcript=transcript
    )
    cid = credential_digest(cred.compact).hex()
    with wallet._lock:
        wallet.imported.setdefault(cid, cred)
        wallet.attested[cid] = attested
    return attested


def publish_proof(wallet: SsiWallet, attested: AttestedCredential, chain: Chain,
                  contract: VerifierContract) -> EventRef:
    try:
        attested.verify_signature()
        statement = ProofStatement.from_attested(attested)
        proof = prove(wallet.backend_id, statement, ProofWitness.from_attested(attested))
    except (SignatureInvalid, MalformedToken, WitnessStatementMismatch, KeyError, ValueError) as exc:
        raise ProofRejected(f"attested credential cannot be proven: {exc}") from exc
    receipt = submit_proof_tx(chain, contract, statement, proof)
    if not receipt.success:
        raise ProofRejected("verifier contract rejected the proof", receipt=receipt)
    ref = EventRef.of(receipt.events[0])
    with wallet._lock:
        wallet.event_refs.setdefault(statement.credential_digest.hex(), []).append(ref)
    return ref


# ---------------------------------------------------------------------------
# presentation and relying party
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PresentationPackage:
    """What the holder hands a relying party.

    ``original_compact`` carries the full issuer JWT with only the selected
    disclosures. ``full_form_commitment`` is the SHA-256 of the complete
    compact form that was attested; the link between the two is the
    ``original_issuer_jwt_digest`` claim of the attested credential.
    """

    attested_jwt_vc: str
    original_compact: str
    event_ref: Optional[EventRef]
    full_form_commitment: bytes

    def to_dict(self) -> dict:
        return {
            "attested_jwt_vc": self.attested_jwt_vc,
            "original_compact": self.original_compact,
            "event_ref": self.event_ref.to_dict() if self.event_ref else None,
            "full_form_commitment": self.full_form_commitment.hex(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PresentationPackage":
        ref = d.get("event_ref")
        return cls(d["attested_jwt_vc"], d["original_compact"], EventRef.from_dict(ref) if ref else None,
                   digest_from_hex(d["full_form_commitment"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PresentationPackage":
        return cls.from_dict(json.loads(text))


def present(wallet: SsiWallet, cred_id: str, selected_claims: Sequence[str]) -> PresentationPackage:
    with wallet._lock:
        attested = wallet.attested.get(cred_id)
        refs = wallet.event_refs.get(cred_id)
        cred = wallet.imported.get(cred_id)
    if attested is None or not refs or cred is None:
        raise NotPublished(f"credential {cred_id} has no published attestation")
    partial = sdjwt.present(cred, selected_claims)
    return PresentationPackage(attested.jwt_vc, partial.compact, refs[-1], credential_digest(cred.compact))


class RpReason(str, enum.Enum):
    MALFORMED = "Malformed"
    BAD_SIGNATURE = "BadSignature"
    ROOT_MISMATCH = "RootMismatch"
    MEASUREMENT_MISMATCH = "MeasurementMismatch"
    QUOTE_INVALID = "QuoteInvalid"
    NEGATIVE_OUTCOME = "NegativeOutcome"
    DISCLOSURE_MISMATCH = "DisclosureMismatch"
    NOT_YET_VALID = "NotYetValid"
    STALE = "Stale"
    EVENT_MISSING = "EventMissing"
    EVENT_MISMATCH = "EventMismatch"


@dataclass(frozen=True)
class RpVerdict:
    accepted: bool
    reason: Optional[RpReason] = None
    claims: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": "Accept" if self.accepted else "Reject",
            "reason": self.reason.value if self.reason else None,
            "claims": dict(self.claims),
        }


def _reject(reason: RpReason) -> RpVerdict:
    return RpVerdict(False, reason)


def relying_party_verify(
    pkg: PresentationPackage,
    ledger: Union[Chain, Index],
    trusted_roots: Sequence[bytes],
    expected_measurement: bytes,
    clock: Clock,
    allow_offchain_only: bool = False,
    contract_address: Optional[str] = None,
) -> RpVerdict:
    """Decide on a presentation from the package and ledger alone, against pinned values.

    There is deliberately no transport parameter: no federation endpoint is
    contacted. Freshness is the half-open window ``[t1, t1 + window_s)``.
    """
    att = AttestedCredential(pkg.attested_jwt_vc)
    try:
        att.verify_signature()
    except SignatureInvalid:
        return _reject(RpReason.BAD_SIGNATURE)
    except (MalformedToken, KeyError, TypeError, ValueError):
        return _reject(RpReason.MALFORMED)
    try:
        quote = att.quote
        inputs = att.public_inputs()
        attested_digest = att.original_credential_digest
        window = att.validity_window_s
        issuer_jwt_digest = digest_from_hex(att.claims["original_issuer_jwt_digest"])
        original = SdJwtVc.parse(pkg.original_compact)
    except (MalformedToken, KeyError, TypeError, ValueError):
        return _reject(RpReason.MALFORMED)

    root = quote.root_fingerprint
    if root not in trusted_roots:
        return _reject(RpReason.ROOT_MISMATCH)
    qv = verify_quote(quote, root, expected_measurement, inputs)
    if qv is QuoteVerdict.ROOT_MISMATCH:
        return _reject(RpReason.ROOT_MISMATCH)
    if qv is QuoteVerdict.MEASUREMENT_MISMATCH:
        return _reject(RpReason.MEASUREMENT_MISMATCH)
    if qv is not QuoteVerdict.VALID:
        return _reject(RpReason.QUOTE_INVALID)
    if inputs.outcome != 1:
        return _reject(RpReason.NEGATIVE_OUTCOME)

    if pkg.full_form_commitment != attested_digest or sha256(original.issuer_jwt) != issuer_jwt_digest:
        return _reject(RpReason.DISCLOSURE_MISMATCH)
    try:
        disclosed = sdjwt.check_disclosures(original.payload, original.disclosures)
    except SsiBridgeError:
        return _reject(RpReason.DISCLOSURE_MISMATCH)

    now = clock.now()
    if now < inputs.verified_at:
        return _reject(RpReason.NOT_YET_VALID)
    if now >= inputs.verified_at + window:
        return _reject(RpReason.STALE)

    ref = pkg.event_ref
    if ref is None:
        if not allow_offchain_only:
            return _reject(RpReason.EVENT_MISSING)
    else:
        if ref.credential_digest != attested_digest:
            return _reject(RpReason.EVENT_MISMATCH)
        event = ledger.resolve(ref)
        if event is None:
            return _reject(RpReason.EVENT_MISSING)
        statement = ProofStatement.from_attested(att)
        if (
            event.name != EVENT_NAME
            or event.credential_digest != attested_digest
            or event.statement_digest != statement_digest(statement)
            or event.outcome != 1
            or (contract_address is not None and event.contract != contract_address)
        ):
            return _reject(RpReason.EVENT_MISMATCH)

    claims = {k: v for k, v in original.payload.items() if k not in ("_sd", "_sd_alg")}
    claims.update(disclosed)
    return RpVerdict(True, None, claims)
