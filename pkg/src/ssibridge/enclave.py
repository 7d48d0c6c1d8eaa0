"""Simulated attestation-capable execution environment.

A :class:`Platform` holds an attestation key endorsed by a platform
certificate, which is in turn signed by a simulated vendor root. Running a
workload produces a transcript and a quote whose ``report_data`` commits to
the run's public inputs:

    report_data = SHA-256(PublicInputs.encode()) || 32 zero bytes

PublicInputs encoding: each field in order is emitted as a 4-byte
big-endian length followed by its bytes:

    credential_digest        32 bytes
    anchor_key_fingerprint   32 bytes
    endpoint fingerprints    4-byte big-endian count, then each 32-byte
                             fingerprint, sorted ascending, deduplicated
    measurement              32 bytes
    policy_digest            32 bytes
    verified_at              8-byte big-endian unsigned seconds
    outcome                  1 byte, 0x00 or 0x01

Nothing here reads the wall clock, the environment or the filesystem;
time and network arrive through the ``clock`` and ``transport`` arguments.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .clock import Clock
from .crypto import (
    ZERO_DIGEST,
    Jwk,
    b64url_decode,
    b64url_encode,
    canonical_json,
    seeded_rng,
    sha256,
)
from .errors import (
    CycleDetected,
    DepthExceeded,
    FetchFailed,
    MalformedToken,
    SsiBridgeError,
    TransportCompromised,
)
from .federation import (
    ChainVerdict,
    Observation,
    Reason,
    RecordingTransport,
    Status,
    Transport,
    TrustChain,
    origin_of,
    resolve_trust_chain,
    verify_trust_chain,
)
from .sdjwt import SdJwtVc, credential_digest, verify_sd_jwt_vc

REPORT_DATA_SIZE = 64

WORKLOAD_LOGIC = (
    "ssibridge credential verification workload\n"
    "1 resolve trust chain of credential issuer following authority hints\n"
    "2 verify every statement signature down from the pinned anchor key\n"
    "3 query every trust mark status endpoint once, pinning endpoint certificates\n"
    "4 verify SD-JWT-VC signature, validity interval and disclosures\n"
    "5 apply verification policy and commit public inputs to report data\n"
)


# ---------------------------------------------------------------------------
# workload and policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerificationPolicy:
    required_mark_types: Tuple[str, ...] = ()
    max_chain_depth: int = 8
    max_clock_skew_s: int = 60
    require_all_marks_active: bool = True

    def __post_init__(self) -> None:
        if not self.require_all_marks_active:
            raise ValueError("require_all_marks_active cannot be disabled")
        if self.max_chain_depth < 1 or self.max_clock_skew_s < 0:
            raise ValueError("policy bounds must be non-negative and depth at least 1")

    def to_dict(self) -> dict:
        return {
            "required_mark_types": sorted(self.required_mark_types),
            "max_chain_depth": self.max_chain_depth,
            "max_clock_skew_s": self.max_clock_skew_s,
            "require_all_marks_active": self.require_all_marks_active,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "VerificationPolicy":
        return cls(
            tuple(d.get("required_mark_types", ())),
            int(d.get("max_chain_depth", 8)),
            int(d.get("max_clock_skew_s", 60)),
            bool(d.get("require_all_marks_active", True)),
        )

    def digest(self) -> bytes:
        return sha256(canonical_json(self.to_dict()))


@dataclass(frozen=True)
class WorkloadDescriptor:
    name: str
    version: str
    policy: VerificationPolicy = VerificationPolicy()
    logic: str = WORKLOAD_LOGIC

    @property
    def logic_digest(self) -> bytes:
        return sha256(self.logic)

    def canonical_bytes(self) -> bytes:
        return canonical_json({
            "name": self.name,
            "version": self.version,
            "logic_digest": self.logic_digest.hex(),
            "policy": self.policy.to_dict(),
        })

    def to_dict(self) -> dict:
        return {"name": self.name, "version": self.version, "policy": self.policy.to_dict(), "logic": self.logic}

    @classmethod
    def from_dict(cls, d: Mapping) -> "WorkloadDescriptor":
        return cls(d["name"], d["version"], VerificationPolicy.from_dict(d.get("policy", {})), d.get("logic", WORKLOAD_LOGIC))


def measure_workload(w: WorkloadDescriptor) -> bytes:
    return sha256(w.canonical_bytes())


# ---------------------------------------------------------------------------
# platform and certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlatformCert:
    subject: str
    issuer: str
    public_key: Jwk
    signature: bytes = b""

    def tbs(self) -> bytes:
        return canonical_json({"subject": self.subject, "issuer": self.issuer, "public_key": self.public_key.public_dict()})

    def to_dict(self) -> dict:
        return {
            "subject": self.subject,
            "issuer": self.issuer,
            "public_key": self.public_key.public_dict(),
            "signature": b64url_encode(self.signature),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlatformCert":
        return cls(d["subject"], d["issuer"], Jwk.from_dict(d["public_key"]), b64url_decode(d["signature"]))

    @property
    def fingerprint(self) -> bytes:
        return sha256(canonical_json(self.to_dict()))

    def signed_by(self, key: Jwk) -> bool:
        return key.verify(self.tbs(), self.signature)


def _issue_cert(subject: str, issuer: str, subject_key: Jwk, signer: Jwk) -> PlatformCert:
    unsigned = PlatformCert(subject, issuer, subject_key.public())
    return replace(unsigned, signature=signer.sign(unsigned.tbs()))


@dataclass(frozen=True)
class Quote:
    measurement: bytes
    report_data: bytes
    timestamp: int
    signature: bytes
    platform_cert: PlatformCert
    root_cert: PlatformCert
    simulated: bool = True

    def __post_init__(self) -> None:
        if self.simulated is not True:
            raise ValueError("simulated quotes must carry simulated=True")
        if len(self.report_data) != REPORT_DATA_SIZE or len(self.measurement) != 32:
            raise ValueError("quote field widths are fixed")

    @property
    def root_fingerprint(self) -> bytes:
        return self.root_cert.fingerprint

    def signed_bytes(self) -> bytes:
        return quote_body(self.measurement, self.report_data, self.timestamp)

    def to_dict(self) -> dict:
        return {
            "simulated": True,
            "measurement": b64url_encode(self.measurement),
            "report_data": b64url_encode(self.report_data),
            "timestamp": self.timestamp,
            "signature": b64url_encode(self.signature),
            "endorsement_chain": [self.platform_cert.to_dict(), self.root_cert.to_dict()],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Quote":
        if d.get("simulated") is not True:
            raise MalformedToken("quote lacks the simulated marker")
        try:
            chain = d["endorsement_chain"]
            return cls(
                b64url_decode(d["measurement"]),
                b64url_decode(d["report_data"]),
                int(d["timestamp"]),
                b64url_decode(d["signature"]),
                PlatformCert.from_dict(chain[0]),
                PlatformCert.from_dict(chain[1]),
            )
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise MalformedToken(f"invalid quote: {exc}") from exc


def quote_body(measurement: bytes, report_data: bytes, timestamp: int) -> bytes:
    return measurement + report_data + struct.pack(">Q", timestamp)


class Platform:
    """Simulated attestation platform. The attestation private key stays inside."""

    def __init__(self, root_cert: PlatformCert, platform_cert: PlatformCert, attestation_key: Jwk) -> None:
        self.root_cert = root_cert
        self.platform_cert = platform_cert
        self.__attestation_key = attestation_key

    def __repr__(self) -> str:
        return f"Platform(root={self.root_fingerprint.hex()[:16]})"

    def __getstate__(self):
        raise TypeError("Platform holds an attestation key and cannot be pickled")

    @property
    def root_fingerprint(self) -> bytes:
        return self.root_cert.fingerprint

    def quote(self, measurement: bytes, report_data: bytes, timestamp: int) -> Quote:
        sig = self.__attestation_key.sign(quote_body(measurement, report_data, timestamp))
        return Quote(measurement, report_data, timestamp, sig, self.platform_cert, self.root_cert)

    def to_dict(self) -> dict:
        """Public view: the endorsement chain only."""
        return {"root_cert": self.root_cert.to_dict(), "platform_cert": self.platform_cert.to_dict()}


def new_platform(seed) -> Platform:
    rng = seeded_rng(seed, "platform")
    root_key = Jwk.generate("sim-vendor-root", rng)
    att_key = Jwk.generate("sim-attestation-key", rng)
    root_name = f"sim-vendor-root-{root_key.fingerprint().hex()[:16]}"
    root = _issue_cert(root_name, root_name, root_key, root_key)
    plat = _issue_cert(f"sim-platform-{att_key.fingerprint().hex()[:16]}", root_name, att_key, root_key)
    return Platform(root, plat, att_key)


def verify_endorsement(q: Quote) -> bool:
    """root self-signed, root signs platform cert, platform key signs the quote body."""
    root, plat = q.root_cert, q.platform_cert
    return (
        root.subject == root.issuer
        and root.signed_by(root.public_key)
        and plat.issuer == root.subject
        and plat.signed_by(root.public_key)
    )


# ---------------------------------------------------------------------------
# public inputs, transcript, quote verification
# ---------------------------------------------------------------------------

def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def encode_fields(parts: Sequence[bytes]) -> bytes:
    return b"".join(_lp(p) for p in parts)


@dataclass(frozen=True)
class PublicInputs:
    credential_digest: bytes
    anchor_key_fingerprint: bytes
    endpoint_cert_fingerprints: Tuple[bytes, ...]
    measurement: bytes
    policy_digest: bytes
    verified_at: int
    outcome: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "endpoint_cert_fingerprints", tuple(sorted(set(self.endpoint_cert_fingerprints))))
        if self.outcome not in (0, 1):
            raise ValueError("outcome is a single bit")

    def encode(self) -> bytes:
        certs = struct.pack(">I", len(self.endpoint_cert_fingerprints)) + b"".join(self.endpoint_cert_fingerprints)
        return encode_fields([
            self.credential_digest,
            self.anchor_key_fingerprint,
            certs,
            self.measurement,
            self.policy_digest,
            struct.pack(">Q", self.verified_at),
            bytes([self.outcome]),
        ])

    def digest(self) -> bytes:
        return sha256(self.encode())

    def report_data(self) -> bytes:
        return report_data_for(self.digest())

    def to_dict(self) -> dict:
        return {
            "credential_digest": self.credential_digest.hex(),
            "anchor_key_fingerprint": self.anchor_key_fingerprint.hex(),
            "endpoint_cert_fingerprints": [f.hex() for f in self.endpoint_cert_fingerprints],
            "measurement": self.measurement.hex(),
            "policy_digest": self.policy_digest.hex(),
            "verified_at": self.verified_at,
            "outcome": self.outcome,
        }

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]


def report_data_for(digest: bytes) -> bytes:
    return digest + ZERO_DIGEST


class QuoteVerdict(str, enum.Enum):
    VALID = "Valid"
    ROOT_MISMATCH = "RootMismatch"
    BAD_SIGNATURE = "BadSignature"
    MEASUREMENT_MISMATCH = "MeasurementMismatch"
    INPUTS_MISMATCH = "InputsMismatch"


def verify_quote_report(q: Quote, trusted_root: bytes, expected_measurement: bytes,
                        expected_report_data: bytes) -> QuoteVerdict:
    if q.root_fingerprint != trusted_root or not verify_endorsement(q):
        return QuoteVerdict.ROOT_MISMATCH
    if not q.platform_cert.public_key.verify(q.signed_bytes(), q.signature):
        return QuoteVerdict.BAD_SIGNATURE
    if q.measurement != expected_measurement:
        return QuoteVerdict.MEASUREMENT_MISMATCH
    if q.report_data != expected_report_data:
        return QuoteVerdict.INPUTS_MISMATCH
    return QuoteVerdict.VALID


def verify_quote(q: Quote, trusted_root: bytes, expected_measurement: bytes,
                 expected_public_inputs: PublicInputs) -> QuoteVerdict:
    """``trusted_root`` is the fingerprint of the vendor root certificate."""
    return verify_quote_report(q, trusted_root, expected_measurement, expected_public_inputs.report_data())


@dataclass(frozen=True)
class VerificationTranscript:
    credential_digest: bytes
    anchor_key_fingerprint: bytes
    observations: Tuple[Observation, ...]
    verdict: ChainVerdict
    credential_error: Optional[str]
    policy_error: Optional[str]
    policy: VerificationPolicy
    started_at: int
    finished_at: int
    public_inputs: PublicInputs

    @property
    def outcome(self) -> int:
        return self.public_inputs.outcome

    def to_dict(self) -> dict:
        return {
            "credential_digest": self.credential_digest.hex(),
            "anchor_key_fingerprint": self.anchor_key_fingerprint.hex(),
            "observations": [o.to_dict() for o in self.observations],
            "verdict": self.verdict.to_dict(),
            "credential_error": self.credential_error,
            "policy_error": self.policy_error,
            "policy": self.policy.to_dict(),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "public_inputs": self.public_inputs.to_dict(),
        }

    def digest(self) -> bytes:
        return sha256(canonical_json(self.to_dict()))

    def summary(self) -> dict:
        return {
            "outcome": self.outcome,
            "chain": self.verdict.summary(),
            "credential_error": self.credential_error,
            "policy_error": self.policy_error,
        }


def _missing_marks(chain: TrustChain, verdict: ChainVerdict, required: Sequence[str]) -> List[str]:
    if not required:
        return []
    leaf = chain.leaf_id
    active = {r.mark_id for e in verdict.entities if e.entity_id == leaf for r in e.marks if r.status is Status.ACTIVE}
    have = {m.mark_type for s in chain.statements if s.subject_id == leaf for m in s.trust_marks if m.mark_id in active}
    return sorted(set(required) - have)


def run_attested_verification(
    platform: Platform,
    workload: WorkloadDescriptor,
    cred: SdJwtVc,
    anchor_key: Jwk,
    transport: Transport,
    clock: Clock,
    pinned_certs: Mapping[str, bytes],
    timeout: float = 2.0,
) -> Tuple[VerificationTranscript, Quote]:
    """Verify ``cred`` and its issuer's trust chain, then quote the result.

    Negative outcomes are quoted as well; the quote vouches for the
    computation, not for a positive answer. Raises TransportCompromised if
    any endpoint presented a certificate other than the pinned one.
    """
    policy = workload.policy
    started_at = clock.now()
    recorder = RecordingTransport(transport, clock)
    cdigest = credential_digest(cred.compact)
    anchor_fp = anchor_key.fingerprint()

    chain: Optional[TrustChain] = None
    try:
        chain = resolve_trust_chain(cred.issuer, recorder, policy.max_chain_depth, timeout)
    except FetchFailed as exc:
        verdict = ChainVerdict.failed(Reason.FETCH_FAILED, anchor_fp, exc.entity_id)
    except DepthExceeded:
        verdict = ChainVerdict.failed(Reason.DEPTH_EXCEEDED, anchor_fp)
    except CycleDetected:
        verdict = ChainVerdict.failed(Reason.CYCLE_DETECTED, anchor_fp)
    if chain is not None:
        verdict = verify_trust_chain(chain, anchor_key, recorder, clock, pinned_certs, timeout)

    for obs in recorder.observations:
        if obs.cert_fingerprint is not None and pinned_certs.get(origin_of(obs.url)) != obs.cert_fingerprint:
            raise TransportCompromised(f"{obs.url} presented an unpinned certificate", url=obs.url)

    credential_error: Optional[str] = None
    policy_error: Optional[str] = None
    if chain is None:
        credential_error = "IssuerUnresolved"
    else:
        try:
            verify_sd_jwt_vc(cred, chain.leaf_keys(), clock, leeway_s=policy.max_clock_skew_s)
        except SsiBridgeError as exc:
            credential_error = exc.code
        missing = _missing_marks(chain, verdict, policy.required_mark_types)
        if missing:
            policy_error = "MissingRequiredMark:" + ",".join(missing)

    outcome = int(verdict.valid and credential_error is None and policy_error is None)
    finished_at = clock.now()
    inputs = PublicInputs(
        credential_digest=cdigest,
        anchor_key_fingerprint=anchor_fp,
        endpoint_cert_fingerprints=tuple(o.cert_fingerprint for o in recorder.observations if o.cert_fingerprint),
        measurement=measure_workload(workload),
        policy_digest=policy.digest(),
        verified_at=finished_at,
        outcome=outcome,
    )
    transcript = VerificationTranscript(
        cdigest, anchor_fp, tuple(recorder.observations), verdict, credential_error, policy_error,
        policy, started_at, finished_at, inputs,
    )
    quote = platform.quote(inputs.measurement, inputs.report_data(), finished_at)
    return transcript, quote
