"""Exception hierarchy.

Every error carries a stable ``code`` string; the CLI and the verifier
service put it on the wire unchanged.
"""

from __future__ import annotations

from typing import Any, Optional


class SsiBridgeError(Exception):
    code = "Error"

    def __init__(self, message: str = "", **details: Any) -> None:
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self) -> dict:
        out = {"code": self.code, "message": str(self)}
        if self.details:
            out["details"] = {k: _jsonable(v) for k, v in self.details.items()}
        return out


def _jsonable(value: Any) -> Any:
    if hasattr(value, "to_dict"):
        return value.to_dict()
    if isinstance(value, bytes):
        return value.hex()
    return value


# credential-core

class InvalidClaimName(SsiBridgeError):
    code = "InvalidClaimName"


class InvalidLifetime(SsiBridgeError):
    code = "InvalidLifetime"


class SigningKeyUnavailable(SsiBridgeError):
    code = "SigningKeyUnavailable"


class UnknownDisclosure(SsiBridgeError):
    code = "UnknownDisclosure"


class MalformedToken(SsiBridgeError):
    code = "MalformedToken"


class SignatureInvalid(SsiBridgeError):
    code = "SignatureInvalid"


class Expired(SsiBridgeError):
    code = "Expired"


class NotYetValid(SsiBridgeError):
    code = "NotYetValid"


class UnknownDisclosureDigest(SsiBridgeError):
    code = "UnknownDisclosureDigest"


class NonValidVerdict(SsiBridgeError):
    code = "NonValidVerdict"


class QuoteMismatch(SsiBridgeError):
    code = "QuoteMismatch"


# federation

class FetchFailed(SsiBridgeError):
    code = "FetchFailed"

    def __init__(self, entity_id: str, message: str = "") -> None:
        super().__init__(message or f"could not fetch {entity_id}", entity_id=entity_id)
        self.entity_id = entity_id


class DepthExceeded(SsiBridgeError):
    code = "DepthExceeded"


class CycleDetected(SsiBridgeError):
    code = "CycleDetected"


class InvalidTopology(SsiBridgeError):
    code = "InvalidTopology"


class TransportError(SsiBridgeError):
    """Raised by transports when an endpoint cannot be reached."""

    code = "Unreachable"


class TransportTimeout(TransportError):
    code = "Timeout"


# enclave-sim / proof / ledger

class TransportCompromised(SsiBridgeError):
    code = "TransportCompromised"


class WitnessStatementMismatch(SsiBridgeError):
    code = "WitnessStatementMismatch"


class UnknownBackend(SsiBridgeError):
    code = "UnknownBackend"


class BackendRegistrationError(SsiBridgeError):
    code = "BackendRegistrationError"


class UnknownContract(SsiBridgeError):
    code = "UnknownContract"


class ChainIntegrityError(SsiBridgeError):
    code = "ChainIntegrityError"


# wallet-flows

class NotAuthenticated(SsiBridgeError):
    code = "NotAuthenticated"


class UnknownCredential(SsiBridgeError):
    code = "UnknownCredential"


class PreflightFailed(SsiBridgeError):
    code = "PreflightFailed"

    def __init__(self, verdict: Any, message: str = "") -> None:
        reason = getattr(verdict, "reason", None)
        super().__init__(message or f"preflight verification failed: {reason}", verdict=verdict)
        self.verdict = verdict


class EnclaveTransportCompromised(SsiBridgeError):
    code = "EnclaveTransportCompromised"


class ProofRejected(SsiBridgeError):
    code = "ProofRejected"

    def __init__(self, message: str = "", receipt: Optional[Any] = None) -> None:
        super().__init__(message or "proof rejected")
        self.receipt = receipt


class NotPublished(SsiBridgeError):
    code = "NotPublished"


# verifier-service

class AttestationFailed(SsiBridgeError):
    code = "AttestationFailed"

    def __init__(self, reason: str, message: str = "") -> None:
        super().__init__(message or f"service attestation failed: {reason}", reason=reason)
        self.reason = reason


class Unreachable(SsiBridgeError):
    code = "Unreachable"


class ServiceError(SsiBridgeError):
    """Structured error body returned by the verifier service."""

    def __init__(self, code: str, message: str = "", details: Optional[dict] = None) -> None:
        super().__init__(message or code)
        self.code = code
        self.details = details or {}
