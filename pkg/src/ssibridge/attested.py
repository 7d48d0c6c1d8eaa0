"""The re-issued, hardware-attested JWT-VC that vouches for an original credential."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

from .clock import Clock
from .crypto import DecodedToken, Jwk, decode_compact, digest_from_hex, sha256, sign_compact, verify_compact
from .enclave import PublicInputs, Quote, VerificationTranscript, verify_endorsement
from .errors import InvalidLifetime, MalformedToken, NonValidVerdict, QuoteMismatch, SignatureInvalid
from .federation import ChainVerdict
from .sdjwt import SdJwtVc, credential_digest

ATTESTED_TYP = "vc+jwt"
ATTESTED_VCT = "urn:ssibridge:attested-credential:1"


def holder_did(key: Jwk) -> str:
    """DID-shaped opaque identifier derived from the wallet key. Not resolvable."""
    return "did:ssib:" + key.fingerprint().hex()


@dataclass(frozen=True)
class AttestedCredential:
    jwt_vc: str

    @cached_property
    def decoded(self) -> DecodedToken:
        return decode_compact(self.jwt_vc)

    @property
    def claims(self) -> dict:
        return self.decoded.payload

    @property
    def holder_key(self) -> Jwk:
        return Jwk.from_dict(self.decoded.header["jwk"])

    @property
    def original_credential_digest(self) -> bytes:
        return digest_from_hex(self.claims["original_credential_digest"])

    @property
    def quote(self) -> Quote:
        return Quote.from_dict(self.claims["quote"])

    @property
    def outcome(self) -> int:
        return int(self.claims["verification_result"]["outcome"])

    @property
    def verified_at(self) -> int:
        return int(self.claims["verified_at"])

    @property
    def validity_window_s(self) -> int:
        return int(self.claims["validity_window_s"])

    def public_inputs(self) -> PublicInputs:
        """Reconstruct the public inputs the quote should bind, from the claims."""
        c = self.claims
        try:
            return PublicInputs(
                credential_digest=digest_from_hex(c["original_credential_digest"]),
                anchor_key_fingerprint=digest_from_hex(c["anchor_key_fingerprint"]),
                endpoint_cert_fingerprints=tuple(digest_from_hex(f) for f in c["endpoint_cert_fingerprints"]),
                measurement=self.quote.measurement,
                policy_digest=digest_from_hex(c["policy_digest"]),
                verified_at=int(c["verified_at"]),
                outcome=int(c["verification_result"]["outcome"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedToken(f"attested credential claims incomplete: {exc}") from exc

    def verify_signature(self) -> None:
        """Self-certified: the header key must match the ``iss`` DID and sign the token."""
        key = self.holder_key
        if self.claims.get("iss") != holder_did(key):
            raise SignatureInvalid("issuer DID does not match the embedded key")
        verify_compact(self.decoded, [key])


def issue_attested_jwt_vc(
    wallet_key: Jwk,
    source: SdJwtVc,
    quote: Quote,
    verdict: ChainVerdict,
    window_s: int,
    clock: Clock,
    *,
    transcript: VerificationTranscript,
) -> AttestedCredential:
    """Mint the attested credential.

    ``verdict`` is the gate (it must be Valid); the recorded outcome comes
    from the attested run in ``transcript`` and may still be 0.
    """
    if not verdict.valid:
        raise NonValidVerdict(f"verdict is {verdict.outcome}: {verdict.reason}")
    if window_s <= 0:
        raise InvalidLifetime("validity window must be positive")
    inputs = transcript.public_inputs
    if inputs.credential_digest != credential_digest(source.compact):
        raise QuoteMismatch("attested run covered a different credential")
    if quote.report_data != inputs.report_data() or quote.measurement != inputs.measurement:
        raise QuoteMismatch("quote does not bind the run's public inputs")
    if not verify_endorsement(quote) or not quote.platform_cert.public_key.verify(quote.signed_bytes(), quote.signature):
        raise QuoteMismatch("quote signature or endorsement chain does not verify")
    payload = {
        "iss": holder_did(wallet_key),
        "iat": clock.now(),
        "vct": ATTESTED_VCT,
        "original_credential_digest": inputs.credential_digest.hex(),
        "original_issuer_jwt_digest": sha256(source.issuer_jwt).hex(),
        "verification_result": transcript.summary(),
        "verified_at": inputs.verified_at,
        "validity_window_s": int(window_s),
        "quote": quote.to_dict(),
        "endpoint_cert_fingerprints": [f.hex() for f in inputs.endpoint_cert_fingerprints],
        "anchor_key_fingerprint": inputs.anchor_key_fingerprint.hex(),
        "policy_digest": inputs.policy_digest.hex(),
    }
    token = sign_compact(wallet_key, payload, ATTESTED_TYP, {"jwk": wallet_key.public_dict()})
    return AttestedCredential(token)
