"""Shared builders for tests that need proofs without running a federation."""

from __future__ import annotations

from hypothesis import strategies as st

from ssibridge.enclave import PublicInputs, new_platform
from ssibridge.proof import ProofStatement, ProofWitness

PLATFORM = new_platform(7)
OTHER_PLATFORM = new_platform(8)
ROOTS = (PLATFORM.root_fingerprint,)

digests = st.binary(min_size=32, max_size=32)


@st.composite
def public_inputs(draw, measurement=None):
    return PublicInputs(
        credential_digest=draw(digests),
        anchor_key_fingerprint=draw(digests),
        endpoint_cert_fingerprints=tuple(draw(st.lists(digests, max_size=4))),
        measurement=measurement if measurement is not None else draw(digests),
        policy_digest=draw(digests),
        verified_at=draw(st.integers(0, 2**40)),
        outcome=draw(st.integers(0, 1)),
    )


def make(inputs: PublicInputs, platform=PLATFORM):
    quote = platform.quote(inputs.measurement, inputs.report_data(), inputs.verified_at)
    statement = ProofStatement(platform.root_fingerprint, inputs.credential_digest, inputs.measurement,
                               inputs.policy_digest, inputs.verified_at, inputs.outcome)
    witness = ProofWitness(quote, inputs.anchor_key_fingerprint, inputs.endpoint_cert_fingerprints)
    return statement, witness


def simple_inputs(credential_digest: bytes = b"\x01" * 32, measurement: bytes = b"\x04" * 32,
                  outcome: int = 1) -> PublicInputs:
    return PublicInputs(credential_digest, b"\x02" * 32, (b"\x03" * 32,), measurement, b"\x05" * 32,
                        1_750_000_000, outcome)


# Acceptance results, printed in the terminal summary by conftest.
ACCEPTANCE: dict = {}
