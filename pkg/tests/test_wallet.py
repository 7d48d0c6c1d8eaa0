from __future__ import annotations

import dataclasses
import json

import pytest

from ssibridge.attested import AttestedCredential
from ssibridge.clock import FixedClock
from ssibridge.crypto import Jwk, seeded_rng
from ssibridge.errors import (
    EnclaveTransportCompromised,
    NotAuthenticated,
    NotPublished,
    PreflightFailed,
    ProofRejected,
    UnknownCredential,
)
from ssibridge.federation import CountingTransport, Reason
from ssibridge.ledger import Index, deploy_verifier, new_chain
from ssibridge.sdjwt import credential_digest, issue_sd_jwt_vc
from ssibridge.wallet import (
    DEFAULT_WINDOW_S,
    EnclaveContext,
    FederationContext,
    PresentationPackage,
    RpReason,
    SimItWallet,
    SsiWallet,
    create_attested_credential,
    export_credential,
    preflight_verify,
    present,
    publish_proof,
    relying_party_verify,
)

QEAA = "https://qeaa-provider.example"
WALLETP = "https://wallet-provider.example"


def published(world, claims=None, subject="holder-1", wallet=None):
    wallet = wallet or world.wallet
    contract = getattr(world, "_contract", None) or world.deploy()
    world._contract = contract
    cred = world.issue(claims, subject)
    cid = wallet.import_credential(cred)
    att = create_attested_credential(wallet, cred, world.fed_ctx, world.enclave(), world.clock)
    ref = publish_proof(wallet, att, world.chain, contract)
    return cid, cred, att, ref


def rp(world, pkg, ledger=None, **kw):
    return relying_party_verify(pkg, ledger or world.chain, [world.platform.root_fingerprint],
                                world.measurement, world.clock, **kw)


# -- IT-wallet export ----------------------------------------------------------

def test_export_requires_login(world):
    it = SimItWallet("holder-1")
    cred = world.issue()
    it.store("health", cred)
    with pytest.raises(NotAuthenticated):
        export_credential(it, "health")
    with pytest.raises(NotAuthenticated):
        it.login("")
    it.login("eid-token")
    assert export_credential(it, "health").compact == cred.compact
    with pytest.raises(UnknownCredential):
        export_credential(it, "missing")
    it.logout()
    with pytest.raises(NotAuthenticated):
        export_credential(it, "health")


def test_it_wallet_round_trip(world):
    it = SimItWallet("holder-1")
    it.store("health", world.issue())
    it.login("eid")
    again = SimItWallet.from_dict(json.loads(json.dumps(it.to_dict())))
    assert again.authenticated and again.credentials["health"].compact == it.credentials["health"].compact


def test_ssi_wallet_round_trip(world, tmp_path):
    cid, _, att, ref = published(world)
    path = tmp_path / "wallet.json"
    world.wallet.save(path)
    loaded = SsiWallet.load(path)
    assert loaded.key.fingerprint() == world.wallet.key.fingerprint()
    assert loaded.attested[cid].jwt_vc == att.jwt_vc
    assert loaded.event_refs[cid] == [ref]
    assert world.wallet.window_s == DEFAULT_WINDOW_S == 604800


# -- preflight and attestation ------------------------------------------------

def test_preflight_valid(world):
    verdict = preflight_verify(world.issue(), world.fed_ctx, world.clock)
    assert verdict.valid


def test_revoked_mark_stops_before_enclave(world):
    world.fed.revoke_mark(world.fed.mark_id(QEAA, "qeaa-provider"))
    enclave = world.enclave()
    with pytest.raises(PreflightFailed) as exc:
        create_attested_credential(world.wallet, world.issue(), world.fed_ctx, enclave, world.clock)
    assert exc.value.verdict.reason is Reason.MARK_REVOKED
    assert exc.value.verdict.offending_entity == QEAA
    assert enclave.calls == 0
    assert world.wallet.attested == {}


def test_expired_credential_stops_before_enclave(world):
    cred = issue_sd_jwt_vc(world.fed.entity_key(QEAA), {"iss": QEAA, "sub": "holder-1"}, {"given_name": "Ada"},
                           "urn:test", 3600, world.clock, seeded_rng(7, "short"))
    enclave = world.enclave()
    late = FixedClock(world.clock.now() + 3600)
    with pytest.raises(PreflightFailed) as exc:
        create_attested_credential(world.wallet, cred, world.fed_ctx, enclave, late)
    assert exc.value.verdict.valid
    assert exc.value.details["credential_error"] == "Expired"
    assert enclave.calls == 0


class _RevokeBetweenPhases(EnclaveContext):
    def __init__(self, world):
        super().__init__(world.platform, world.workload)
        self.world = world

    def run(self, cred, fed, clock):
        self.world.fed.revoke_mark(self.world.fed.mark_id(QEAA, "qeaa-provider"))
        return super().run(cred, fed, clock)


def test_revocation_between_phases_records_enclave_outcome(world):
    contract = world.deploy()
    cred = world.issue()
    att = create_attested_credential(world.wallet, cred, world.fed_ctx, _RevokeBetweenPhases(world), world.clock)
    assert att.outcome == 0
    assert att.claims["verification_result"]["chain"]["reason"] == Reason.MARK_REVOKED.value
    ref = publish_proof(world.wallet, att, world.chain, contract)
    assert world.chain.resolve(ref).outcome == 0
    pkg = present(world.wallet, credential_digest(cred.compact).hex(), ["given_name"])
    assert rp(world, pkg).reason is RpReason.NEGATIVE_OUTCOME


class _SwapBetweenPhases(EnclaveContext):
    def __init__(self, world):
        super().__init__(world.platform, world.workload)
        self.world = world

    def run(self, cred, fed, clock):
        self.world.fed.swap_certs(QEAA, WALLETP)
        return super().run(cred, fed, clock)


def test_transport_compromise_inside_enclave(world):
    with pytest.raises(EnclaveTransportCompromised):
        create_attested_credential(world.wallet, world.issue(), world.fed_ctx, _SwapBetweenPhases(world), world.clock)
    assert world.wallet.attested == {}


# -- publication ---------------------------------------------------------------

def test_publish_and_republish(world):
    cid, cred, att, ref = published(world)
    ref2 = publish_proof(world.wallet, att, world.chain, world._contract)
    assert world.wallet.event_refs[cid] == [ref, ref2] and ref != ref2
    assert Index.rebuild(world.chain).lookup(att.original_credential_digest) == [ref, ref2]


def test_publish_tampered_credential_rejected(world):
    _, _, att, _ = published(world)
    h, p, s = att.jwt_vc.split(".")
    flipped = s[:-2] + ("A" if s[-2] != "A" else "B") + s[-1]
    before = world.chain.height
    with pytest.raises(ProofRejected):
        publish_proof(world.wallet, AttestedCredential(f"{h}.{p}.{flipped}"), world.chain, world._contract)
    assert world.chain.height == before


def test_publish_to_wrong_measurement_contract_records_failure(world):
    _, _, att, _ = published(world)
    wrong = deploy_verifier(world.chain, "transcript", [world.platform.root_fingerprint], b"\x00" * 32)
    with pytest.raises(ProofRejected) as exc:
        publish_proof(world.wallet, att, world.chain, wrong)
    assert exc.value.receipt is not None and not exc.value.receipt.success


# -- presentation --------------------------------------------------------------

def test_present_requires_publication(world):
    cred = world.issue()
    cid = world.wallet.import_credential(cred)
    with pytest.raises(NotPublished):
        present(world.wallet, cid, ["given_name"])
    create_attested_credential(world.wallet, cred, world.fed_ctx, world.enclave(), world.clock)
    with pytest.raises(NotPublished):
        present(world.wallet, cid, ["given_name"])


def test_rp_accepts_selected_claims_only(world):
    cid, _, _, _ = published(world)
    pkg = PresentationPackage.loads(present(world.wallet, cid, ["given_name"]).dumps())
    verdict = rp(world, pkg)
    assert verdict.accepted, verdict
    assert verdict.claims["given_name"] == "Ada"
    assert "family_name" not in verdict.claims and "health_card_number" not in verdict.claims


def test_rp_accepts_with_index(world):
    cid, _, _, _ = published(world)
    pkg = present(world.wallet, cid, [])
    assert rp(world, pkg, Index.rebuild(world.chain)).accepted


def test_rp_freshness_boundary(world):
    cid, _, att, _ = published(world)
    pkg = present(world.wallet, cid, ["given_name"])
    t1, w = att.verified_at, att.validity_window_s
    for now, expected in ((t1, None), (t1 + w - 1, None), (t1 + w, RpReason.STALE), (t1 - 1, RpReason.NOT_YET_VALID)):
        verdict = relying_party_verify(pkg, world.chain, [world.platform.root_fingerprint],
                                       world.measurement, FixedClock(now))
        assert verdict.reason is expected, (now - t1, verdict)


def test_rp_event_cross_wiring(world):
    other = SsiWallet(Jwk.generate("other-holder", seeded_rng(7, "other-holder")))
    cid_a, _, _, _ = published(world)
    cid_b, _, _, ref_b = published(world, subject="holder-2", wallet=other)
    pkg = present(world.wallet, cid_a, ["given_name"])
    crossed = dataclasses.replace(pkg, event_ref=ref_b)
    assert rp(world, crossed).reason is RpReason.EVENT_MISMATCH
    # Even with the digest rewritten, the referenced block holds someone else's event.
    forged = dataclasses.replace(ref_b, credential_digest=pkg.event_ref.credential_digest)
    assert rp(world, dataclasses.replace(pkg, event_ref=forged)).reason is RpReason.EVENT_MISSING


def test_rp_missing_event(world):
    cid, _, _, _ = published(world)
    pkg = dataclasses.replace(present(world.wallet, cid, ["given_name"]), event_ref=None)
    assert rp(world, pkg).reason is RpReason.EVENT_MISSING
    assert rp(world, pkg, allow_offchain_only=True).accepted
    empty = new_chain(world.clock.now())
    assert rp(world, present(world.wallet, cid, []), empty).reason is RpReason.EVENT_MISSING


def test_rp_trust_parameters(world):
    cid, _, _, _ = published(world)
    pkg = present(world.wallet, cid, ["given_name"])
    assert relying_party_verify(pkg, world.chain, [b"\x00" * 32], world.measurement,
                                world.clock).reason is RpReason.ROOT_MISMATCH
    assert relying_party_verify(pkg, world.chain, [world.platform.root_fingerprint], b"\x00" * 32,
                                world.clock).reason is RpReason.MEASUREMENT_MISMATCH
    assert rp(world, pkg, contract_address="00" * 20).reason is RpReason.EVENT_MISMATCH


def test_rp_disclosure_mismatch(world):
    cid, _, _, _ = published(world)
    cid2, _, _, _ = published(world, subject="holder-2")
    pkg = present(world.wallet, cid, ["given_name"])
    other = present(world.wallet, cid2, ["given_name"])
    assert rp(world, dataclasses.replace(pkg, original_compact=other.original_compact)).reason \
        is RpReason.DISCLOSURE_MISMATCH
    assert rp(world, dataclasses.replace(pkg, full_form_commitment=b"\x00" * 32)).reason \
        is RpReason.DISCLOSURE_MISMATCH


def test_rp_malformed_and_bad_signature(world):
    cid, _, _, _ = published(world)
    pkg = present(world.wallet, cid, ["given_name"])
    assert rp(world, dataclasses.replace(pkg, attested_jwt_vc="a.b")).reason is RpReason.MALFORMED
    h, p, s = pkg.attested_jwt_vc.split(".")
    flipped = s[:-2] + ("A" if s[-2] != "A" else "B") + s[-1]
    assert rp(world, dataclasses.replace(pkg, attested_jwt_vc=f"{h}.{p}.{flipped}")).reason \
        is RpReason.BAD_SIGNATURE


def test_rp_makes_no_federation_calls(world):
    cid, _, _, _ = published(world)
    pkg = present(world.wallet, cid, ["given_name"])
    world.counting.calls = 0
    world.fed.inject_outage(QEAA)
    world.fed.revoke_mark(world.fed.mark_id(QEAA, "qeaa-provider"))
    assert rp(world, pkg).accepted
    assert world.counting.calls == 0


def test_preflight_uses_context_transport(world):
    counting = CountingTransport(world.fed.transport())
    ctx = FederationContext(counting, world.fed.anchor_key(), world.fed.pinned_certs())
    preflight_verify(world.issue(), ctx, world.clock)
    assert counting.calls > 0


def test_ledger_carries_no_claims(world):
    published(world)
    text = world.chain.dumps()
    for needle in ("Ada", "Lovelace", "given_name", "family_name", "health_card_number", "birth_date"):
        assert needle not in text
