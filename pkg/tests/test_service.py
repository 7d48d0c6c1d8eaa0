from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request

import pytest

from ssibridge import sdjwt
from ssibridge.crypto import Jwk, seeded_rng
from ssibridge.enclave import measure_workload, new_platform
from ssibridge.errors import AttestationFailed, ServiceError, Unreachable
from ssibridge.ledger import deploy_verifier, get_events
from ssibridge.scenarios import service_workload
from ssibridge.sdjwt import credential_digest
from ssibridge.service import (
    NONCE_SIZE,
    ServiceAttestation,
    ServiceDescriptor,
    ServiceHandle,
    VerifierService,
    attest_service,
    check_service_attestation,
    fetch_events,
    request_verification,
)
from ssibridge.wallet import (
    PresentationPackage,
    RpReason,
    create_attested_credential,
    present,
    publish_proof,
    relying_party_verify,
)

QEAA = "https://qeaa-provider.example"
NONCE = b"\x11" * NONCE_SIZE


class Harness:
    def __init__(self, world):
        self.world = world
        self.expected = measure_workload(service_workload("1.0"))
        self.contract = deploy_verifier(world.chain, "transcript", [world.platform.root_fingerprint], self.expected)
        self.provider = Jwk.generate("cvm-provider", seeded_rng(7, "cvm-provider"))
        self.signer = Jwk.generate("service-signer", seeded_rng(7, "service-signer"))
        self.services = []

    def start(self, version="1.0", platform=None):
        svc = VerifierService(platform=platform or self.world.platform, workload=service_workload(version),
                              provider_key=self.provider, signing_key=self.signer, federation=self.world.fed_ctx,
                              chain=self.world.chain, contract=self.contract, clock=self.world.clock)
        self.services.append(svc)
        return svc, svc.serve()

    def attest(self, url, nonce=NONCE):
        return attest_service(url, self.provider.public(), self.expected, nonce,
                              [self.world.platform.root_fingerprint])

    def rp(self, pkg, expected=None):
        return relying_party_verify(pkg, self.world.chain, [self.world.platform.root_fingerprint],
                                    expected or self.expected, self.world.clock)

    def close(self):
        for s in self.services:
            s.close()


@pytest.fixture
def h(world):
    harness = Harness(world)
    yield harness
    harness.close()


def test_honest_service_round_trip(h):
    svc, url = h.start()
    handle = h.attest(url)
    assert handle.measurement == h.expected
    cred = h.world.issue()
    resp = request_verification(handle, cred)
    assert resp.verdict["outcome"] == 1
    assert resp.attested.original_credential_digest == credential_digest(cred.compact)
    pkg = PresentationPackage(resp.attested.jwt_vc, sdjwt.present(cred, ["given_name"]).compact,
                              resp.event_ref, credential_digest(cred.compact))
    verdict = h.rp(pkg)
    assert verdict.accepted and verdict.claims["given_name"] == "Ada"
    events = fetch_events(url, credential_digest(cred.compact))
    assert len(events) == 1 and events[0]["tx_digest"] == resp.event_ref.tx_digest.hex()


def test_bumped_version_refused(h):
    _, url = h.start("1.1")
    with pytest.raises(AttestationFailed) as exc:
        h.attest(url)
    assert exc.value.reason == "MeasurementMismatch"


def test_foreign_platform_refused(h):
    _, url = h.start(platform=new_platform(99))
    with pytest.raises(AttestationFailed) as exc:
        h.attest(url)
    assert exc.value.reason == "RootMismatch"


def test_wrong_provider_key_refused(h):
    _, url = h.start()
    impostor = Jwk.generate("impostor", seeded_rng(7, "impostor"))
    with pytest.raises(AttestationFailed) as exc:
        attest_service(url, impostor.public(), h.expected, NONCE, [h.world.platform.root_fingerprint])
    assert exc.value.reason == "ProviderSignatureInvalid"


def test_replayed_attestation_refused(h):
    svc, _ = h.start()
    old = svc.attest(NONCE)
    fresh_nonce = b"\x22" * NONCE_SIZE
    with pytest.raises(AttestationFailed) as exc:
        check_service_attestation(old, h.provider.public(), h.expected, fresh_nonce,
                                  [h.world.platform.root_fingerprint])
    assert exc.value.reason == "NonceMismatch"
    # Relabelling the old quote with the new nonce breaks the report binding instead.
    relabelled = ServiceAttestation(old.quote, old.provider_key_fingerprint, fresh_nonce, old.timestamp,
                                    old.provider_signature)
    with pytest.raises(AttestationFailed) as exc:
        check_service_attestation(relabelled, h.provider.public(), h.expected, fresh_nonce,
                                  [h.world.platform.root_fingerprint])
    assert exc.value.reason == "InputsMismatch"


def test_attestation_round_trips_through_json(h):
    svc, _ = h.start()
    att = ServiceAttestation.from_dict(json.loads(json.dumps(svc.attest(NONCE).to_dict())))
    check_service_attestation(att, h.provider.public(), h.expected, NONCE, [h.world.platform.root_fingerprint])


def test_handle_cannot_be_forged(h):
    svc, url = h.start()
    att = svc.attest(NONCE)
    with pytest.raises(TypeError):
        ServiceHandle(object(), url, h.expected, h.provider.public(), h.world.platform.root_fingerprint, att)
    with pytest.raises(TypeError):
        request_verification(url, h.world.issue())


def test_attest_precedes_credential_on_the_wire(h):
    svc, url = h.start()
    handle = h.attest(url)
    request_verification(handle, h.world.issue())
    posts = [path for method, path in svc.request_log if method == "POST"]
    assert posts == ["/attest", "/verify"]


def test_default_nonce_is_random(h):
    svc, url = h.start()
    a = attest_service(url, h.provider.public(), h.expected, trusted_roots=[h.world.platform.root_fingerprint])
    b = attest_service(url, h.provider.public(), h.expected, trusted_roots=[h.world.platform.root_fingerprint])
    assert len(a.attestation.nonce) == NONCE_SIZE and a.attestation.nonce != b.attestation.nonce


def test_revoked_mark_fails_without_publication(h):
    _, url = h.start()
    handle = h.attest(url)
    h.world.fed.revoke_mark(h.world.fed.mark_id(QEAA, "qeaa-provider"))
    height = h.world.chain.height
    with pytest.raises(ServiceError) as exc:
        request_verification(handle, h.world.issue())
    assert exc.value.code == "PreflightFailed"
    assert h.world.chain.height == height


def post_raw(url, body):
    req = urllib.request.Request(url, data=json.dumps(body).encode(), method="POST",
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=5) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


def test_malformed_requests_reported(h):
    _, url = h.start()
    status, body = post_raw(url + "/verify", {"sd_jwt_vc_compact": "not-a-credential"})
    assert status == 422 and body["error"]["code"] == "MalformedToken"
    status, body = post_raw(url + "/verify", {})
    assert status == 400 and body["error"]["code"] == "BadRequest"


def test_service_is_stateless(h):
    svc, url = h.start()
    handle = h.attest(url)
    creds = [h.world.issue(subject=f"holder-{i}") for i in range(5)]
    for cred in creds:
        request_verification(handle, cred)
    retained = svc.retained_state()
    for cred in creds:
        assert cred.compact.encode() not in retained
        for d in cred.disclosures:
            assert d.encoded.encode() not in retained
    for needle in (b"Ada", b"Lovelace", b"health_card_number"):
        assert needle not in retained


def test_remote_and_local_results_are_equivalent(h):
    """The service result passes the same RP check as a locally attested credential."""
    _, url = h.start()
    cred = h.world.issue()
    remote = request_verification(h.attest(url), cred)
    local_contract = h.world.deploy()
    att = create_attested_credential(h.world.wallet, cred, h.world.fed_ctx, h.world.enclave(), h.world.clock)
    cid = h.world.wallet.import_credential(cred)
    publish_proof(h.world.wallet, att, h.world.chain, local_contract)
    local_pkg = present(h.world.wallet, cid, ["given_name"])
    remote_pkg = PresentationPackage(remote.attested.jwt_vc, local_pkg.original_compact, remote.event_ref,
                                     credential_digest(cred.compact))
    remote_v = h.rp(remote_pkg)
    local_v = h.rp(local_pkg, h.world.measurement)
    assert remote_v.accepted and local_v.accepted and remote_v.claims == local_v.claims
    assert remote.attested.public_inputs().credential_digest == att.public_inputs().credential_digest
    # Each is bound to its own workload.
    assert h.rp(remote_pkg, h.world.measurement).reason is RpReason.MEASUREMENT_MISMATCH


def test_unreachable_service():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    with pytest.raises(Unreachable):
        attest_service(f"http://127.0.0.1:{port}", Jwk.generate("x", seeded_rng(1, "x")).public(), b"\x00" * 32,
                       NONCE, [])


def test_descriptor_consistent(h):
    svc, url = h.start()
    with urllib.request.urlopen(url + "/descriptor", timeout=5) as resp:
        desc = ServiceDescriptor.from_dict(json.loads(resp.read()))
    assert desc.consistent()
    assert desc.expected_measurement == h.expected
    lying = ServiceDescriptor(desc.provider_key, desc.workload, b"\x00" * 32, desc.base_endpoint)
    assert not lying.consistent()


def test_events_endpoint_validates_input(h):
    _, url = h.start()
    try:
        urllib.request.urlopen(url + "/events?credential_digest=zz", timeout=5)
        status = 200
    except urllib.error.HTTPError as err:
        status = err.code
    assert status == 400
    assert get_events(h.world.chain) == []
