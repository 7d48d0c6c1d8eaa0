"""Reproducible end-to-end runs used by the CLI and the acceptance tests.

Every scenario runs on a FixedClock with seeded key and salt streams, so a
given :class:`ScenarioConfig` always yields the same ledger bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional

from . import sdjwt
from .clock import FixedClock
from .crypto import Jwk, seeded_rng
from .enclave import (
    Platform,
    PublicInputs,
    QuoteVerdict,
    WorkloadDescriptor,
    measure_workload,
    new_platform,
    verify_quote,
)
from .errors import AttestationFailed, PreflightFailed
from .federation import CountingTransport, FederationHandle, FederationTopology, serve_mock_federation
from .ledger import Chain, Index, deploy_verifier, get_events, new_chain, rebuild_index
from .sdjwt import SdJwtVc, credential_digest
from .service import VerifierService, attest_service, request_verification
from .wallet import (
    DEFAULT_WINDOW_S,
    EnclaveContext,
    FederationContext,
    PresentationPackage,
    SsiWallet,
    create_attested_credential,
    present,
    publish_proof,
    relying_party_verify,
)

DEFAULT_SEED = 7
SCENARIO_START = 1_750_000_000
ISSUER_ID = "https://qeaa-provider.example"
CREDENTIAL_LIFETIME_S = 365 * 86400
WORKLOAD_NAME = "ssibridge-verifier"
SERVICE_WORKLOAD_NAME = "ssibridge-verification-service"

SAMPLE_CLAIMS = {
    "given_name": "Ada",
    "family_name": "Lovelace",
    "birth_date": "1815-12-10",
    "health_card_number": "HC-0001-7781",
}


def default_workload(version: str = "1.0") -> WorkloadDescriptor:
    return WorkloadDescriptor(WORKLOAD_NAME, version)


def service_workload(version: str = "1.0") -> WorkloadDescriptor:
    return WorkloadDescriptor(SERVICE_WORKLOAD_NAME, version)


@dataclass(frozen=True)
class ScenarioConfig:
    topology_path: Optional[str] = None
    seed: int = DEFAULT_SEED
    window_s: int = DEFAULT_WINDOW_S
    backend_id: str = "transcript"
    ledger_path: Optional[str] = None

    def topology(self) -> FederationTopology:
        if self.topology_path:
            return FederationTopology.load(self.topology_path)
        return FederationTopology.default()


@dataclass
class ScenarioResult:
    name: str
    checks: Dict[str, bool] = field(default_factory=dict)
    details: Dict[str, object] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(self.checks.values())

    def to_dict(self) -> dict:
        return {"scenario": self.name, "passed": self.passed, "checks": dict(self.checks), "details": self.details}


class World:
    """Everything one seeded run needs, wired together."""

    def __init__(self, cfg: ScenarioConfig) -> None:
        self.cfg = cfg
        self.clock = FixedClock(SCENARIO_START)
        self.topology = cfg.topology()
        self.fed: FederationHandle = serve_mock_federation(self.topology, cfg.seed, self.clock)
        self.counting = CountingTransport(self.fed.transport())
        self.fed_ctx = FederationContext(self.counting, self.fed.anchor_key(), self.fed.pinned_certs())
        self.platform: Platform = new_platform(cfg.seed)
        self.workload = default_workload()
        self.wallet = SsiWallet(Jwk.generate("holder-wallet", seeded_rng(cfg.seed, "holder-wallet")),
                                cfg.window_s, cfg.backend_id)
        self.chain: Chain = new_chain(self.clock.now(), self.clock)
        self._salts = seeded_rng(cfg.seed, "disclosure-salts")

    @property
    def measurement(self) -> bytes:
        return measure_workload(self.workload)

    @property
    def issuer_id(self) -> str:
        ids = self.topology.ids()
        return ISSUER_ID if ISSUER_ID in ids else self.topology.entities[-1].entity_id

    def issue(self, claims: Optional[dict] = None, subject: str = "holder-1") -> SdJwtVc:
        return sdjwt.issue_sd_jwt_vc(
            self.fed.entity_key(self.issuer_id),
            {"iss": self.issuer_id, "sub": subject},
            dict(claims or SAMPLE_CLAIMS),
            "urn:eudi:qeaa:health-card:1",
            CREDENTIAL_LIFETIME_S,
            self.clock,
            self._salts,
        )

    def enclave(self) -> EnclaveContext:
        return EnclaveContext(self.platform, self.workload)

    def deploy(self):
        return deploy_verifier(self.chain, self.cfg.backend_id, [self.platform.root_fingerprint], self.measurement)

    def close(self) -> None:
        self.fed.close()


def run_fig3(cfg: ScenarioConfig) -> ScenarioResult:
    """Attested issuance, with the preflight gating the enclave."""
    w = World(cfg)
    res = ScenarioResult("fig3")
    try:
        cred = w.issue()
        enclave = w.enclave()
        att = create_attested_credential(w.wallet, cred, w.fed_ctx, enclave, w.clock)
        inputs: PublicInputs = att.public_inputs()
        chain_entities = [e.entity_id for e in w.topology.entities
                          if e.entity_id in _chain_of(w.topology, w.issuer_id)]
        expected_certs = {w.fed.pinned_certs()[e] for e in chain_entities}
        res.checks["quote_verifies"] = verify_quote(
            att.quote, w.platform.root_fingerprint, w.measurement, inputs) is QuoteVerdict.VALID
        res.checks["report_binds_credential_digest"] = (
            inputs.credential_digest == credential_digest(cred.compact)
            and att.quote.report_data == inputs.report_data()
        )
        res.checks["report_binds_endpoint_certs"] = set(inputs.endpoint_cert_fingerprints) == expected_certs
        res.checks["outcome_valid"] = inputs.outcome == 1
        res.checks["enclave_ran_once"] = enclave.calls == 1

        # Failing preflight must never reach the enclave.
        w.fed.inject_outage(w.issuer_id)
        blocked = w.enclave()
        try:
            create_attested_credential(w.wallet, w.issue(subject="holder-2"), w.fed_ctx, blocked, w.clock)
            res.checks["preflight_blocks_enclave"] = False
        except PreflightFailed:
            res.checks["preflight_blocks_enclave"] = blocked.calls == 0
        res.details.update(attested_jwt_vc=att.jwt_vc, public_inputs=inputs.to_dict())
    finally:
        w.close()
    return res


def _chain_of(topology: FederationTopology, leaf: str):
    out, cur = [], leaf
    while cur:
        out.append(cur)
        cur = topology.get(cur).authority
    return out


def _publish_flow(w: World):
    contract = w.deploy()
    live = Index.subscribe(w.chain)
    cred = w.issue()
    cid = w.wallet.import_credential(cred)
    att = create_attested_credential(w.wallet, cred, w.fed_ctx, w.enclave(), w.clock)
    ref = publish_proof(w.wallet, att, w.chain, contract)
    return contract, live, cred, cid, att, ref


def run_fig4(cfg: ScenarioConfig) -> ScenarioResult:
    """Publish a proof, then check the index survives a reload."""
    w = World(cfg)
    res = ScenarioResult("fig4")
    try:
        contract, live, cred, cid, att, ref = _publish_flow(w)
        events = get_events(w.chain, contract=contract.address)
        res.checks["one_event"] = len(events) == 1 and events[0].credential_digest == att.original_credential_digest
        res.checks["event_resolves"] = w.chain.resolve(ref) == events[0]
        res.checks["rebuilt_index_matches_live"] = rebuild_index(w.chain) == live
        text = w.chain.dumps()
        if cfg.ledger_path:
            Path(cfg.ledger_path).write_text(text, encoding="utf-8")
            text = Path(cfg.ledger_path).read_text(encoding="utf-8")
        res.checks["reload_identical_index"] = rebuild_index(Chain.loads(text)) == live
        res.details.update(event_ref=ref.to_dict(), contract=contract.address, height=w.chain.height,
                           ledger_path=cfg.ledger_path)
    finally:
        w.close()
    return res


def run_fig5(cfg: ScenarioConfig) -> ScenarioResult:
    """Verification as a service: attest, send, present, and a version-bumped service refused."""
    w = World(cfg)
    res = ScenarioResult("fig5")
    services = []
    try:
        wl = service_workload("1.0")
        expected = measure_workload(wl)
        contract = deploy_verifier(w.chain, cfg.backend_id, [w.platform.root_fingerprint], expected)
        provider = Jwk.generate("cvm-provider", seeded_rng(cfg.seed, "cvm-provider"))
        signer = Jwk.generate("service-signer", seeded_rng(cfg.seed, "service-signer"))

        def start(workload: WorkloadDescriptor) -> str:
            svc = VerifierService(platform=w.platform, workload=workload, provider_key=provider, signing_key=signer,
                                  federation=w.fed_ctx, chain=w.chain, contract=contract, clock=w.clock,
                                  window_s=cfg.window_s)
            services.append(svc)
            return svc.serve()

        url = start(wl)
        nonce = seeded_rng(cfg.seed, "nonce").randbytes(32)
        handle = attest_service(url, provider.public(), expected, nonce, [w.platform.root_fingerprint])
        res.checks["service_attested"] = True
        cred = w.issue()
        resp = request_verification(handle, cred)
        res.checks["remote_outcome_valid"] = resp.verdict.get("outcome") == 1
        pkg = PresentationPackage(resp.attested.jwt_vc, sdjwt.present(cred, ["given_name"]).compact,
                                  resp.event_ref, credential_digest(cred.compact))
        verdict = relying_party_verify(pkg, w.chain, [w.platform.root_fingerprint], expected, w.clock,
                                       contract_address=contract.address)
        res.checks["relying_party_accepts"] = verdict.accepted
        res.checks["server_retains_no_credential"] = all(
            cred.compact.encode() not in s.retained_state() for s in services)

        bumped = start(service_workload("1.1"))
        try:
            attest_service(bumped, provider.public(), expected, nonce, [w.platform.root_fingerprint])
            res.checks["bumped_version_refused"] = False
        except AttestationFailed as exc:
            res.checks["bumped_version_refused"] = exc.reason == "MeasurementMismatch"
        res.details.update(verdict=verdict.to_dict(), event_ref=resp.event_ref.to_dict())
    finally:
        for s in services:
            s.close()
        w.close()
    return res


def run_outage(cfg: ScenarioConfig) -> ScenarioResult:
    """Published credentials stay usable offline until their window closes."""
    w = World(cfg)
    res = ScenarioResult("outage")
    try:
        contract, live, cred, cid, att, ref = _publish_flow(w)
        pkg = present(w.wallet, cid, ["given_name"])
        roots = [w.platform.root_fingerprint]
        for e in w.topology.entities:
            if e.marks:
                w.fed.inject_outage(e.entity_id)
        try:
            create_attested_credential(w.wallet, w.issue(subject="holder-2"), w.fed_ctx, w.enclave(), w.clock)
            res.checks["fresh_attestation_fails"] = False
        except PreflightFailed as exc:
            res.checks["fresh_attestation_fails"] = True
            res.details["fresh_attestation_error"] = exc.to_dict()
        before = w.counting.calls
        accepted = relying_party_verify(pkg, w.chain, roots, w.measurement, w.clock, contract_address=contract.address)
        res.checks["published_package_accepted"] = accepted.accepted
        res.checks["zero_federation_calls"] = w.counting.calls == before
        t1 = att.verified_at
        w.clock.set(t1 + att.validity_window_s - 1)
        res.checks["accepted_until_window_end"] = relying_party_verify(
            pkg, w.chain, roots, w.measurement, w.clock).accepted
        w.clock.set(t1 + att.validity_window_s)
        stale = relying_party_verify(pkg, w.chain, roots, w.measurement, w.clock)
        res.checks["stale_after_window"] = (not stale.accepted) and stale.reason is not None and \
            stale.reason.value == "Stale"
        res.details.update(accepted=accepted.to_dict(), stale=stale.to_dict())
    finally:
        w.close()
    return res


SCENARIOS: Dict[str, Callable[[ScenarioConfig], ScenarioResult]] = {
    "fig3": run_fig3,
    "fig4": run_fig4,
    "fig5": run_fig5,
    "outage": run_outage,
}
