"""Command-line front end.

Every command exits 0 on success. On failure it prints a JSON object
``{"error": {"code": ..., "message": ...}}`` on stdout and exits 1.
Keys live under ``$SSIBRIDGE_KEYDIR`` (default ``~/.ssibridge``); every
other file is passed explicitly.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path
from typing import Any, List, Optional, Sequence

from . import sdjwt
from .attested import AttestedCredential
from .clock import Clock, FixedClock, SystemClock
from .crypto import Jwk, digest_from_hex, load_key, save_key, seeded_rng
from .enclave import measure_workload, new_platform
from .errors import SsiBridgeError, UnknownContract
from .federation import FederationTopology, serve_mock_federation, short_name
from .federation.http import HttpTransport, admin
from .ledger import Chain, Index, deploy_verifier, get_events, new_chain
from .scenarios import (
    DEFAULT_SEED,
    SCENARIOS,
    ScenarioConfig,
    default_workload,
    service_workload,
)
from .sdjwt import SdJwtVc, credential_digest
from .service import VerifierService, attest_service, request_verification
from .wallet import (
    DEFAULT_WINDOW_S,
    EnclaveContext,
    FederationContext,
    PresentationPackage,
    SimItWallet,
    SsiWallet,
    create_attested_credential,
    export_credential,
    present,
    publish_proof,
    relying_party_verify,
)

logger = logging.getLogger("ssibridge")


class CliError(SsiBridgeError):
    code = "UsageError"


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def key_dir() -> Path:
    return Path(os.environ.get("SSIBRIDGE_KEYDIR") or Path.home() / ".ssibridge")


def make_clock(args) -> Clock:
    return FixedClock(args.now) if args.now is not None else SystemClock()


def emit(args, obj: Any, text: Optional[str] = None) -> None:
    if args.json or text is None:
        print(json.dumps(obj, indent=2, sort_keys=True))
    else:
        print(text)


def read_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path} is not JSON: {exc}") from None


def write_json(path: str, obj: Any) -> None:
    # Atomic, since other processes poll for these files.
    tmp = Path(f"{path}.tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_text(path: str) -> str:
    try:
        return Path(path).read_text().strip()
    except FileNotFoundError:
        raise CliError(f"no such file: {path}") from None


def json_arg(value: str) -> Any:
    """Inline JSON or a path to a JSON file."""
    if value.lstrip().startswith("{"):
        return json.loads(value)
    return read_json(value)


class FedInfo:
    """Out-of-band federation facts published by ``fed up``."""

    def __init__(self, path: str) -> None:
        self.path = path
        self.data = read_json(path)
        self.topology = FederationTopology.from_dict(self.data["topology"])

    @property
    def base_url(self) -> str:
        return self.data["base_url"]

    def entity(self, name: str) -> str:
        for eid in self.topology.ids():
            if name in (eid, short_name(eid)):
                return eid
        raise CliError(f"unknown entity {name!r}", known=[short_name(e) for e in self.topology.ids()])

    def context(self, timeout: float) -> FederationContext:
        pinned = {k: digest_from_hex(v) for k, v in self.data["pinned_certs"].items()}
        return FederationContext(HttpTransport(self.base_url), Jwk.from_dict(self.data["anchor_key"]), pinned, timeout)


def _roots(args) -> List[bytes]:
    if args.trusted_root:
        return [digest_from_hex(r) for r in args.trusted_root]
    return [new_platform(args.platform_seed).root_fingerprint]


def _load_wallet(path: str) -> SsiWallet:
    if not Path(path).exists():
        raise CliError(f"no wallet at {path}; run 'wallet import' first")
    return SsiWallet.load(path)


def _cred_from(args, wallet: Optional[SsiWallet] = None) -> SdJwtVc:
    if getattr(args, "cred", None):
        return SdJwtVc.parse(read_text(args.cred))
    if wallet is not None and getattr(args, "cred_id", None):
        try:
            return wallet.imported[args.cred_id]
        except KeyError:
            raise CliError(f"wallet holds no credential {args.cred_id}") from None
    raise CliError("pass --cred or --cred-id")


def _load_chain(path: str, clock: Clock) -> Chain:
    if Path(path).exists():
        return Chain.load(path, clock)
    return new_chain(clock.now(), clock)


def _contract_for(chain: Chain, backend: str, roots: Sequence[bytes], measurement: bytes, address: Optional[str]):
    if address:
        try:
            return chain.contracts[address]
        except KeyError:
            raise UnknownContract(f"no contract at {address}") from None
    for c in chain.contracts.values():
        if c.backend_id == backend and set(c.trusted_roots) == set(roots) and c.expected_measurement == measurement:
            return c
    return deploy_verifier(chain, backend, roots, measurement)


def _serve_until_interrupted(stop) -> None:
    done = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: done.set())
    try:
        while not done.wait(0.5):
            pass
    except KeyboardInterrupt:
        pass
    finally:
        stop()


# ---------------------------------------------------------------------------
# fed
# ---------------------------------------------------------------------------

def cmd_fed_up(args) -> int:
    topology = FederationTopology.load(args.topology) if args.topology else FederationTopology.default()
    handle = serve_mock_federation(topology, args.seed, make_clock(args))
    kdir = key_dir()
    entity_keys = {}
    for eid in topology.ids():
        key = handle.entity_key(eid)
        save_key(kdir, key)
        entity_keys[eid] = key.key_id
    info = {
        "base_url": handle.serve_http(args.host, args.port),
        "seed": args.seed,
        "topology": topology.to_dict(),
        "anchor_key": handle.anchor_key().public_dict(),
        "pinned_certs": {k: v.hex() for k, v in handle.pinned_certs().items()},
        "entity_keys": entity_keys,
        "mark_ids": handle.all_mark_ids(),
    }
    write_json(args.info, info)

    def on_rotate(entity_id: str, key: Jwk) -> None:
        save_key(kdir, key)
        info["entity_keys"][entity_id] = key.key_id
        write_json(args.info, info)

    handle.on_rotate = on_rotate
    emit(args, info, f"federation up at {info['base_url']} (info: {args.info}, keys: {kdir})")
    sys.stdout.flush()
    _serve_until_interrupted(handle.close)
    return 0


def _fed_admin(args, action: str, **body) -> int:
    info = FedInfo(args.info)
    out = admin(info.base_url, action, **body)
    if not out.get("ok"):
        raise CliError(f"{action} failed: {out.get('error', out)}")
    emit(args, {"action": action, **body}, f"{action}: {next(iter(body.values()))}")
    return 0


def cmd_fed_outage(args) -> int:
    return _fed_admin(args, "outage", entity_id=FedInfo(args.info).entity(args.entity))


def cmd_fed_restore(args) -> int:
    return _fed_admin(args, "restore", entity_id=FedInfo(args.info).entity(args.entity))


def cmd_fed_revoke(args) -> int:
    return _fed_admin(args, "revoke", mark_id=args.mark_id)


def cmd_fed_rotate(args) -> int:
    return _fed_admin(args, "rotate", entity_id=FedInfo(args.info).entity(args.entity))


# ---------------------------------------------------------------------------
# issuer and IT-Wallet
# ---------------------------------------------------------------------------

def cmd_issuer_issue(args) -> int:
    info = FedInfo(args.info)
    issuer = info.entity(args.issuer)
    key = load_key(key_dir(), info.data["entity_keys"][issuer])
    visible = {"iss": issuer, "sub": args.sub}
    if args.visible:
        visible.update(json_arg(args.visible))
    rng = seeded_rng(args.salt_seed, "cli-salts") if args.salt_seed is not None else None
    cred = sdjwt.issue_sd_jwt_vc(key, visible, json_arg(args.claims), args.vct, args.lifetime, make_clock(args), rng)
    cred_id = credential_digest(cred.compact).hex()
    if args.out:
        Path(args.out).write_text(cred.compact + "\n")
    if args.itwallet:
        itw = SimItWallet.from_dict(read_json(args.itwallet)) if Path(args.itwallet).exists() else SimItWallet(args.sub)
        itw.store(cred_id, cred)
        write_json(args.itwallet, itw.to_dict())
    emit(args, {"cred_id": cred_id, "compact": cred.compact}, cred.compact if not args.out else cred_id)
    return 0


def cmd_itwallet_login(args) -> int:
    path = Path(args.itwallet)
    itw = SimItWallet.from_dict(read_json(args.itwallet)) if path.exists() else SimItWallet(args.holder)
    itw.login(args.eid)
    write_json(args.itwallet, itw.to_dict())
    emit(args, {"holder_id": itw.holder_id, "authenticated": True}, f"logged in as {itw.holder_id}")
    return 0


def cmd_itwallet_export(args) -> int:
    itw = SimItWallet.from_dict(read_json(args.itwallet))
    cred = export_credential(itw, args.cred_id)
    Path(args.out).write_text(cred.compact + "\n")
    emit(args, {"cred_id": args.cred_id, "out": args.out}, f"exported {args.cred_id} to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# SSI wallet
# ---------------------------------------------------------------------------

def _wallet_or_new(args) -> SsiWallet:
    if Path(args.wallet).exists():
        return SsiWallet.load(args.wallet)
    rng = seeded_rng(args.seed, "holder-wallet") if args.seed is not None else None
    return SsiWallet(Jwk.generate("holder-wallet", rng), args.window)


def cmd_wallet_import(args) -> int:
    wallet = _wallet_or_new(args)
    cred_id = wallet.import_credential(SdJwtVc.parse(read_text(args.cred)))
    wallet.save(args.wallet)
    emit(args, {"cred_id": cred_id}, cred_id)
    return 0


def cmd_wallet_attest(args) -> int:
    wallet = _wallet_or_new(args)
    cred = _cred_from(args, wallet)
    wallet.import_credential(cred)
    clock = make_clock(args)
    enclave = EnclaveContext(new_platform(args.platform_seed), default_workload(args.workload_version))
    att = create_attested_credential(wallet, cred, FedInfo(args.info).context(args.timeout), enclave, clock, args.window)
    wallet.save(args.wallet)
    if args.out:
        Path(args.out).write_text(att.jwt_vc + "\n")
    cred_id = credential_digest(cred.compact).hex()
    emit(args, {"cred_id": cred_id, "attested_jwt_vc": att.jwt_vc, "verification_result": att.claims["verification_result"]},
         f"attested {cred_id}" + (f" -> {args.out}" if args.out else ""))
    return 0


def cmd_wallet_publish(args) -> int:
    wallet = _load_wallet(args.wallet)
    att = wallet.attested.get(args.cred_id)
    if att is None:
        raise CliError(f"credential {args.cred_id} has not been attested")
    clock = make_clock(args)
    chain = _load_chain(args.chain, clock)
    contract = _contract_for(chain, wallet.backend_id, _roots(args),
                             measure_workload(default_workload(args.workload_version)), args.contract)
    try:
        ref = publish_proof(wallet, att, chain, contract)
    finally:
        chain.save(args.chain)
    wallet.save(args.wallet)
    emit(args, {"contract": contract.address, "event_ref": ref.to_dict()},
         f"published at block {ref.block_number} (contract {contract.address})")
    return 0


def cmd_wallet_present(args) -> int:
    wallet = _load_wallet(args.wallet)
    pkg = present(wallet, args.cred_id, [c for c in args.claims.split(",") if c])
    Path(args.out).write_text(pkg.dumps() + "\n")
    emit(args, pkg.to_dict(), f"presentation written to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# chain
# ---------------------------------------------------------------------------

def cmd_chain_show(args) -> int:
    chain = Chain.load(args.chain)
    blocks = [{
        "number": b.number,
        "digest": b.digest.hex(),
        "timestamp": b.timestamp,
        "tx": b.txs[0].get("type") if b.txs else None,
        "success": list(b.success),
        "events": len(b.events),
    } for b in chain.blocks]
    out = {"height": chain.height, "contracts": sorted(chain.contracts), "blocks": blocks}
    text = "\n".join(f"#{b['number']} {b['digest'][:16]} {b['tx'] or 'genesis'} events={b['events']}" for b in blocks)
    emit(args, out, text)
    return 0


def cmd_chain_events(args) -> int:
    chain = Chain.load(args.chain)
    digest = digest_from_hex(args.credential_digest) if args.credential_digest else None
    events = [e.to_dict() for e in get_events(chain, args.contract, digest, args.from_block)]
    emit(args, events, "\n".join(f"block {e['block_number']} {e['name']} {e['credential_digest']}" for e in events)
         or "no events")
    return 0


def cmd_chain_load(args) -> int:
    chain = Chain.load(args.chain)
    index = Index.rebuild(chain)
    emit(args, {"height": chain.height, "events": len(index), "index": index.to_dict()},
         f"chain ok: height {chain.height}, {len(index)} events")
    return 0


# ---------------------------------------------------------------------------
# verifier service
# ---------------------------------------------------------------------------

def _provider_key(create: bool) -> Jwk:
    kdir = key_dir()
    try:
        return load_key(kdir, "cvm-provider")
    except FileNotFoundError:
        if not create:
            raise CliError(f"no provider key in {kdir}") from None
    key = Jwk.generate("cvm-provider")
    save_key(kdir, key)
    return key


def cmd_svc_serve(args) -> int:
    clock = make_clock(args)
    platform = new_platform(args.platform_seed)
    workload = service_workload(args.workload_version)
    provider = _provider_key(create=True)
    signer = Jwk.generate("service-signer")
    chain = _load_chain(args.chain, clock)
    contract = _contract_for(chain, "transcript", [platform.root_fingerprint], measure_workload(workload), args.contract)
    chain.save(args.chain)
    svc = VerifierService(platform=platform, workload=workload, provider_key=provider, signing_key=signer,
                          federation=FedInfo(args.info).context(args.timeout), chain=chain, contract=contract,
                          clock=clock, window_s=args.window, chain_path=args.chain)
    base = svc.serve(args.host, args.port)
    info = {"base_url": base, "provider_key": provider.public_dict(), "contract": contract.address}
    if args.svc_info:
        write_json(args.svc_info, info)
    emit(args, info, f"verifier service at {base}")
    sys.stdout.flush()
    _serve_until_interrupted(svc.close)
    return 0


def _handle(args):
    doc = read_json(args.provider_key)
    provider = Jwk.from_dict(doc.get("provider_key", doc)).public()
    measurement = (digest_from_hex(args.measurement) if args.measurement
                   else measure_workload(service_workload(args.workload_version)))
    return attest_service(args.url, provider, measurement, trusted_roots=_roots(args))


def cmd_svc_attest(args) -> int:
    h = _handle(args)
    emit(args, {"attested": True, "measurement": h.measurement.hex(), "root": h.root_fingerprint.hex()},
         f"service attested (measurement {h.measurement.hex()[:16]})")
    return 0


def cmd_svc_verify(args) -> int:
    handle = _handle(args)
    cred = SdJwtVc.parse(read_text(args.cred))
    resp = request_verification(handle, cred)
    if args.out:
        Path(args.out).write_text(resp.attested.jwt_vc + "\n")
    cred_id = credential_digest(cred.compact).hex()
    if args.wallet:
        wallet = _wallet_or_new(args)
        wallet.import_credential(cred)
        with wallet._lock:
            wallet.attested[cred_id] = resp.attested
            wallet.event_refs.setdefault(cred_id, []).append(resp.event_ref)
        wallet.save(args.wallet)
    emit(args, {"cred_id": cred_id, "attested_jwt_vc": resp.attested.jwt_vc, "event_ref": resp.event_ref.to_dict(),
                "verdict": resp.verdict}, f"verified remotely: outcome {resp.verdict.get('outcome')}")
    return 0


# ---------------------------------------------------------------------------
# relying party
# ---------------------------------------------------------------------------

def cmd_rp_verify(args) -> int:
    pkg = PresentationPackage.loads(read_text(args.package))
    if args.chain:
        ledger = Chain.load(args.chain)
    elif args.allow_offchain_only:
        ledger = Index()
    else:
        raise CliError("--chain is required unless --allow-offchain-only is given")
    if args.measurement:
        measurement = digest_from_hex(args.measurement)
    else:
        wl = service_workload if args.workload == "service" else default_workload
        measurement = measure_workload(wl(args.workload_version))
    verdict = relying_party_verify(pkg, ledger, _roots(args), measurement, make_clock(args),
                                   args.allow_offchain_only, args.contract)
    if not verdict.accepted:
        raise RpRejected(verdict.reason.value)
    emit(args, verdict.to_dict(), "Accept " + json.dumps(dict(verdict.claims), sort_keys=True))
    return 0


class RpRejected(SsiBridgeError):
    code = "Rejected"

    def __init__(self, reason: str) -> None:
        super().__init__(f"presentation rejected: {reason}", reason=reason)


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def cmd_scenario_run(args) -> int:
    cfg = ScenarioConfig(args.topology, args.seed, args.window, args.backend, args.ledger)
    result = SCENARIOS[args.name](cfg)
    lines = [f"scenario {args.name}: {'PASS' if result.passed else 'FAIL'}"]
    lines += [f"  {'ok ' if ok else 'BAD'} {name}" for name, ok in result.checks.items()]
    emit(args, result.to_dict(), "\n".join(lines))
    if not result.passed:
        failed = [k for k, v in result.checks.items() if not v]
        raise ScenarioFailed(args.name, failed)
    return 0


class ScenarioFailed(SsiBridgeError):
    code = "ScenarioFailed"

    def __init__(self, name: str, failed: List[str]) -> None:
        super().__init__(f"scenario {name} failed", failed_checks=failed)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_platform(p: argparse.ArgumentParser) -> None:
    p.add_argument("--platform-seed", type=int, default=DEFAULT_SEED, help="seed of the simulated platform")
    p.add_argument("--trusted-root", action="append", help="trusted platform root fingerprint (hex); repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssibridge", description="Attested SSI credential bridge toolkit")
    parser.add_argument("--json", action="store_true", help="JSON output on stdout")
    parser.add_argument("--now", type=int, help="pin the clock to this UNIX time")
    parser.add_argument("-v", "--verbose", action="store_true")
    groups = parser.add_subparsers(dest="group", required=True)

    def sub(group: str, help_text: str):
        g = groups.add_parser(group, help=help_text)
        return g.add_subparsers(dest="command", required=True)

    fed = sub("fed", "mock federation")
    p = fed.add_parser("up", help="serve a federation in the foreground")
    p.add_argument("--topology")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--info", default="federation.json", help="where to write the out-of-band federation facts")
    p.set_defaults(func=cmd_fed_up)
    for name, func, arg in (("outage", cmd_fed_outage, "entity"), ("restore", cmd_fed_restore, "entity"),
                            ("rotate", cmd_fed_rotate, "entity"), ("revoke", cmd_fed_revoke, "mark_id")):
        p = fed.add_parser(name)
        p.add_argument(arg)
        p.add_argument("--info", default="federation.json")
        p.set_defaults(func=func)

    issuer = sub("issuer", "credential issuance")
    p = issuer.add_parser("issue")
    p.add_argument("--info", default="federation.json")
    p.add_argument("--issuer", default="qeaa-provider")
    p.add_argument("--claims", required=True, help="selectively disclosable claims: JSON object or file")
    p.add_argument("--visible", help="extra always-visible claims: JSON object or file")
    p.add_argument("--sub", default="holder")
    p.add_argument("--vct", default="urn:eudi:qeaa:1")
    p.add_argument("--lifetime", type=int, default=365 * 86400)
    p.add_argument("--salt-seed", type=int)
    p.add_argument("--out")
    p.add_argument("--itwallet", help="also store the credential in this IT-Wallet file")
    p.set_defaults(func=cmd_issuer_issue)

    itw = sub("itwallet", "simulated government wallet")
    p = itw.add_parser("login")
    p.add_argument("--itwallet", required=True)
    p.add_argument("--eid", required=True, help="eID credential (any non-empty string)")
    p.add_argument("--holder", default="holder")
    p.set_defaults(func=cmd_itwallet_login)
    p = itw.add_parser("export")
    p.add_argument("--itwallet", required=True)
    p.add_argument("--cred-id", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_itwallet_export)

    wal = sub("wallet", "SSI wallet")

    def wallet_parser(name, func):
        p = wal.add_parser(name)
        p.add_argument("--wallet", default="wallet.json")
        p.add_argument("--seed", type=int, help="derive a new wallet's key from this seed")
        p.add_argument("--window", type=int, default=DEFAULT_WINDOW_S)
        p.set_defaults(func=func)
        return p

    p = wallet_parser("import", cmd_wallet_import)
    p.add_argument("--cred", required=True)
    p = wallet_parser("attest", cmd_wallet_attest)
    p.add_argument("--cred")
    p.add_argument("--cred-id")
    p.add_argument("--info", default="federation.json")
    p.add_argument("--platform-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workload-version", default="1.0")
    p.add_argument("--timeout", type=float, default=2.0)
    p.add_argument("--out")
    p = wallet_parser("publish", cmd_wallet_publish)
    p.add_argument("--cred-id", required=True)
    p.add_argument("--chain", required=True)
    p.add_argument("--contract")
    p.add_argument("--workload-version", default="1.0")
    _add_platform(p)
    p = wallet_parser("present", cmd_wallet_present)
    p.add_argument("--cred-id", required=True)
    p.add_argument("--claims", default="", help="comma-separated claim names to disclose")
    p.add_argument("--out", required=True)

    ch = sub("chain", "simulated ledger")
    for name, func in (("show", cmd_chain_show), ("events", cmd_chain_events), ("load", cmd_chain_load)):
        p = ch.add_parser(name)
        p.add_argument("--chain", required=True)
        p.set_defaults(func=func)
        if name == "events":
            p.add_argument("--credential-digest")
            p.add_argument("--contract")
            p.add_argument("--from-block", type=int, default=0)

    svc = sub("svc", "verification service")
    p = svc.add_parser("serve")
    p.add_argument("--info", default="federation.json")
    p.add_argument("--chain", required=True)
    p.add_argument("--contract")
    p.add_argument("--platform-seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--workload-version", default="1.0")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW_S)
    p.add_argument("--timeout", type=float, default=2.0)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--svc-info", help="write base URL and provider key here")
    p.set_defaults(func=cmd_svc_serve)
    for name, func in (("attest", cmd_svc_attest), ("verify", cmd_svc_verify)):
        p = svc.add_parser(name)
        p.add_argument("--url", required=True)
        p.add_argument("--provider-key", required=True, help="provider public key: a JWK file, or the --svc-info file")
        p.add_argument("--measurement", help="expected measurement (hex), obtained out of band")
        p.add_argument("--workload-version", default="1.0",
                       help="compute the expected measurement from the public service workload")
        _add_platform(p)
        p.set_defaults(func=func)
        if name == "verify":
            p.add_argument("--cred", required=True)
            p.add_argument("--out")
            p.add_argument("--wallet", help="store the result in this wallet file")
            p.add_argument("--seed", type=int)
            p.add_argument("--window", type=int, default=DEFAULT_WINDOW_S)

    rp = sub("rp", "relying party")
    p = rp.add_parser("verify")
    p.add_argument("--package", required=True)
    p.add_argument("--chain")
    p.add_argument("--contract")
    p.add_argument("--measurement")
    p.add_argument("--workload", choices=("local", "service"), default="local")
    p.add_argument("--workload-version", default="1.0")
    p.add_argument("--allow-offchain-only", action="store_true",
                   help="accept packages without an on-chain event (quote only)")
    _add_platform(p)
    p.set_defaults(func=cmd_rp_verify)

    sc = sub("scenario", "reproducible end-to-end runs")
    p = sc.add_parser("run")
    p.add_argument("name", choices=sorted(SCENARIOS))
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--topology")
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW_S)
    p.add_argument("--backend", default="transcript")
    p.add_argument("--ledger", help="write the resulting ledger here")
    p.set_defaults(func=cmd_scenario_run)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SsiBridgeError as exc:
        print(json.dumps({"error": exc.to_dict()}, sort_keys=True))
        return 1
    except (OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": {"code": type(exc).__name__, "message": str(exc)}}, sort_keys=True))
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
