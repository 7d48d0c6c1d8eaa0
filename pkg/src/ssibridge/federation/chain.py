"""Trust chain resolution and verification against an out-of-band anchor key."""

from __future__ import annotations

import json
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from ..clock import Clock
from ..crypto import Jwk, canonical_json, verify_compact
from ..errors import (
    CycleDetected,
    DepthExceeded,
    FetchFailed,
    MalformedToken,
    SignatureInvalid,
    TransportError,
)
from .model import (
    ChainVerdict,
    EntityResult,
    EntityStatement,
    Reason,
    Status,
    StatusResult,
    TrustChain,
    TrustMark,
    configuration_url,
    fetch_url,
    origin_of,
)
from .transport import DEFAULT_TIMEOUT_S, Transport

MAX_DEPTH = 8

# First matching reason wins when several faults are present.
_PRECEDENCE = (
    Reason.ANCHOR_MISMATCH,
    Reason.BAD_SIGNATURE,
    Reason.STATEMENT_EXPIRED,
    Reason.STATEMENT_NOT_YET_VALID,
    Reason.MARK_INVALID,
    Reason.MARK_ISSUER_UNAUTHORIZED,
    Reason.MARK_SIGNATURE_INVALID,
    Reason.TRANSPORT_COMPROMISED,
    Reason.MARK_REVOKED,
    Reason.MARK_SILENT,
    Reason.MARK_UNREACHABLE,
)

_STATUS_REASON = {
    Status.REVOKED: Reason.MARK_REVOKED,
    Status.SILENT: Reason.MARK_SILENT,
    Status.UNREACHABLE: Reason.MARK_UNREACHABLE,
}


def _fetch_statement(fetcher: Transport, url: str, entity_id: str, timeout: float,
                     served_by: Optional[List[Tuple[str, Optional[bytes]]]] = None) -> EntityStatement:
    try:
        ex = fetcher.get(url, timeout)
    except TransportError as exc:
        raise FetchFailed(entity_id, f"{url}: {exc}") from exc
    if served_by is not None:
        served_by.append((url, ex.cert.fingerprint if ex.cert is not None else None))
    if ex.status != 200:
        raise FetchFailed(entity_id, f"{url}: HTTP {ex.status}")
    try:
        return EntityStatement.parse(ex.body.decode("ascii"))
    except (MalformedToken, UnicodeDecodeError) as exc:
        raise FetchFailed(entity_id, f"{url}: unparseable statement") from exc


def resolve_trust_chain(leaf_id: str, fetcher: Transport, max_depth: int = MAX_DEPTH,
                        timeout: float = DEFAULT_TIMEOUT_S) -> TrustChain:
    """Follow the first authority hint of each entity up to an entity without hints."""

    served_by: List[Tuple[str, Optional[bytes]]] = []

    def configuration(eid: str) -> EntityStatement:
        st = _fetch_statement(fetcher, configuration_url(eid), eid, timeout, served_by)
        if st.issuer_id != eid or st.subject_id != eid:
            raise FetchFailed(eid, "entity configuration is not self-issued by the requested entity")
        return st

    leaf = configuration(leaf_id)
    statements: List[EntityStatement] = [leaf]
    visited = [leaf_id]
    current = leaf
    while current.authority_hints:
        superior = current.authority_hints[0]
        if superior in visited:
            raise CycleDetected(f"authority hints loop back to {superior}")
        # Two more statements would follow at minimum: the subordinate one and the anchor.
        if len(statements) + 2 > max_depth:
            raise DepthExceeded(f"trust chain longer than {max_depth} statements")
        sup_config = configuration(superior)
        sub = _fetch_statement(fetcher, fetch_url(superior, current.subject_id), superior, timeout, served_by)
        if sub.issuer_id != superior or sub.subject_id != current.subject_id:
            raise FetchFailed(superior, "subordinate statement names the wrong parties")
        statements.append(sub)
        visited.append(superior)
        current = sup_config
    if current is not leaf:
        statements.append(current)
    return TrustChain(tuple(statements), tuple(served_by))


def check_trust_mark_status(mark: TrustMark, transport: Transport, clock: Clock,
                            timeout: float = DEFAULT_TIMEOUT_S) -> StatusResult:
    """Query the mark's status endpoint; an absent or unusable answer counts as Silent."""
    queried_at = clock.now()
    body = canonical_json({"trust_mark_id": mark.mark_id})
    try:
        ex = transport.post(mark.status_endpoint, body, timeout)
    except TransportError:
        return StatusResult(mark.mark_id, Status.UNREACHABLE, mark.status_endpoint, queried_at)
    fp = ex.cert.fingerprint if ex.cert is not None else None
    if ex.status >= 500:
        return StatusResult(mark.mark_id, Status.UNREACHABLE, mark.status_endpoint, queried_at, fp)
    active = None
    if ex.status == 200 and ex.body:
        try:
            doc = json.loads(ex.body)
            if isinstance(doc, dict) and isinstance(doc.get("active"), bool):
                active = doc["active"]
        except (json.JSONDecodeError, UnicodeDecodeError):
            pass
    if active is None:
        return StatusResult(mark.mark_id, Status.SILENT, mark.status_endpoint, queried_at, fp)
    status = Status.ACTIVE if active else Status.REVOKED
    return StatusResult(mark.mark_id, status, mark.status_endpoint, queried_at, fp, ex.body)


def _structure_ok(statements: Sequence[EntityStatement]) -> bool:
    if not statements:
        return False
    if not statements[0].is_configuration or not statements[-1].is_configuration:
        return False
    if statements[-1].authority_hints:
        return False
    for i in range(1, len(statements)):
        if statements[i].subject_id != statements[i - 1].issuer_id:
            return False
        if 0 < i < len(statements) - 1 and statements[i].is_configuration:
            return False
    return True


def _verifies(statement: EntityStatement, keys: Sequence[Jwk]) -> bool:
    try:
        verify_compact(statement.token, keys)
    except (SignatureInvalid, MalformedToken):
        return False
    return True


def verify_trust_chain(
    chain: TrustChain,
    anchor_key: Jwk,
    transport: Transport,
    clock: Clock,
    pinned_certs: Optional[Mapping[str, bytes]] = None,
    timeout: float = DEFAULT_TIMEOUT_S,
) -> ChainVerdict:
    """Check every statement of ``chain`` along with its trust marks.

    Failures are reported in the verdict, never raised. Every trust mark of
    every chain entity is queried exactly once, even after an earlier
    failure, so the verdict carries the complete diagnostic.
    ``pinned_certs`` maps endpoint origins to expected certificate
    fingerprints; a mismatch on any fetch or status query yields
    TransportCompromised for the entity whose endpoint answered.
    """
    anchor_fp = anchor_key.fingerprint()
    st = chain.statements
    if not _structure_ok(st):
        return ChainVerdict.failed(Reason.CHAIN_BROKEN, anchor_fp)
    if len(st) > MAX_DEPTH:
        return ChainVerdict.failed(Reason.DEPTH_EXCEEDED, anchor_fp)
    now = clock.now()
    anchor_cfg = st[-1]
    anchor_id = anchor_cfg.issuer_id
    anchor_pinned = any(k.same_public(anchor_key) for k in anchor_cfg.jwks)

    # Keys are established top-down: the anchor from the pin, everyone else
    # from the statement their superior issued about them.
    keys_of: Dict[str, Tuple[Jwk, ...]] = {anchor_id: (anchor_key.public(),)}
    for s in reversed(st[1:-1]):
        keys_of[s.subject_id] = s.jwks

    entity_ids = chain.entity_ids()
    sig_ok = {e: True for e in entity_ids}
    unexpired = {e: True for e in entity_ids}
    not_yet = {e: False for e in entity_ids}
    for s in st:
        if not _verifies(s, keys_of.get(s.issuer_id, ())):
            sig_ok[s.subject_id] = False
        if now >= s.exp:
            unexpired[s.subject_id] = False
        elif s.iat > now:
            unexpired[s.subject_id] = False
            not_yet[s.subject_id] = True

    marks_of: Dict[str, List[TrustMark]] = {e: [] for e in entity_ids}
    seen_marks = set()
    for s in st:
        for m in s.trust_marks:
            if m.mark_id in seen_marks:
                continue
            seen_marks.add(m.mark_id)
            marks_of[s.subject_id].append(m)

    issuers = anchor_cfg.trust_mark_issuers
    results: List[EntityResult] = []
    problems: List[Tuple[Reason, str]] = []
    if not anchor_pinned:
        problems.append((Reason.ANCHOR_MISMATCH, anchor_id))
    for e in entity_ids:
        if not sig_ok[e]:
            problems.append((Reason.BAD_SIGNATURE, e))
        if not unexpired[e]:
            problems.append((Reason.STATEMENT_NOT_YET_VALID if not_yet[e] else Reason.STATEMENT_EXPIRED, e))
        if pinned_certs is not None and any(
            origin_of(url) == e and fp is not None and pinned_certs.get(e) != fp for url, fp in chain.served_by
        ):
            problems.append((Reason.TRANSPORT_COMPROMISED, e))
        mark_results: List[StatusResult] = []
        mark_problems: List[Tuple[str, Reason]] = []
        for m in marks_of[e]:
            if m.subject_id != e:
                mark_problems.append((m.mark_id, Reason.MARK_INVALID))
            if m.issuer_id not in issuers.get(m.mark_type, ()):
                mark_problems.append((m.mark_id, Reason.MARK_ISSUER_UNAUTHORIZED))
            try:
                verify_compact(m.token, keys_of.get(m.issuer_id, ()))
            except (SignatureInvalid, MalformedToken):
                mark_problems.append((m.mark_id, Reason.MARK_SIGNATURE_INVALID))
            res = check_trust_mark_status(m, transport, clock, timeout)
            mark_results.append(res)
            if pinned_certs is not None and res.endpoint_cert_fingerprint is not None:
                if pinned_certs.get(origin_of(res.endpoint)) != res.endpoint_cert_fingerprint:
                    mark_problems.append((m.mark_id, Reason.TRANSPORT_COMPROMISED))
            if res.status in _STATUS_REASON:
                mark_problems.append((m.mark_id, _STATUS_REASON[res.status]))
        problems.extend((r, e) for _, r in mark_problems)
        results.append(EntityResult(e, sig_ok[e], unexpired[e], tuple(mark_results), tuple(mark_problems)))

    for reason in _PRECEDENCE:
        for r, e in problems:
            if r is reason:
                return ChainVerdict(reason, anchor_fp, tuple(results), e)
    return ChainVerdict(None, anchor_fp, tuple(results), None)
