"""Simulated append-only ledger with a proof-verifier contract and an event indexer.

One transaction per block, no consensus, no gas. Verified proofs are
recorded only as ``ProofVerified`` events in the block's log; contracts
keep no per-proof storage. Failed verifications are still recorded as
transactions, without events.

Persistence is JSON lines, one canonical-JSON block per line, each carrying
its own digest and its parent's digest.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .clock import Clock
from .crypto import ZERO_DIGEST, canonical_json, digest_from_hex, sha256
from .errors import ChainIntegrityError, UnknownBackend, UnknownContract
from .proof import Proof, ProofStatement, get_backend, statement_digest, verify_proof

EVENT_NAME = "ProofVerified"
BLOCK_TIME_S = 12


@dataclass(frozen=True)
class VerifierContract:
    address: str
    backend_id: str
    trusted_roots: Tuple[bytes, ...]
    expected_measurement: bytes

    def to_dict(self) -> dict:
        return {
            "address": self.address,
            "backend_id": self.backend_id,
            "trusted_roots": [r.hex() for r in self.trusted_roots],
            "expected_measurement": self.expected_measurement.hex(),
        }


@dataclass(frozen=True)
class LedgerEvent:
    contract: str
    name: str
    credential_digest: bytes
    statement_digest: bytes
    outcome: int
    tx_digest: bytes
    block_number: int

    def to_dict(self) -> dict:
        return {
            "contract": self.contract,
            "name": self.name,
            "credential_digest": self.credential_digest.hex(),
            "statement_digest": self.statement_digest.hex(),
            "outcome": self.outcome,
            "tx_digest": self.tx_digest.hex(),
            "block_number": self.block_number,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LedgerEvent":
        return cls(
            d["contract"], d["name"], digest_from_hex(d["credential_digest"]),
            digest_from_hex(d["statement_digest"]), int(d["outcome"]),
            digest_from_hex(d["tx_digest"]), int(d["block_number"]),
        )


@dataclass(frozen=True)
class EventRef:
    credential_digest: bytes
    tx_digest: bytes
    block_number: int

    def to_dict(self) -> dict:
        return {
            "credential_digest": self.credential_digest.hex(),
            "tx_digest": self.tx_digest.hex(),
            "block_number": self.block_number,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EventRef":
        return cls(digest_from_hex(d["credential_digest"]), digest_from_hex(d["tx_digest"]), int(d["block_number"]))

    @classmethod
    def of(cls, event: LedgerEvent) -> "EventRef":
        return cls(event.credential_digest, event.tx_digest, event.block_number)


@dataclass(frozen=True)
class TxReceipt:
    success: bool
    tx_digest: bytes
    block_number: int
    events: Tuple[LedgerEvent, ...] = ()
    contract_address: Optional[str] = None


@dataclass(frozen=True)
class Block:
    number: int
    parent_digest: bytes
    timestamp: int
    txs: Tuple[dict, ...] = ()
    success: Tuple[bool, ...] = ()
    events: Tuple[LedgerEvent, ...] = ()

    def content(self) -> dict:
        return {
            "number": self.number,
            "parent_digest": self.parent_digest.hex(),
            "timestamp": self.timestamp,
            "txs": list(self.txs),
            "success": list(self.success),
            "events": [e.to_dict() for e in self.events],
        }

    @property
    def digest(self) -> bytes:
        return sha256(canonical_json(self.content()))

    def to_line(self) -> str:
        d = self.content()
        d["digest"] = self.digest.hex()
        return canonical_json(d).decode("utf-8")

    @classmethod
    def from_content(cls, d: dict) -> "Block":
        return cls(
            int(d["number"]),
            digest_from_hex(d["parent_digest"]),
            int(d["timestamp"]),
            tuple(d["txs"]),
            tuple(bool(s) for s in d["success"]),
            tuple(LedgerEvent.from_dict(e) for e in d["events"]),
        )


def tx_digest(tx: dict) -> bytes:
    return sha256(canonical_json(tx))


class Chain:
    """Single-writer chain; readers see a consistent prefix."""

    def __init__(self, genesis_timestamp: int, clock: Optional[Clock] = None) -> None:
        self.blocks: List[Block] = [Block(0, ZERO_DIGEST, int(genesis_timestamp))]
        self.contracts: Dict[str, VerifierContract] = {}
        self.clock = clock
        self._lock = threading.RLock()
        self._subscribers: List[Callable[[LedgerEvent], None]] = []
        self._tx_count = 0

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def genesis(self) -> Block:
        return self.blocks[0]

    def subscribe(self, callback: Callable[[LedgerEvent], None]) -> None:
        self._subscribers.append(callback)

    def _next_timestamp(self) -> int:
        prev = self.blocks[-1].timestamp
        if self.clock is not None:
            return max(prev, self.clock.now())
        return prev + BLOCK_TIME_S

    def _append(self, tx: dict, execute: Callable[[bytes, int], Tuple[bool, Tuple[LedgerEvent, ...]]]) -> TxReceipt:
        with self._lock:
            number = len(self.blocks)
            digest = tx_digest(tx)
            ok, events = execute(digest, number)
            block = Block(number, self.blocks[-1].digest, self._next_timestamp(), (tx,), (ok,), events)
            self.blocks.append(block)
            self._tx_count += 1
            subscribers = list(self._subscribers)
        for ev in events:
            for cb in subscribers:
                cb(ev)
        return TxReceipt(ok, digest, number, events)

    # -- persistence ------------------------------------------------------

    def dumps(self) -> str:
        with self._lock:
            return "".join(b.to_line() + "\n" for b in self.blocks)

    def save(self, path: Union[str, Path]) -> None:
        """Atomic write, so concurrent savers never leave a torn file."""
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
        os.replace(tmp, path)

    @classmethod
    def loads(cls, text: str, clock: Optional[Clock] = None) -> "Chain":
        """Rebuild a chain, checking every digest and re-executing every transaction."""
        lines = text.splitlines()
        if not lines:
            raise ChainIntegrityError("empty chain file", block_number=0)
        blocks: List[Block] = []
        for i, line in enumerate(lines):
            try:
                d = json.loads(line)
                stored = d.pop("digest")
                block = Block.from_content(d)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ChainIntegrityError(f"block {i} is unreadable: {exc}", block_number=i) from exc
            if block.to_line() != line or block.digest.hex() != stored or block.number != i:
                raise ChainIntegrityError(f"block {i} does not match its digest", block_number=i)
            expected_parent = blocks[-1].digest if blocks else ZERO_DIGEST
            if block.parent_digest != expected_parent:
                raise ChainIntegrityError(f"block {i} does not extend block {i - 1}", block_number=i)
            blocks.append(block)

        chain = cls(blocks[0].timestamp, clock)
        chain.blocks = [blocks[0]]
        for block in blocks[1:]:
            if len(block.txs) != 1:
                raise ChainIntegrityError(f"block {block.number} must hold one transaction", block_number=block.number)
            chain._replay(block)
        return chain

    @classmethod
    def load(cls, path: Union[str, Path], clock: Optional[Clock] = None) -> "Chain":
        return cls.loads(Path(path).read_text(encoding="utf-8"), clock)

    def _replay(self, block: Block) -> None:
        tx = block.txs[0]
        ok, events = self._execute(tx, tx_digest(tx), block.number)
        if (ok,) != block.success or events != block.events:
            raise ChainIntegrityError(f"block {block.number} outcome does not replay", block_number=block.number)
        self.blocks.append(block)
        self._tx_count += 1

    # -- execution --------------------------------------------------------

    def _execute(self, tx: dict, digest: bytes, number: int) -> Tuple[bool, Tuple[LedgerEvent, ...]]:
        kind = tx.get("type")
        if kind == "deploy":
            contract = _contract_from_tx(tx)
            self.contracts[contract.address] = contract
            return True, ()
        if kind == "call":
            contract = self.contracts.get(tx.get("to", ""))
            if contract is None:
                return False, ()
            try:
                statement = ProofStatement.from_dict(tx["statement"])
                proof = Proof.from_dict(tx["proof"])
            except (KeyError, TypeError, ValueError):
                return False, ()
            ok = statement.measurement == contract.expected_measurement and verify_proof(
                contract.backend_id, statement, proof, contract.trusted_roots
            )
            if not ok:
                return False, ()
            event = LedgerEvent(contract.address, EVENT_NAME, statement.credential_digest,
                                statement_digest(statement), statement.outcome, digest, number)
            return True, (event,)
        return False, ()

    def resolve(self, ref: EventRef) -> Optional[LedgerEvent]:
        """The unique event ``ref`` points at, or None."""
        if not 0 < ref.block_number < len(self.blocks):
            return None
        hits = [e for e in self.blocks[ref.block_number].events
                if e.tx_digest == ref.tx_digest and e.credential_digest == ref.credential_digest]
        return hits[0] if len(hits) == 1 else None

    def events(self) -> Iterable[LedgerEvent]:
        for b in list(self.blocks):
            yield from b.events


def _contract_from_tx(tx: dict) -> VerifierContract:
    address = tx_digest(tx)[:20].hex()
    return VerifierContract(
        address,
        tx["backend_id"],
        tuple(digest_from_hex(r) for r in tx["trusted_roots"]),
        digest_from_hex(tx["expected_measurement"]),
    )


def new_chain(genesis_timestamp: int, clock: Optional[Clock] = None) -> Chain:
    return Chain(genesis_timestamp, clock)


def deploy_verifier(chain: Chain, backend_id: str, trusted_roots: Sequence[bytes],
                    expected_measurement: bytes) -> VerifierContract:
    """Deploy a verifier for ``backend_id``. The address is the first 20 bytes of the deploy tx digest."""
    get_backend(backend_id)
    with chain._lock:
        tx = {
            "type": "deploy",
            "backend_id": backend_id,
            "trusted_roots": [r.hex() for r in trusted_roots],
            "expected_measurement": expected_measurement.hex(),
            "tx_index": chain._tx_count,
        }
        chain._append(tx, lambda d, n: chain._execute(tx, d, n))
        return _contract_from_tx(tx)


def submit_proof_tx(chain: Chain, contract: VerifierContract, statement: ProofStatement, proof: Proof) -> TxReceipt:
    if chain.contracts.get(contract.address) != contract:
        raise UnknownContract(f"contract {contract.address} is not deployed on this chain")
    with chain._lock:
        tx = {
            "type": "call",
            "to": contract.address,
            "method": "verifyProof",
            "statement": statement.to_dict(),
            "proof": proof.to_dict(),
            "tx_index": chain._tx_count,
        }
        return chain._append(tx, lambda d, n: chain._execute(tx, d, n))


def get_events(chain: Chain, contract: Optional[str] = None, credential_digest: Optional[bytes] = None,
               from_block: int = 0) -> List[LedgerEvent]:
    return [
        e for e in chain.events()
        if e.block_number >= from_block
        and (contract is None or e.contract == contract)
        and (credential_digest is None or e.credential_digest == credential_digest)
    ]


class Index:
    """Credential digest -> event references.

    ``Index.rebuild(chain)`` is the holder's own index, derived from chain
    data alone. ``Index.subscribe(chain)`` models an RPC provider that
    listens for events as they are appended; using it means trusting that
    provider to stay available and honest.
    """

    def __init__(self) -> None:
        self._refs: Dict[bytes, List[EventRef]] = {}
        self._events: Dict[EventRef, LedgerEvent] = {}
        self._lock = threading.Lock()

    def add(self, event: LedgerEvent) -> None:
        ref = EventRef.of(event)
        with self._lock:
            if ref in self._events:
                return
            self._events[ref] = event
            self._refs.setdefault(event.credential_digest, []).append(ref)

    def lookup(self, credential_digest: bytes) -> List[EventRef]:
        with self._lock:
            return list(self._refs.get(credential_digest, ()))

    def resolve(self, ref: EventRef) -> Optional[LedgerEvent]:
        return self._events.get(ref)

    def __len__(self) -> int:
        return len(self._events)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Index):
            return NotImplemented
        return self._refs == other._refs and self._events == other._events

    def to_dict(self) -> dict:
        return {d.hex(): [r.to_dict() for r in refs] for d, refs in sorted(self._refs.items())}

    @classmethod
    def rebuild(cls, chain: Chain) -> "Index":
        idx = cls()
        for ev in chain.events():
            idx.add(ev)
        return idx

    @classmethod
    def subscribe(cls, chain: Chain) -> "Index":
        with chain._lock:
            idx = cls.rebuild(chain)
            chain.subscribe(idx.add)
        return idx


def rebuild_index(chain: Chain) -> Index:
    return Index.rebuild(chain)


def lookup(index: Index, credential_digest: bytes) -> List[EventRef]:
    return index.lookup(credential_digest)
