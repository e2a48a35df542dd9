"""Hash-chained blocks sealed by a round-robin set of authorities."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from decimal import Decimal

from ..crypto import AccountId, sha256
from ..encoding import encode, from_jsonable, to_jsonable
from ..errors import LedgerError, WrongAuthority
from ..metering import DEFAULT_DISPUTE_TOLERANCE
from ..transactions import Identity, Transaction, TxKind
from .contracts import Genesis, Settlement
from .state import LedgerState, Receipt

log = logging.getLogger(__name__)

ZERO_HASH = bytes(32)


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    txs: tuple[Transaction, ...]
    miner: AccountId
    timestamp: int
    hash: bytes = b""
    seal: bytes = b""

    def header_bytes(self) -> bytes:
        return encode(self, omit={"hash", "seal"})

    def compute_hash(self) -> bytes:
        return sha256(self.header_bytes())

    def to_json_line(self) -> str:
        return json.dumps(to_jsonable(self), sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_json_line(cls, line: str) -> Block:
        return from_jsonable(cls, json.loads(line))


@dataclass(frozen=True)
class Rejection:
    tx: Transaction
    error: LedgerError

    def __str__(self):
        return f"{self.tx.kind.value} {self.tx.tx_id}: {type(self.error).__name__}: {self.error}"


@dataclass
class AppendResult:
    block: Block
    receipts: list[Receipt] = field(default_factory=list)
    rejected: list[Rejection] = field(default_factory=list)
    expired: list[Settlement] = field(default_factory=list)


@dataclass(frozen=True)
class ChainReport:
    ok: bool
    height: int | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "chain ok" if self.ok else f"invalid at height {self.height}: {self.reason}"


class Ledger:
    """The chain plus the state obtained by applying it.

    All mutation goes through :meth:`append_block`.
    """

    def __init__(self):
        self.blocks: list[Block] = []
        self.state = LedgerState()
        self._digests: list[bytes] = []

    # -- construction ---------------------------------------------------------

    @classmethod
    def create(cls, state_account: Identity, authorities: list[Identity], *,
               chain_id: str = "utilex", tolerance=DEFAULT_DISPUTE_TOLERANCE) -> Ledger:
        g = Genesis(chain_id, state_account.account, tuple(a.account for a in authorities),
                    Decimal(tolerance).quantize(Decimal("0.001")))
        ledger = cls()
        ledger.append_block([state_account.tx(TxKind.GENESIS, g)], authorities[0], 0)
        return ledger

    @classmethod
    def from_blocks(cls, blocks: list[Block]) -> Ledger:
        report = verify_blocks(blocks)
        if not report:
            raise LedgerError(str(report))
        ledger = cls()
        for b in blocks:
            ledger._replay(b)
        return ledger

    @classmethod
    def from_jsonl(cls, text: str) -> Ledger:
        return cls.from_blocks(load_blocks(text))

    # -- reads ----------------------------------------------------------------

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def authorities(self) -> tuple[AccountId, ...]:
        return self.state.genesis.authorities

    def scheduled_authority(self, height: int) -> AccountId:
        return schedule(self.authorities, height)

    def query_ratings(self, supplier: AccountId):
        return self.state.query_ratings(supplier)

    def export_jsonl(self) -> str:
        return "".join(b.to_json_line() + "\n" for b in self.blocks)

    # -- writes ---------------------------------------------------------------

    def append_block(self, pending_txs, miner: Identity, now: int) -> AppendResult:
        """Validate ``pending_txs`` one by one and seal the valid ones.

        Invalid transactions are excluded and returned in ``rejected``;
        contracts past their deadline are expired after the transactions.
        """
        height = len(self.blocks)
        if height > 0:
            expected = self.scheduled_authority(height)
            if miner.account != expected:
                raise WrongAuthority(f"height {height} belongs to {expected.hex[:8]}, not {miner.account.hex[:8]}")
            if now < self.tip.timestamp:
                raise LedgerError(f"timestamp {now} precedes tip {self.tip.timestamp}")
        prev = self.tip.hash if self.blocks else ZERO_HASH
        result_receipts, rejected, accepted = [], [], []
        for tx in pending_txs:
            try:
                result_receipts.append(self.state.apply(tx, now, height))
                accepted.append(tx)
            except LedgerError as exc:
                rejected.append(Rejection(tx, exc))
                log.info("rejected at height %d: %s", height, rejected[-1])
        if height == 0:
            if self.state.genesis is None:
                raise LedgerError("block 0 must carry a valid genesis transaction")
            if miner.account != self.scheduled_authority(0):
                raise WrongAuthority("genesis must be sealed by the first authority")
        expired = self.state.sweep(now, height)
        block = Block(height, prev, tuple(accepted), miner.account, now)
        h = block.compute_hash()
        block = Block(height, prev, tuple(accepted), miner.account, now, h, miner.sign(h))
        self.blocks.append(block)
        self._digests.append(self.state.digest())
        return AppendResult(block, result_receipts, rejected, expired)

    def _replay(self, block: Block) -> None:
        for tx in block.txs:
            self.state.apply(tx, block.timestamp, block.height)
        self.state.sweep(block.timestamp, block.height)
        self.blocks.append(block)
        self._digests.append(self.state.digest())


def schedule(authorities, height: int) -> AccountId:
    return authorities[height % len(authorities)]


def verify_blocks(blocks: list[Block], digests: list[bytes] | None = None) -> ChainReport:
    """Check links, hashes, seals, the authority schedule, and replay every tx.

    With ``digests`` (state digest after each block), also confirm the
    replayed state matches block by block.
    """
    if not blocks:
        return ChainReport(False, 0, "empty chain")
    state = LedgerState()
    prev_hash, prev_ts = ZERO_HASH, None
    for i, b in enumerate(blocks):
        def bad(reason):
            return ChainReport(False, i, reason)

        try:
            if b.height != i:
                return bad(f"height field is {b.height}")
            if b.prev_hash != prev_hash:
                return bad("prev_hash does not link")
            if b.compute_hash() != b.hash:
                return bad("hash does not match contents")
            if not b.miner.is_valid() or not b.miner.verify(b.seal, b.hash):
                return bad("bad authority seal")
            if prev_ts is not None and b.timestamp < prev_ts:
                return bad("timestamp goes backwards")
            if i == 0 and (len(b.txs) < 1 or b.txs[0].kind != TxKind.GENESIS):
                return bad("block 0 must start with genesis")
            for tx in b.txs:
                state.apply(tx, b.timestamp, b.height)
            if b.miner != schedule(state.genesis.authorities, i):
                return bad("sealed out of turn")
            state.sweep(b.timestamp, b.height)
        except LedgerError as exc:
            return bad(f"replay: {type(exc).__name__}: {exc}")
        except (ValueError, TypeError, AttributeError, KeyError) as exc:
            return bad(f"malformed block: {exc}")
        if digests is not None and (i >= len(digests) or state.digest() != digests[i]):
            return bad("replayed state differs from recorded state")
        prev_hash, prev_ts = b.hash, b.timestamp
    return ChainReport(True)


def verify_chain(ledger: Ledger) -> ChainReport:
    report = verify_blocks(ledger.blocks, ledger._digests)
    if report and ledger.state.digest() != ledger._digests[-1]:
        return ChainReport(False, ledger.height, "live state differs from replayed state")
    return report


def load_blocks(text: str) -> list[Block]:
    """Parse a JSON-lines export.  Raises ``ValueError`` on malformed input."""
    blocks = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            blocks.append(Block.from_json_line(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {n}: {exc}") from exc
    if not blocks:
        raise ValueError("no blocks")
    return blocks


def verify_export(text: str) -> ChainReport:
    """Verify a JSON-lines export byte for byte.

    Every line must be the canonical serialisation of the block it parses
    to, so edits that decode to the same values (hex letter case, key order,
    spacing) are reported too.  Raises ``ValueError`` when the text does not
    parse at all.
    """
    blocks = load_blocks(text)
    lines = [ln for ln in text.splitlines() if ln.strip()]
    for i, (b, line) in enumerate(zip(blocks, lines)):
        if b.to_json_line() != line:
            return ChainReport(False, i, "line is not in canonical form")
    return verify_blocks(blocks)
