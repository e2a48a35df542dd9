"""Ledger state and the rules for applying each transaction kind."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

from ..crypto import AccountId, sha256
from ..currency import Book, MintAuthority, Mint, Transfer
from ..encoding import encode, fmt, mul_milli
from ..errors import (
    BadProof,
    BadSignature,
    BadTransaction,
    ContractNotActive,
    ContractNotTerminal,
    DeadlineInPast,
    DeadlinePassed,
    DuplicateRating,
    InvalidQuantity,
    InvalidRating,
    NonPositiveAmount,
    NotAParty,
    NotBuyer,
    NotMintAuthority,
    ReplayedSequence,
    UnknownContract,
)
from ..metering import DeliveryProof, MeterRegistration, MeterRegistry, proof_problems
from ..transactions import LEDGER_EMITTED, Transaction, TxKind
from .contracts import (
    RATEABLE,
    ContractCreate,
    ContractFulfill,
    ContractRevoke,
    ContractState,
    Genesis,
    ServiceRating,
    Settlement,
    SmartContract,
    check_transition,
)


@dataclass(frozen=True)
class Receipt:
    tx_id: str
    kind: TxKind
    signer: AccountId
    contract: SmartContract | None = None
    settlement: Settlement | None = None


@dataclass(frozen=True)
class RatingsView:
    ratings: tuple[ServiceRating, ...]
    revocations: int

    @property
    def scores(self) -> list[int]:
        return [r.score for r in self.ratings]


@dataclass(frozen=True)
class HistoryEntry:
    height: int
    tick: int
    event: str
    state: ContractState
    delivered: Decimal
    payout: Decimal
    refund: Decimal


class LedgerState:
    """Wallets, contracts, ratings, revocation marks and the meter registry.

    Only :meth:`apply` and :meth:`sweep` mutate; each validates completely
    before changing anything, so a rejected transaction leaves no trace.
    """

    def __init__(self):
        self.genesis: Genesis | None = None
        self.book = Book()
        self.contracts: dict[str, SmartContract] = {}
        self.ratings: dict[str, ServiceRating] = {}
        self.revocations: dict[bytes, int] = {}
        self.meters = MeterRegistry()
        self.seqs: dict[bytes, int] = {}
        self.history: dict[str, list[HistoryEntry]] = {}

    # -- reads ----------------------------------------------------------------

    @property
    def tolerance(self) -> Decimal:
        return self.genesis.dispute_tolerance

    def contract(self, contract_id: str) -> SmartContract:
        try:
            return self.contracts[contract_id]
        except KeyError:
            raise UnknownContract(contract_id) from None

    def wallet(self, account: AccountId):
        return self.book.peek(account)

    def query_ratings(self, supplier: AccountId) -> RatingsView:
        rs = tuple(r for r in self.ratings.values() if r.supplier == supplier)
        return RatingsView(rs, self.revocations.get(supplier.id, 0))

    def active_contracts(self) -> list[SmartContract]:
        return [c for c in self.contracts.values() if c.state == ContractState.ACTIVE]

    def digest(self) -> bytes:
        """Hash of the complete state, for replay comparisons."""
        wallets = sorted(
            (w.owner.id, w.free, sorted(w.escrowed.items())) for w in self.book.wallets.values()
        )
        snapshot = (
            self.genesis,
            wallets,
            self.book.total_minted,
            [self.contracts[k] for k in sorted(self.contracts)],
            [self.ratings[k] for k in sorted(self.ratings)],
            sorted(self.revocations.items()),
            [self.meters.meters[k] for k in sorted(self.meters.meters)],
            sorted(self.meters.seen),
            sorted(self.seqs.items()),
            [(k, self.history[k]) for k in sorted(self.history)],
        )
        return sha256(encode(snapshot))

    # -- writes ---------------------------------------------------------------

    def apply(self, tx: Transaction, now: int, height: int) -> Receipt:
        if tx.kind in LEDGER_EMITTED:
            raise BadTransaction(f"{tx.kind.value} entries are emitted by the ledger, not submitted")
        if not tx.signature_ok():
            raise BadSignature(f"tx {tx.tx_id} signature does not verify")
        last = self.seqs.get(tx.signer.id, 0)
        if tx.seq <= last:
            raise ReplayedSequence(f"seq {tx.seq} <= {last} for {tx.signer.hex[:8]}")
        if tx.kind == TxKind.GENESIS:
            receipt = self._genesis(tx, height)
        else:
            if self.genesis is None:
                raise BadTransaction("chain has no genesis")
            handler = self._HANDLERS.get(tx.kind)
            if handler is None:
                raise BadTransaction(f"unknown kind {tx.kind}")
            receipt = handler(self, tx, now, height)
        self.seqs[tx.signer.id] = tx.seq
        return receipt

    def _expect(self, tx: Transaction, ptype: type):
        if not isinstance(tx.payload, ptype):
            raise BadTransaction(f"{tx.kind.value} needs a {ptype.__name__} payload")
        return tx.payload

    def _genesis(self, tx: Transaction, height: int) -> Receipt:
        g = self._expect(tx, Genesis)
        if height != 0 or self.genesis is not None:
            raise BadTransaction("genesis only at height 0")
        if tx.signer != g.mint_authority:
            raise BadSignature("genesis must be signed by the mint authority")
        if not g.authorities or not all(a.is_valid() for a in g.authorities):
            raise BadTransaction("genesis needs a non-empty set of valid authorities")
        if not Decimal(0) <= g.dispute_tolerance < 1:
            raise BadTransaction("dispute tolerance must be in [0, 1)")
        self.genesis = g
        self.book.authority = MintAuthority(g.mint_authority)
        return Receipt(tx.tx_id, tx.kind, tx.signer)

    def _meter_register(self, tx, now, height) -> Receipt:
        reg = self._expect(tx, MeterRegistration)
        if tx.signer != self.genesis.mint_authority:
            raise NotMintAuthority("only the state account registers meters")
        if not reg.owner.is_valid():
            raise BadTransaction("meter owner account is malformed")
        self.meters.register(reg)
        return Receipt(tx.tx_id, tx.kind, tx.signer)

    def _mint(self, tx, now, height) -> Receipt:
        m = self._expect(tx, Mint)
        if not m.to.is_valid():
            raise BadTransaction("malformed recipient account")
        self.book.apply_mint(tx.signer, m)
        return Receipt(tx.tx_id, tx.kind, tx.signer)

    def _transfer(self, tx, now, height) -> Receipt:
        t = self._expect(tx, Transfer)
        if not t.to.is_valid():
            raise BadTransaction("malformed recipient account")
        self.book.apply_transfer(tx.signer, t)
        return Receipt(tx.tx_id, tx.kind, tx.signer)

    def _create(self, tx, now, height) -> Receipt:
        p = self._expect(tx, ContractCreate)
        t = p.terms
        if not (t.buyer.is_valid() and t.supplier.is_valid()):
            raise BadTransaction("malformed party account")
        if t.buyer == t.supplier:
            raise BadTransaction("buyer and supplier must differ")
        if not t.buyer.verify(p.buyer_sig, t.signing_bytes()):
            raise BadSignature("buyer did not sign these terms")
        if not t.supplier.verify(p.supplier_sig, t.signing_bytes()):
            raise BadSignature("supplier did not sign these terms")
        if t.quantity <= 0:
            raise InvalidQuantity(f"quantity {fmt(t.quantity)}")
        if t.unit_price <= 0:
            raise NonPositiveAmount(f"unit price {fmt(t.unit_price)}")
        if t.deadline <= now:
            raise DeadlineInPast(f"deadline {t.deadline} <= now {now}")
        cid = tx.tx_id
        escrow = mul_milli(t.quantity, t.unit_price)
        self.book.escrow(t.buyer, cid, escrow)
        c = SmartContract(
            contract_id=cid, buyer=t.buyer, supplier=t.supplier, utility=t.utility,
            quantity=t.quantity, unit_price=t.unit_price, escrow=escrow, deadline=t.deadline,
            offer_id=t.offer_id, trade_ref=t.trade_ref, created_at=now,
        )
        c.move_to(ContractState.ACTIVE)
        self.contracts[cid] = c
        self._record(c, height, now, "create")
        return Receipt(tx.tx_id, tx.kind, tx.signer, contract=c.snapshot())

    def _check_proof(self, c: SmartContract, proof: DeliveryProof, allow_dispute: bool) -> None:
        bad = proof_problems(proof, c, self.meters, self.tolerance)
        if proof.disputed and not allow_dispute:
            bad.append("readings are disputed")
        if proof.quantity > c.quantity:
            bad.append(f"proof quantity {fmt(proof.quantity)} exceeds contract {fmt(c.quantity)}")
        if bad:
            raise BadProof("; ".join(bad))

    def _live(self, contract_id: str, now: int) -> SmartContract:
        c = self.contract(contract_id)
        if c.state != ContractState.ACTIVE:
            raise ContractNotActive(f"contract {contract_id} is {c.state.value}")
        if now > c.deadline:
            raise DeadlinePassed(f"contract {contract_id} deadline {c.deadline} < now {now}")
        return c

    def _fulfill(self, tx, now, height) -> Receipt:
        p = self._expect(tx, ContractFulfill)
        c = self._live(p.contract_id, now)
        if tx.signer not in c.parties():
            raise NotAParty(f"{tx.signer.hex[:8]} is not a party to {c.contract_id}")
        self._check_proof(c, p.proof, allow_dispute=False)
        s = self._settle(c, p.proof.quantity, ContractState.FULFILLED, height, now, "fulfill")
        self.meters.consume(p.proof.supplier_reading, p.proof.consumer_reading)
        return Receipt(tx.tx_id, tx.kind, tx.signer, contract=c.snapshot(), settlement=s)

    def _revoke(self, tx, now, height) -> Receipt:
        p = self._expect(tx, ContractRevoke)
        c = self._live(p.contract_id, now)
        if tx.signer not in c.parties():
            raise NotAParty(f"{tx.signer.hex[:8]} is not a party to {c.contract_id}")
        delivered = Decimal("0.000")
        if p.proof is not None:
            self._check_proof(c, p.proof, allow_dispute=True)
            delivered = p.proof.quantity
        c.revoked_by = tx.signer
        s = self._settle(c, delivered, ContractState.REVOKED, height, now, "revoke", revoker=tx.signer)
        if p.proof is not None:
            self.meters.consume(p.proof.supplier_reading, p.proof.consumer_reading)
        self.revocations[tx.signer.id] = self.revocations.get(tx.signer.id, 0) + 1
        return Receipt(tx.tx_id, tx.kind, tx.signer, contract=c.snapshot(), settlement=s)

    def _rate(self, tx, now, height) -> Receipt:
        r = self._expect(tx, ServiceRating)
        c = self.contract(r.contract_id)
        if tx.signer != c.buyer or r.rater != c.buyer:
            raise NotBuyer(f"only the buyer of {c.contract_id} may rate it")
        if c.state not in RATEABLE:
            raise ContractNotTerminal(f"contract {c.contract_id} is {c.state.value}")
        if r.contract_id in self.ratings:
            raise DuplicateRating(r.contract_id)
        if r.supplier != c.supplier:
            raise BadTransaction("rating names the wrong supplier")
        if type(r.score) is not int or not 1 <= r.score <= 5:
            raise InvalidRating(f"score {r.score!r} not in 1..5")
        self.ratings[r.contract_id] = r
        return Receipt(tx.tx_id, tx.kind, tx.signer, contract=c.snapshot())

    _HANDLERS = {
        TxKind.METER_REGISTER: _meter_register,
        TxKind.MINT: _mint,
        TxKind.TRANSFER: _transfer,
        TxKind.CONTRACT_CREATE: _create,
        TxKind.CONTRACT_FULFILL: _fulfill,
        TxKind.CONTRACT_REVOKE: _revoke,
        TxKind.RATING_STORE: _rate,
    }

    def _settle(self, c: SmartContract, delivered: Decimal, dst: ContractState,
                height: int, now: int, event: str, revoker: AccountId | None = None) -> Settlement:
        payout = mul_milli(delivered, c.unit_price)
        check_transition(c.state, dst)
        refund = self.book.settle(c.buyer, c.supplier, c.contract_id, payout)
        c.state = dst
        c.delivered, c.payout, c.refund = delivered, payout, refund
        self._record(c, height, now, event)
        return Settlement(c.contract_id, dst, delivered, payout, refund, revoker)

    def sweep(self, now: int, height: int) -> list[Settlement]:
        """Expire every active contract whose deadline is before ``now``."""
        out = []
        for c in self.contracts.values():
            if c.state == ContractState.ACTIVE and c.deadline < now:
                out.append(self._settle(c, Decimal("0.000"), ContractState.EXPIRED, height, now, "expire"))
        return out

    def _record(self, c: SmartContract, height: int, now: int, event: str) -> None:
        self.history.setdefault(c.contract_id, []).append(
            HistoryEntry(height, now, event, c.state, c.delivered, c.payout, c.refund)
        )
