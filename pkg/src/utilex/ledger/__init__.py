"""Permissioned ledger: contracts, credit movements and service ratings."""

from __future__ import annotations

from ..crypto import AccountId
from ..currency import credits, mint
from ..metering import DEFAULT_DISPUTE_TOLERANCE, DeliveryProof, Meter, units
from ..transactions import Identity, Transaction, TxKind
from .chain import (
    AppendResult,
    Block,
    ChainReport,
    Ledger,
    Rejection,
    load_blocks,
    schedule,
    verify_blocks,
    verify_chain,
    verify_export,
)
from .contracts import (
    RATEABLE,
    TERMINAL,
    TRANSITIONS,
    ContractCreate,
    ContractFulfill,
    ContractRevoke,
    ContractState,
    ContractTerms,
    Genesis,
    ServiceRating,
    Settlement,
    SmartContract,
    check_transition,
)
from .state import HistoryEntry, LedgerState, RatingsView, Receipt

__all__ = [
    "AppendResult", "Block", "ChainReport", "ContractCreate", "ContractFulfill",
    "ContractRevoke", "ContractState", "ContractTerms", "Devnet", "Genesis",
    "HistoryEntry", "Ledger", "LedgerState", "RATEABLE", "RatingsView", "Receipt",
    "Rejection", "ServiceRating", "Settlement", "SmartContract", "TERMINAL",
    "TRANSITIONS", "check_transition", "create_contract", "fulfill_contract",
    "load_blocks", "revoke_contract", "schedule", "sign_terms", "store_rating",
    "verify_blocks", "verify_chain", "verify_export",
]


def sign_terms(terms: ContractTerms, party: Identity) -> bytes:
    return party.sign(terms.signing_bytes())


def create_contract(submitter: Identity, buyer: Identity, supplier: Identity, utility: str,
                    quantity, unit_price, deadline: int, *, offer_id: str = "",
                    trade_ref: str = "") -> Transaction:
    """ContractCreate transaction with both parties' signatures over the terms."""
    terms = ContractTerms(trade_ref, offer_id, buyer.account, supplier.account, utility,
                          units(quantity), credits(unit_price), deadline)
    payload = ContractCreate(terms, sign_terms(terms, buyer), sign_terms(terms, supplier))
    return submitter.tx(TxKind.CONTRACT_CREATE, payload)


def fulfill_contract(signer: Identity, contract_id: str, proof: DeliveryProof) -> Transaction:
    return signer.tx(TxKind.CONTRACT_FULFILL, ContractFulfill(contract_id, proof))


def revoke_contract(revoker: Identity, contract_id: str,
                    partial_proof: DeliveryProof | None = None) -> Transaction:
    return revoker.tx(TxKind.CONTRACT_REVOKE, ContractRevoke(contract_id, partial_proof))


def store_rating(buyer: Identity, contract: SmartContract, score: int) -> Transaction:
    rating = ServiceRating(contract.contract_id, buyer.account, contract.supplier, score)
    return buyer.tx(TxKind.RATING_STORE, rating)


class Devnet:
    """A ledger with its state account and authority keys, for driving blocks.

    ``commit`` picks the scheduled authority automatically.
    """

    def __init__(self, seed: str = "devnet", n_authorities: int = 2,
                 tolerance=DEFAULT_DISPUTE_TOLERANCE):
        self.state_account = Identity.from_seed("state", seed)
        self.authorities = [Identity.from_seed(f"authority-{i}", seed) for i in range(n_authorities)]
        self.now = 0
        self.ledger = Ledger.create(self.state_account, self.authorities, tolerance=tolerance)

    @property
    def state(self) -> LedgerState:
        return self.ledger.state

    def miner(self, height: int | None = None) -> Identity:
        h = len(self.ledger.blocks) if height is None else height
        want = self.ledger.scheduled_authority(h)
        return next(a for a in self.authorities if a.account == want)

    def commit(self, *txs: Transaction, now: int | None = None) -> AppendResult:
        if now is not None:
            self.now = now
        return self.ledger.append_block(list(txs), self.miner(), self.now)

    def register_meter(self, meter: Meter, now: int | None = None) -> AppendResult:
        return self.commit(self.state_account.tx(TxKind.METER_REGISTER, meter.registration()), now=now)

    def fund(self, account: AccountId, amount, now: int | None = None) -> AppendResult:
        return self.commit(mint(self.state_account, account, amount), now=now)
