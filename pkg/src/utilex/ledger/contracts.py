"""Contract, rating and configuration records stored on the ledger."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from decimal import Decimal

from ..crypto import AccountId
from ..encoding import encode
from ..errors import IllegalTransition
from ..metering import DEFAULT_DISPUTE_TOLERANCE, DeliveryProof
from ..transactions import TxKind, payload_type


class ContractState(str, enum.Enum):
    PROPOSED = "Proposed"
    ACTIVE = "Active"
    FULFILLED = "Fulfilled"
    REVOKED = "Revoked"
    EXPIRED = "Expired"


TRANSITIONS: dict[ContractState, frozenset[ContractState]] = {
    ContractState.PROPOSED: frozenset({ContractState.ACTIVE}),
    ContractState.ACTIVE: frozenset({ContractState.FULFILLED, ContractState.REVOKED, ContractState.EXPIRED}),
    ContractState.FULFILLED: frozenset(),
    ContractState.REVOKED: frozenset(),
    ContractState.EXPIRED: frozenset(),
}
TERMINAL = frozenset({ContractState.FULFILLED, ContractState.REVOKED, ContractState.EXPIRED})
RATEABLE = frozenset({ContractState.FULFILLED, ContractState.REVOKED})


def check_transition(src: ContractState, dst: ContractState) -> None:
    if dst not in TRANSITIONS[src]:
        raise IllegalTransition(f"{src.value} -> {dst.value}")


@dataclass(frozen=True)
class ContractTerms:
    """What both parties sign during negotiation."""

    trade_ref: str
    offer_id: str
    buyer: AccountId
    supplier: AccountId
    utility: str
    quantity: Decimal
    unit_price: Decimal
    deadline: int

    def signing_bytes(self) -> bytes:
        return encode(self)


@dataclass
class SmartContract:
    contract_id: str
    buyer: AccountId
    supplier: AccountId
    utility: str
    quantity: Decimal
    unit_price: Decimal
    escrow: Decimal
    deadline: int
    state: ContractState = ContractState.PROPOSED
    delivered: Decimal = Decimal("0.000")
    offer_id: str = ""
    trade_ref: str = ""
    created_at: int = 0
    revoked_by: AccountId | None = None
    payout: Decimal = Decimal("0.000")
    refund: Decimal = Decimal("0.000")

    def move_to(self, dst: ContractState) -> None:
        check_transition(self.state, dst)
        self.state = dst

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL

    def parties(self) -> tuple[AccountId, AccountId]:
        return (self.buyer, self.supplier)

    def snapshot(self) -> SmartContract:
        return replace(self)


@dataclass(frozen=True)
class Settlement:
    """Outcome of closing an escrow.

    ``entries`` lists the credit movements as (kind, amount) pairs using
    the ledger-emitted Escrow/Release/Refund kinds.
    """

    contract_id: str
    state: ContractState
    delivered: Decimal
    payout: Decimal
    refund: Decimal
    revoker: AccountId | None = None

    @property
    def entries(self) -> tuple[tuple[TxKind, Decimal], ...]:
        return ((TxKind.RELEASE, self.payout), (TxKind.REFUND, self.refund))


# -- payloads -------------------------------------------------------------------

@payload_type(TxKind.GENESIS)
@dataclass(frozen=True)
class Genesis:
    chain_id: str
    mint_authority: AccountId
    authorities: tuple[AccountId, ...]
    dispute_tolerance: Decimal = DEFAULT_DISPUTE_TOLERANCE


@payload_type(TxKind.CONTRACT_CREATE)
@dataclass(frozen=True)
class ContractCreate:
    terms: ContractTerms
    buyer_sig: bytes
    supplier_sig: bytes


@payload_type(TxKind.CONTRACT_FULFILL)
@dataclass(frozen=True)
class ContractFulfill:
    contract_id: str
    proof: DeliveryProof


@payload_type(TxKind.CONTRACT_REVOKE)
@dataclass(frozen=True)
class ContractRevoke:
    contract_id: str
    proof: DeliveryProof | None = None


@payload_type(TxKind.RATING_STORE)
@dataclass(frozen=True)
class ServiceRating:
    contract_id: str
    rater: AccountId
    supplier: AccountId
    score: int


@dataclass(frozen=True)
class SettlementEntry:
    contract_id: str
    amount: Decimal


for _kind in (TxKind.ESCROW, TxKind.RELEASE, TxKind.REFUND):
    payload_type(_kind)(SettlementEntry)
