"""The utility node: one user's meters, stock, offers, purchases and ratings.

A node never touches another node's state.  It reads the ledger and the
market (read-only) and produces signed artefacts (offers, contract terms,
readings, proofs, transactions) that the simulated network carries.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from decimal import ROUND_FLOOR, Decimal
from typing import Callable

from .crypto import AccountId
from .currency import DEFAULT_LOW_CREDIT_THRESHOLD, LowCreditMonitor, Notification
from .encoding import MILLI, mul_milli, round_milli
from .errors import BadReading, ContractNotActive, UnknownPolicy
from .ledger import ContractState, ContractTerms, LedgerState, SmartContract
from .ledger import revoke_contract, fulfill_contract, sign_terms, store_rating
from .market import Offer, greedy_fill, make_offer
from .metering import (
    DeliveryProof,
    DeviceDriver,
    Direction,
    Meter,
    MeterReading,
    MeterRegistry,
    build_proof,
    read_driver,
    sign_reading,
)
from .pricing import PricingPolicy, quote
from .transactions import Identity, Transaction

log = logging.getLogger(__name__)

ZERO = Decimal("0.000")


# -- pluggable policies ------------------------------------------------------------

RatingPolicy = Callable[[SmartContract], int]
SelectionPolicy = Callable[[list[Offer], Decimal], list[tuple[Offer, Decimal]]]
AcceptancePolicy = Callable[[ContractTerms], bool]


def default_rating(c: SmartContract) -> int:
    """5 for full delivery, 3 for partial, 1 for nothing delivered."""
    if c.delivered >= c.quantity:
        return 5
    if c.delivered > 0:
        return 3
    return 1


def binary_rating(c: SmartContract) -> int:
    return 5 if c.delivered >= c.quantity else 1


def greedy_selection(ranked: list[Offer], need: Decimal) -> list[tuple[Offer, Decimal]]:
    """Take the market's ranking as final."""
    return greedy_fill(ranked, need)[0]


def reputation_first(ranked: list[Offer], need: Decimal) -> list[tuple[Offer, Decimal]]:
    """Prefer well-rated suppliers over cheap ones."""
    by_rep = sorted(ranked, key=lambda o: (-(o.reputation.value if o.reputation else 0.0), o.unit_price, o.offer_id))
    return greedy_fill(by_rep, need)[0]


RATING_POLICIES: dict[str, RatingPolicy] = {"default": default_rating, "binary": binary_rating}
SELECTION_POLICIES: dict[str, SelectionPolicy] = {"greedy": greedy_selection, "reputation": reputation_first}
ACCEPTANCE_POLICIES: dict[str, AcceptancePolicy] = {
    "always": lambda terms: True,
    "never": lambda terms: False,
}


def lookup(table: dict, kind: str, name: str):
    try:
        return table[name]
    except KeyError:
        raise UnknownPolicy(f"no {kind} policy named {name!r}") from None


# -- configuration -------------------------------------------------------------------

@dataclass
class MeterBinding:
    meter: Meter
    direction: Direction
    driver: DeviceDriver | None = None


@dataclass
class OfferPolicy:
    policy: PricingPolicy
    base_price: float
    target_stock: float = 0.0
    validity: int = 20


@dataclass(frozen=True)
class DemandEntry:
    tick: int
    utility: str
    quantity: Decimal


@dataclass
class NodeConfig:
    name: str
    identity: Identity
    meters: list[MeterBinding] = field(default_factory=list)
    demand_schedule: list[DemandEntry] = field(default_factory=list)
    offer_policies: dict[str, OfferPolicy] = field(default_factory=dict)
    reserve: dict[str, Decimal] = field(default_factory=dict)
    low_credit_threshold: Decimal = DEFAULT_LOW_CREDIT_THRESHOLD
    rating_policy: RatingPolicy = default_rating
    selection_policy: SelectionPolicy = greedy_selection
    acceptance_policy: AcceptancePolicy = ACCEPTANCE_POLICIES["always"]
    # physical behaviour, for scripted faults and partial deliveries
    delivery_ratio: float = 1.0
    meter_bias: float = 1.0

    @property
    def account(self) -> AccountId:
        return self.identity.account

    def validate(self) -> None:
        for d in self.demand_schedule:
            if d.quantity <= 0:
                raise ValueError(f"{self.name}: demand at tick {d.tick} must be positive")
        seen = set()
        for b in self.meters:
            if b.meter.meter_id in seen:
                raise ValueError(f"{self.name}: meter {b.meter.meter_id} bound twice")
            seen.add(b.meter.meter_id)


# -- plans ---------------------------------------------------------------------------

class UnmetReason(str, enum.Enum):
    NO_SUPPLY = "NoSupply"
    INSUFFICIENT_CREDITS = "InsufficientCredits"


@dataclass(frozen=True)
class UnmetDemand:
    reason: UnmetReason
    quantity: Decimal


@dataclass
class Selection:
    trade_ref: str
    offer: Offer
    terms: ContractTerms
    buyer_sig: bytes
    cost: Decimal


@dataclass
class FulfillmentPlan:
    demand_id: str
    utility: str
    requested: Decimal
    self_supplied: Decimal = ZERO
    selections: list[Selection] = field(default_factory=list)
    contracts: list[str] = field(default_factory=list)
    unmet: list[UnmetDemand] = field(default_factory=list)

    @property
    def market_need(self) -> Decimal:
        return self.requested - self.self_supplied

    @property
    def unmet_total(self) -> Decimal:
        return sum((u.quantity for u in self.unmet), ZERO)

    def add_unmet(self, reason: UnmetReason, qty: Decimal) -> None:
        if qty > 0:
            self.unmet.append(UnmetDemand(reason, qty))


# -- the node --------------------------------------------------------------------------

class Node:
    def __init__(self, config: NodeConfig, ledger: LedgerState, *, contract_window: int = 10):
        config.validate()
        self.config = config
        self.name = config.name
        self.identity = config.identity
        self.ledger = ledger
        self.contract_window = contract_window
        self.stock: dict[str, Decimal] = {}
        self.reserved: dict[str, Decimal] = {}
        self.listed: dict[str, tuple[str, Decimal, int]] = {}  # offer_id -> (utility, qty, valid_until)
        self.committed = ZERO  # credits promised in selections not yet escrowed
        self.monitor = LowCreditMonitor(config.low_credit_threshold)
        self._seen_production: set[tuple[str, int]] = set()
        self._demand_count = 0
        self._trade_count = 0
        self.delivery_meters: dict[tuple[str, Direction], Meter] = {}
        for b in config.meters:
            if b.driver is None:
                self.delivery_meters.setdefault((b.meter.utility, b.direction), b.meter)

    @property
    def account(self) -> AccountId:
        return self.identity.account

    def free_credits(self) -> Decimal:
        return self.ledger.wallet(self.account).free

    def available(self, utility: str) -> Decimal:
        """Stock not already promised to a contract."""
        return self.stock.get(utility, ZERO) - self.reserved.get(utility, ZERO)

    # -- production and offers -------------------------------------------------------

    def poll_meters(self, tick: int) -> list[MeterReading]:
        out = []
        for b in self.config.meters:
            if b.driver is not None and b.direction == Direction.PRODUCED:
                r = read_driver(b.meter, b.driver, tick)
                if r is not None:
                    out.append(r)
        return out

    def on_production(self, reading: MeterReading, registry: MeterRegistry, now: int) -> Offer | None:
        """Bank a production reading and offer whatever exceeds the reserve."""
        problems = registry.problems(reading)
        if reading.owner != self.account:
            problems.append("reading belongs to another account")
        if reading.direction != Direction.PRODUCED:
            problems.append("not a production reading")
        if reading.key in self._seen_production:
            problems.append("reading already banked")
        if problems:
            raise BadReading(f"{reading.meter_id}#{reading.nonce}: {'; '.join(problems)}")
        self._seen_production.add(reading.key)
        u = reading.utility
        self.stock[u] = self.stock.get(u, ZERO) + reading.quantity
        self._expire_listed(now)
        policy = self.config.offer_policies.get(u)
        if policy is None:
            return None
        listed = sum((q for (lu, q, _) in self.listed.values() if lu == u), ZERO)
        surplus = self.available(u) - self.config.reserve.get(u, ZERO) - listed
        if surplus <= 0:
            return None
        price, record = quote(policy.policy, u, surplus, policy.target_stock, policy.base_price)
        offer = make_offer(self.identity, u, surplus, price, now, now + policy.validity, record)
        self.listed[offer.offer_id] = (u, surplus, offer.valid_until)
        return offer

    def _expire_listed(self, now: int) -> None:
        for oid in [k for k, (_, _, until) in self.listed.items() if until < now]:
            del self.listed[oid]

    def forget_offer(self, offer_id: str) -> None:
        self.listed.pop(offer_id, None)

    # -- demand ------------------------------------------------------------------------

    def satisfy_demand(self, utility: str, quantity: Decimal, now: int) -> FulfillmentPlan:
        """Serve demand from own stock first; the rest goes to the market."""
        if quantity <= 0:
            raise ValueError("demand must be positive")
        self._demand_count += 1
        plan = FulfillmentPlan(f"{self.name}#{self._demand_count}", utility, quantity)
        own = max(min(self.available(utility), quantity), ZERO)
        if own > 0:
            self.stock[utility] -= own
            plan.self_supplied = own
            self._trim_listed(utility)
        return plan

    def _trim_listed(self, utility: str) -> None:
        # own consumption may leave listed quantities unbacked; forget the newest first
        listed = [(k, v) for k, v in self.listed.items() if v[0] == utility]
        excess = sum((q for _, (_, q, _) in listed), ZERO) - max(self.available(utility), ZERO)
        for k, (u, q, until) in reversed(listed):
            if excess <= 0:
                break
            cut = min(q, excess)
            excess -= cut
            if cut == q:
                del self.listed[k]
            else:
                self.listed[k] = (u, q - cut, until)

    def select(self, plan: FulfillmentPlan, ranked: list[Offer], now: int) -> list[Selection]:
        """Choose offers for the unmet part of ``plan`` within the credit budget."""
        need = plan.market_need
        chosen = self.config.selection_policy(ranked, need)
        supply = sum((take for _, take in chosen), ZERO)
        plan.add_unmet(UnmetReason.NO_SUPPLY, need - supply)
        budget = self.free_credits() - self.committed
        out = []
        short = ZERO
        for offer, take in chosen:
            cost = mul_milli(take, offer.unit_price)
            if cost > budget:
                affordable = (max(budget, ZERO) / offer.unit_price).quantize(MILLI, rounding=ROUND_FLOOR)
                while affordable > 0 and mul_milli(affordable, offer.unit_price) > budget:
                    affordable -= MILLI
                short += take - affordable
                take = affordable
                cost = mul_milli(take, offer.unit_price)
            if take <= 0:
                continue
            budget -= cost
            self._trade_count += 1
            ref = f"{self.name}/{self._trade_count}"
            terms = ContractTerms(ref, offer.offer_id, self.account, offer.supplier, plan.utility,
                                  take, offer.unit_price, now + self.contract_window)
            out.append(Selection(ref, offer, terms, sign_terms(terms, self.identity), cost))
        plan.add_unmet(UnmetReason.INSUFFICIENT_CREDITS, short)
        self.committed += sum((s.cost for s in out), ZERO)
        plan.selections.extend(out)
        return out

    def release_commitment(self, cost: Decimal) -> None:
        self.committed = max(self.committed - cost, ZERO)

    # -- negotiation (supplier side) -----------------------------------------------------

    def consider(self, terms: ContractTerms) -> bytes | None:
        """Sign the proposed terms and reserve stock, or decline with ``None``."""
        if terms.supplier != self.account:
            return None
        if not self.config.acceptance_policy(terms):
            return None
        if self.available(terms.utility) < terms.quantity:
            return None
        self.reserved[terms.utility] = self.reserved.get(terms.utility, ZERO) + terms.quantity
        entry = self.listed.get(terms.offer_id)
        if entry is not None:
            u, q, until = entry
            if q - terms.quantity > 0:
                self.listed[terms.offer_id] = (u, q - terms.quantity, until)
            else:
                del self.listed[terms.offer_id]
        return sign_terms(terms, self.identity)

    def unreserve(self, utility: str, qty: Decimal) -> None:
        self.reserved[utility] = max(self.reserved.get(utility, ZERO) - qty, ZERO)

    # -- delivery ------------------------------------------------------------------------

    def _meter(self, utility: str, direction: Direction) -> Meter:
        m = self.delivery_meters.get((utility, direction))
        if m is None:
            raise KeyError(f"{self.name} has no {direction.value} meter for {utility}")
        return m

    def _require_active(self, contract_id: str) -> SmartContract:
        c = self.ledger.contract(contract_id)
        if c.state != ContractState.ACTIVE:
            raise ContractNotActive(f"contract {contract_id} is {c.state.value}")
        return c

    def push(self, contract_id: str, now: int) -> MeterReading | None:
        """Supplier side: physically send the utility and meter it.

        Returns ``None`` when nothing could be delivered.
        """
        c = self._require_active(contract_id)
        pushed = round_milli(Decimal(repr(self.config.delivery_ratio)) * c.quantity)
        pushed = min(max(pushed, ZERO), c.quantity, self.stock.get(c.utility, ZERO))
        self.unreserve(c.utility, c.quantity)
        if pushed <= 0:
            return None
        self.stock[c.utility] -= pushed
        return sign_reading(self._meter(c.utility, Direction.PRODUCED), Direction.PRODUCED, pushed, now)

    def receive(self, contract_id: str, arrived: Decimal, now: int) -> MeterReading:
        """Buyer side: take delivery and meter what arrived."""
        c = self.ledger.contract(contract_id)
        self.stock[c.utility] = self.stock.get(c.utility, ZERO) + arrived
        measured = round_milli(Decimal(repr(self.config.meter_bias)) * arrived)
        return sign_reading(self._meter(c.utility, Direction.CONSUMED), Direction.CONSUMED, measured, now)

    def consume(self, utility: str, qty: Decimal) -> None:
        self.stock[utility] = max(self.stock.get(utility, ZERO) - qty, ZERO)

    def prove(self, contract_id: str, supplier_reading: MeterReading, consumer_reading: MeterReading) -> DeliveryProof:
        c = self._require_active(contract_id)
        return build_proof(c, supplier_reading, consumer_reading, self.ledger.meters, self.ledger.tolerance)

    def fulfill_tx(self, contract_id: str, proof: DeliveryProof) -> Transaction:
        return fulfill_contract(self.identity, contract_id, proof)

    def revoke_tx(self, contract_id: str, proof: DeliveryProof | None = None) -> Transaction:
        return revoke_contract(self.identity, contract_id, proof)

    # -- rating --------------------------------------------------------------------------

    def rate(self, contract_id: str) -> Transaction:
        c = self.ledger.contract(contract_id)
        score = self.config.rating_policy(c)
        return store_rating(self.identity, c, score)

    def check_credit(self) -> Notification | None:
        return self.monitor.check(self.ledger.wallet(self.account))


def deliver(supplier: Node, buyer: Node, contract_id: str, now: int) -> DeliveryProof:
    """Run a whole physical delivery between two nodes and build the proof.

    Raises ``ContractNotActive`` for contracts that are not active,
    ``Disputed`` when the meters disagree, and ``ValueError`` when the
    supplier could not deliver anything.
    """
    supplier._require_active(contract_id)
    s = supplier.push(contract_id, now)
    if s is None:
        raise ValueError("supplier delivered nothing")
    c = buyer.receive(contract_id, s.quantity, now)
    return buyer.prove(contract_id, s, c)


__all__ = [
    "ACCEPTANCE_POLICIES", "DemandEntry", "FulfillmentPlan", "MeterBinding", "Node", "NodeConfig",
    "OfferPolicy", "RATING_POLICIES", "SELECTION_POLICIES", "Selection", "UnmetDemand", "UnmetReason",
    "binary_rating", "default_rating", "deliver", "greedy_selection", "lookup", "reputation_first",
]
