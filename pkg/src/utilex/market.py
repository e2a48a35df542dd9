"""The utility market: a directory of posted offers.

The market annotates each offer with the supplier's reputation (computed from
on-chain ratings and revocations), ranks offers for buyers, reserves
quantities during negotiation and drops expired offers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction
from typing import Callable, Iterable

from .crypto import AccountId, sha256
from .encoding import encode, fmt
from .errors import AlreadyExpired, BadOfferSignature, NonPositiveQuantity, OfferGone
from .pricing import PricingRecord
from .transactions import Identity

log = logging.getLogger(__name__)

NEUTRAL_REPUTATION = 2.5
REVOCATION_PENALTY = 0.5
MAX_REPUTATION = 5.0


@dataclass(frozen=True)
class ReputationIndex:
    value: float
    n_ratings: int
    n_revocations: int


def reputation_index(ratings: Iterable[int], revocations: int) -> ReputationIndex:
    """Mean rating minus 0.5 per revocation, clamped to [0, 5].

    Suppliers with no ratings start from the neutral 2.5.
    """
    scores = list(ratings)
    for s in scores:
        if not 1 <= s <= 5:
            raise ValueError(f"score {s} not in 1..5")
    if revocations < 0:
        raise ValueError("revocation count must be >= 0")
    base = sum(scores) / len(scores) if scores else NEUTRAL_REPUTATION
    value = min(max(base - REVOCATION_PENALTY * revocations, 0.0), MAX_REPUTATION)
    return ReputationIndex(value, len(scores), revocations)


@dataclass(frozen=True)
class Offer:
    """A posted sale.  The supplier signs every field except the market annotations."""

    offer_id: str
    supplier: AccountId
    utility: str
    quantity: Decimal
    unit_price: Decimal
    valid_from: int
    valid_until: int
    pricing: PricingRecord | None = None
    signature: bytes = field(default=b"", metadata={"encode": False})
    # set by the market, never by the supplier
    remaining: Decimal | None = field(default=None, metadata={"encode": False})
    reputation: ReputationIndex | None = field(default=None, metadata={"encode": False})
    submitted_at: int = field(default=-1, metadata={"encode": False})

    def signing_bytes(self) -> bytes:
        return encode(self)

    def signature_ok(self) -> bool:
        return self.supplier.is_valid() and self.supplier.verify(self.signature, self.signing_bytes())

    def sort_key(self):
        rep = self.reputation.value if self.reputation else NEUTRAL_REPUTATION
        return (self.unit_price, -rep, self.submitted_at, self.offer_id)

    def available(self) -> Decimal:
        return self.quantity if self.remaining is None else self.remaining


def make_offer(supplier: Identity, utility: str, quantity: Decimal, unit_price: Decimal,
               valid_from: int, valid_until: int, pricing: PricingRecord | None = None,
               *, nonce: int | None = None) -> Offer:
    """Build and sign an offer.  The id is derived from the supplier and a nonce."""
    if nonce is None:
        supplier.seq += 1
        nonce = supplier.seq
    offer_id = sha256(encode((supplier.account.id, nonce)))[:8].hex()
    unsigned = Offer(offer_id, supplier.account, utility, quantity, unit_price, valid_from, valid_until, pricing)
    return replace(unsigned, signature=supplier.sign(unsigned.signing_bytes()))


@dataclass
class MatchPlan:
    fills: list[tuple[Offer, Decimal]]
    unfilled: Decimal

    @property
    def filled(self) -> Decimal:
        return sum((take for _, take in self.fills), Decimal("0.000"))

    def cost(self) -> Fraction:
        return sum((Fraction(take) * Fraction(o.unit_price) for o, take in self.fills), Fraction(0))


def greedy_fill(ranked: Iterable[Offer], quantity_needed: Decimal) -> tuple[list[tuple[Offer, Decimal]], Decimal]:
    """Take from offers in the given order until the need is met."""
    need = quantity_needed
    fills = []
    for o in ranked:
        if need <= 0:
            break
        take = min(o.available(), need)
        if take > 0:
            fills.append((o, take))
            need -= take
    return fills, need


RatingsSource = Callable[[AccountId], object]


class Market:
    """One deterministic offer directory.

    ``ratings`` maps a supplier account to an object with ``scores`` and
    ``revocations`` (normally :meth:`LedgerState.query_ratings`).
    """

    def __init__(self, ratings: RatingsSource):
        self._ratings = ratings
        self.offers: dict[str, Offer] = {}
        self.submitted: list[Offer] = []
        self._known: set[str] = set()

    def annotate(self, supplier: AccountId) -> ReputationIndex:
        view = self._ratings(supplier)
        return reputation_index(view.scores, view.revocations)

    def submit_offer(self, offer: Offer, now: int) -> Offer:
        if not offer.signature_ok():
            raise BadOfferSignature(f"offer {offer.offer_id} signature does not verify")
        if offer.quantity <= 0:
            raise NonPositiveQuantity(f"offer {offer.offer_id} quantity {fmt(offer.quantity)}")
        if offer.valid_until < now or offer.valid_from > offer.valid_until:
            raise AlreadyExpired(f"offer {offer.offer_id} valid until {offer.valid_until}, now {now}")
        if offer.offer_id in self._known:
            raise BadOfferSignature(f"offer {offer.offer_id} already submitted")
        listed = replace(offer, remaining=offer.quantity, reputation=self.annotate(offer.supplier),
                         submitted_at=now)
        self._known.add(offer.offer_id)
        self.submitted.append(listed)
        self.offers[offer.offer_id] = listed
        log.debug("listed %s %s x%s @%s rep %.3f", offer.offer_id, offer.utility, fmt(offer.quantity),
                  fmt(offer.unit_price), listed.reputation.value)
        return listed

    def _live(self, o: Offer, now: int) -> bool:
        return o.valid_from <= now <= o.valid_until and o.available() > 0

    def query_offers(self, utility: str, quantity_needed: Decimal, now: int,
                     exclude: AccountId | None = None) -> list[Offer]:
        """Every live offer for ``utility``, best first.  Nothing is hidden."""
        if quantity_needed <= 0:
            raise ValueError("quantity_needed must be positive")
        live = [o for o in self.offers.values()
                if o.utility == utility and self._live(o, now) and o.supplier != exclude]
        return sorted(live, key=Offer.sort_key)

    def reserve(self, offer_id: str, take: Decimal, now: int) -> Offer:
        o = self.offers.get(offer_id)
        if o is None or not self._live(o, now) or o.available() < take:
            raise OfferGone(f"offer {offer_id} cannot supply {fmt(take)} at tick {now}")
        left = o.available() - take
        updated = replace(o, remaining=left)
        if left > 0:
            self.offers[offer_id] = updated
        else:
            del self.offers[offer_id]
        return updated

    def release(self, offer_id: str, take: Decimal, now: int) -> None:
        """Return an aborted reservation to the book if the offer is still valid."""
        original = next((o for o in self.submitted if o.offer_id == offer_id), None)
        if original is None or now > original.valid_until:
            return
        current = self.offers.get(offer_id)
        left = (current.available() if current else Decimal("0.000")) + take
        self.offers[offer_id] = replace(current or original, remaining=left)

    def match(self, utility: str, quantity_needed: Decimal, now: int,
              exclude: AccountId | None = None) -> MatchPlan:
        ranked = self.query_offers(utility, quantity_needed, now, exclude)
        fills, unfilled = greedy_fill(ranked, quantity_needed)
        out = []
        for o, take in fills:
            self.reserve(o.offer_id, take, now)
            out.append((o, take))
        return MatchPlan(out, unfilled)

    def purge_expired(self, now: int) -> int:
        stale = [k for k, o in self.offers.items() if o.valid_until < now]
        for k in stale:
            del self.offers[k]
        return len(stale)

    def book(self, utility: str | None, now: int) -> list[Offer]:
        """Listing view used by ``market-ls``."""
        live = [o for o in self.offers.values()
                if (utility is None or o.utility == utility) and self._live(o, now)]
        return sorted(live, key=Offer.sort_key)

    @classmethod
    def rebuild(cls, submitted: Iterable[Offer], blocks, now: int) -> Market:
        """Reconstruct the directory from the signed offers and the ledger alone.

        Reputation is recomputed from ratings and revocations sealed before
        each offer's listing tick; remaining quantity is the offered quantity
        minus every contract created against the offer.
        """
        from .ledger.contracts import ContractCreate, ServiceRating
        from .transactions import TxKind

        offers = list(submitted)
        taken: dict[str, Decimal] = {}
        events = []  # (timestamp, kind, account_id, score)
        for b in blocks:
            for tx in b.txs:
                if tx.kind == TxKind.CONTRACT_CREATE and isinstance(tx.payload, ContractCreate):
                    t = tx.payload.terms
                    taken[t.offer_id] = taken.get(t.offer_id, Decimal("0.000")) + t.quantity
                elif tx.kind == TxKind.RATING_STORE and isinstance(tx.payload, ServiceRating):
                    events.append((b.timestamp, "rating", tx.payload.supplier.id, tx.payload.score))
                elif tx.kind == TxKind.CONTRACT_REVOKE:
                    events.append((b.timestamp, "revoke", tx.signer.id, 0))

        def view_at(account: AccountId, tick: int):
            scores = [s for ts, k, a, s in events if k == "rating" and a == account.id and ts < tick]
            revs = sum(1 for ts, k, a, _ in events if k == "revoke" and a == account.id and ts < tick)
            return reputation_index(scores, revs)

        m = cls(lambda acct: None)
        for o in offers:
            left = o.quantity - taken.get(o.offer_id, Decimal("0.000"))
            rebuilt = replace(o, remaining=left, reputation=view_at(o.supplier, o.submitted_at))
            m.submitted.append(rebuilt)
            m._known.add(o.offer_id)
            if left > 0 and o.valid_until >= now:
                m.offers[o.offer_id] = rebuilt
        return m
