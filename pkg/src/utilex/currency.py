"""State-issued trade credits: wallets, minting, transfers and low-credit alerts.

Amounts are ``Decimal`` values with exactly three decimals (milli-credits).
There is a single currency for every utility type and no exchange-rate state
anywhere in the system.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from decimal import Decimal

from .crypto import AccountId
from .encoding import fixed, fmt
from .errors import InsufficientCredits, NonPositiveAmount, NotMintAuthority
from .transactions import Identity, Transaction, TxKind, payload_type

log = logging.getLogger(__name__)

ZERO = Decimal("0.000")
DEFAULT_LOW_CREDIT_THRESHOLD = Decimal("10.000")


def credits(value) -> Decimal:
    """Exact milli-credit amount; rejects sub-milli precision."""
    return fixed(value)


@dataclass
class Wallet:
    owner: AccountId
    free: Decimal = ZERO
    escrowed: dict[str, Decimal] = field(default_factory=dict)

    @property
    def escrow_total(self) -> Decimal:
        return sum(self.escrowed.values(), ZERO)

    @property
    def total(self) -> Decimal:
        return self.free + self.escrow_total


@dataclass(frozen=True)
class MintAuthority:
    state_account: AccountId


@payload_type(TxKind.MINT)
@dataclass(frozen=True)
class Mint:
    to: AccountId
    amount: Decimal


@payload_type(TxKind.TRANSFER)
@dataclass(frozen=True)
class Transfer:
    to: AccountId
    amount: Decimal
    memo: str = ""


def mint(authority: Identity, to: AccountId, amount) -> Transaction:
    return authority.tx(TxKind.MINT, Mint(to, credits(amount)))


def transfer(sender: Identity, to: AccountId, amount, memo: str = "") -> Transaction:
    return sender.tx(TxKind.TRANSFER, Transfer(to, credits(amount), memo))


class Book:
    """All wallets plus the total-minted counter.

    Every mutating method validates fully before touching any balance, so a
    raised error always leaves the book unchanged.
    """

    def __init__(self, authority: MintAuthority | None = None):
        self.authority = authority
        self.wallets: dict[bytes, Wallet] = {}
        self.total_minted = ZERO

    def wallet(self, account: AccountId) -> Wallet:
        w = self.wallets.get(account.id)
        if w is None:
            w = self.wallets[account.id] = Wallet(account)
        return w

    def peek(self, account: AccountId) -> Wallet:
        """Read-only view; unknown accounts get an empty, unattached wallet."""
        return self.wallets.get(account.id) or Wallet(account)

    def free(self, account: AccountId) -> Decimal:
        return self.peek(account).free

    def apply_mint(self, signer: AccountId, m: Mint) -> None:
        if self.authority is None or signer != self.authority.state_account:
            raise NotMintAuthority(f"{signer.hex} may not mint")
        if m.amount <= 0:
            raise NonPositiveAmount(f"mint of {fmt(m.amount)}")
        self.wallet(m.to).free += m.amount
        self.total_minted += m.amount

    def apply_transfer(self, signer: AccountId, t: Transfer) -> None:
        if t.amount <= 0:
            raise NonPositiveAmount(f"transfer of {fmt(t.amount)}")
        src = self.peek(signer)
        if src.free < t.amount:
            raise InsufficientCredits(f"{signer.hex} has {fmt(src.free)}, needs {fmt(t.amount)}")
        self.wallet(signer).free -= t.amount
        self.wallet(t.to).free += t.amount

    def escrow(self, buyer: AccountId, contract_id: str, amount: Decimal) -> None:
        src = self.peek(buyer)
        if src.free < amount:
            raise InsufficientCredits(f"{buyer.hex} has {fmt(src.free)}, escrow needs {fmt(amount)}")
        w = self.wallet(buyer)
        w.free -= amount
        w.escrowed[contract_id] = amount

    def settle(self, buyer: AccountId, supplier: AccountId, contract_id: str, payout: Decimal) -> Decimal:
        """Close an escrow: pay ``payout`` to the supplier, refund the rest.

        Returns the refund.
        """
        w = self.wallet(buyer)
        held = w.escrowed[contract_id]
        if not ZERO <= payout <= held:
            raise ValueError(f"payout {fmt(payout)} outside escrow {fmt(held)}")
        refund = held - payout
        del w.escrowed[contract_id]
        w.free += refund
        self.wallet(supplier).free += payout
        return refund

    def totals(self) -> tuple[Decimal, Decimal]:
        free = sum((w.free for w in self.wallets.values()), ZERO)
        held = sum((w.escrow_total for w in self.wallets.values()), ZERO)
        return free, held

    def conserved(self) -> bool:
        free, held = self.totals()
        return free + held == self.total_minted


# -- low-credit notification -----------------------------------------------------

@dataclass(frozen=True)
class Notification:
    owner: AccountId
    free: Decimal
    threshold: Decimal

    def __str__(self):
        return f"low credit: {fmt(self.free)} < {fmt(self.threshold)}"


def low_credit_check(wallet: Wallet, threshold=DEFAULT_LOW_CREDIT_THRESHOLD) -> Notification | None:
    """Stateless test: a notification iff free balance is strictly below threshold."""
    threshold = credits(threshold)
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    if wallet.free < threshold:
        return Notification(wallet.owner, wallet.free, threshold)
    return None


class LowCreditMonitor:
    """Edge-triggered wrapper: one notification per downward crossing."""

    def __init__(self, threshold=DEFAULT_LOW_CREDIT_THRESHOLD):
        self.threshold = credits(threshold)
        self.armed = True

    def check(self, wallet: Wallet) -> Notification | None:
        note = low_credit_check(wallet, self.threshold)
        if note is None:
            self.armed = True
            return None
        if not self.armed:
            return None
        self.armed = False
        log.info("%s: %s", wallet.owner.hex[:8], note)
        return note
