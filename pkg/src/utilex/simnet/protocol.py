"""Message envelopes and the 15-step trade protocol."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, NamedTuple


class Step(NamedTuple):
    msg_no: int
    sender: str
    receiver: str
    description: str


CANONICAL_SEQUENCE: tuple[Step, ...] = (
    Step(1, "producer meter", "supplier node", "production reading"),
    Step(2, "supplier node", "market", "signed offer submission"),
    Step(3, "market", "ledger", "reputation query"),
    Step(4, "consumer node", "market", "demand query"),
    Step(5, "market", "consumer node", "annotated offers"),
    Step(6, "consumer node", "market", "offer selection"),
    Step(7, "market", "supplier node", "contract proposal"),
    Step(8, "supplier node", "market", "acceptance"),
    Step(9, "market", "ledger", "contract submission (escrow)"),
    Step(10, "ledger", "buyer+supplier", "contract confirmation"),
    Step(11, "supplier meter", "supplier node", "delivery reading"),
    Step(12, "consumer meter", "consumer node", "receipt reading"),
    Step(13, "consumer node", "ledger", "delivery proof"),
    Step(14, "ledger", "buyer+supplier", "settlement notification"),
    Step(15, "consumer node", "ledger", "service rating"),
)

# Steps 6-9 are the negotiation window; 2, 3 and 15 carry signatures,
# reputation and ratings.
NEGOTIATION_STEPS = (6, 7, 8, 9)
SECURITY_STEPS = (2, 3, 15)


def canonical_sequence() -> tuple[Step, ...]:
    return CANONICAL_SEQUENCE


@dataclass
class Envelope:
    """One message in flight.

    ``msg_no`` is the protocol step (1..15) or ``None`` for messages outside
    the happy path, which carry a ``label`` instead (revoke, rejected, ...).
    ``refs`` tie the envelope to the reading, offer, demand or trade it
    concerns.
    """

    seq: int
    msg_no: int | None
    sender: str
    to: tuple[str, ...]
    payload: Any
    send_tick: int
    deliver_tick: int
    summary: str = ""
    label: str = ""
    refs: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.deliver_tick < self.send_tick:
            raise ValueError("deliver_tick precedes send_tick")
        if self.msg_no is not None and not 1 <= self.msg_no <= 15:
            raise ValueError(f"msg_no {self.msg_no} outside 1..15")

    @property
    def tag(self) -> str:
        return str(self.msg_no) if self.msg_no is not None else self.label

    def log_line(self) -> str:
        return f"tick={self.deliver_tick} msg={self.tag} {self.sender}→{','.join(self.to)} {self.summary}"


def trade_keys(reading_key: str | None, offer_id: str, demand_id: str, trade_ref: str) -> frozenset[str]:
    keys = {f"offer:{offer_id}", f"demand:{demand_id}", f"trade:{trade_ref}"}
    if reading_key:
        keys.add(f"reading:{reading_key}")
    return frozenset(keys)


def filter_trace(trace: Iterable[Envelope], keys: frozenset[str]) -> list[Envelope]:
    """Envelopes that concern any of ``keys``, in delivery order."""
    return [e for e in trace if e.refs & keys]


def step_numbers(envelopes: Iterable[Envelope]) -> list[int | str]:
    return [e.msg_no if e.msg_no is not None else e.label for e in envelopes]


def respects_canonical_order(steps: Iterable[int | str]) -> bool:
    """Numbered steps never go backwards."""
    last = 0
    for s in steps:
        if isinstance(s, int):
            if s < last:
                return False
            last = s
    return True
