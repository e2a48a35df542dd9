"""Offer pricing policies.

Policies are looked up by name so scenario files can swap them without code
changes.  Every listed offer records the policy name, its parameters and the
stock it was priced at, which is enough for anyone to recompute the quote.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Protocol

from .encoding import round_milli
from .errors import NonPositivePrice, UnknownPolicy, ZeroTargetStock


class PricingPolicy(Protocol):
    name: str

    def price(self, utility: str, surplus_stock: float, target_stock: float, base_price: float) -> float: ...

    def params(self) -> dict[str, float]: ...


def flat_price(base_price: float) -> float:
    if not base_price > 0:
        raise NonPositivePrice(f"base price {base_price}")
    return base_price


@dataclass(frozen=True)
class DynamicPolicyParams:
    base_price: float
    target_stock: float
    k: float = 0.5
    low: float = 0.5
    high: float = 2.0

    def __post_init__(self):
        if not self.base_price > 0:
            raise NonPositivePrice(f"base price {self.base_price}")
        if not 0 < self.low <= 1 <= self.high:
            raise ValueError(f"multiplier bounds must satisfy 0 < low <= 1 <= high, got [{self.low}, {self.high}]")
        if self.k < 0:
            raise ValueError(f"sensitivity k must be >= 0, got {self.k}")


def dynamic_price(params: DynamicPolicyParams, stock: float) -> float:
    """Base price scaled by relative shortage, clamped to the multiplier bounds.

    Plenty of stock pushes the price down (to stimulate demand); shortage
    pushes it up.
    """
    if params.target_stock == 0:
        raise ZeroTargetStock("target stock must be non-zero")
    if stock < 0:
        raise ValueError(f"stock must be >= 0, got {stock}")
    shortage = (params.target_stock - stock) / params.target_stock
    multiplier = min(max(1 + params.k * shortage, params.low), params.high)
    return params.base_price * multiplier


@dataclass(frozen=True)
class FlatPolicy:
    name: str = field(default="flat", init=False)

    def price(self, utility, surplus_stock, target_stock, base_price):
        return flat_price(base_price)

    def params(self):
        return {}


@dataclass(frozen=True)
class DynamicPolicy:
    k: float = 0.5
    low: float = 0.5
    high: float = 2.0
    name: str = field(default="dynamic", init=False)

    def __post_init__(self):
        # validates bounds eagerly
        DynamicPolicyParams(1.0, 1.0, self.k, self.low, self.high)

    def price(self, utility, surplus_stock, target_stock, base_price):
        p = DynamicPolicyParams(base_price, target_stock, self.k, self.low, self.high)
        return dynamic_price(p, surplus_stock)

    def params(self):
        return {"high": self.high, "k": self.k, "low": self.low}


POLICIES: dict[str, Callable[..., PricingPolicy]] = {
    "flat": FlatPolicy,
    "dynamic": DynamicPolicy,
}


def register_policy(name: str, factory: Callable[..., PricingPolicy]) -> None:
    POLICIES[name] = factory


def make_policy(name: str, params: dict | None = None) -> PricingPolicy:
    try:
        factory = POLICIES[name]
    except KeyError:
        raise UnknownPolicy(f"no pricing policy named {name!r}") from None
    return factory(**(params or {}))


@dataclass(frozen=True)
class PricingRecord:
    """Everything needed to recompute an offer's unit price."""

    policy: str
    params: tuple[tuple[str, float], ...]
    base_price: float
    target_stock: float
    stock: Decimal
    utility: str

    def recompute(self) -> Decimal:
        policy = make_policy(self.policy, dict(self.params))
        return to_unit_price(policy.price(self.utility, float(self.stock), self.target_stock, self.base_price))


def to_unit_price(raw: float) -> Decimal:
    p = round_milli(raw)
    if p <= 0:
        raise NonPositivePrice(f"price {raw} rounds to {p}")
    return p


def quote(policy: PricingPolicy, utility: str, stock: Decimal, target_stock: float,
          base_price: float) -> tuple[Decimal, PricingRecord]:
    raw = policy.price(utility, float(stock), target_stock, base_price)
    record = PricingRecord(policy.name, tuple(sorted(policy.params().items())),
                           float(base_price), float(target_stock), stock, utility)
    return to_unit_price(raw), record
