"""Scenario files: participants, meters, demand, mints, payments and faults.

See ``docs/FORMATS.md`` for the JSON schema.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from decimal import Decimal
from pathlib import Path
from typing import Any

from ..encoding import fixed
from ..errors import NoSuchTarget, ScenarioInvalid
from ..metering import DRIVERS, UTILITIES, Direction
from ..node import ACCEPTANCE_POLICIES, RATING_POLICIES, SELECTION_POLICIES, DemandEntry
from ..pricing import make_policy


class FaultKind(str, enum.Enum):
    DROP_OFFER = "DropOffer"
    EXPIRE_MID_NEGOTIATION = "ExpireMidNegotiation"
    TAMPER_READING = "TamperReading"


RESERVED_NAMES = frozenset({"market", "ledger"})

FAULT_ALIASES = {
    "drop": FaultKind.DROP_OFFER,
    "expire": FaultKind.EXPIRE_MID_NEGOTIATION,
    "tamper": FaultKind.TAMPER_READING,
}


@dataclass(frozen=True)
class Fault:
    """Fires once, on the first eligible event at or after tick ``at``."""

    kind: FaultKind
    at: int = 0


@dataclass(frozen=True)
class DriverSpec:
    type: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class MeterSpec:
    id: str
    utility: str
    direction: Direction
    driver: DriverSpec | None = None


@dataclass(frozen=True)
class OfferSpec:
    policy: str = "flat"
    params: dict = field(default_factory=dict)
    base_price: float = 1.0
    target_stock: float = 0.0
    validity: int = 20


@dataclass(frozen=True)
class NodeSpec:
    name: str
    meters: tuple[MeterSpec, ...] = ()
    offers: dict = field(default_factory=dict)  # utility -> OfferSpec
    reserve: dict = field(default_factory=dict)  # utility -> Decimal
    demand: tuple[DemandEntry, ...] = ()
    low_credit_threshold: Decimal = Decimal("10.000")
    rating_policy: str = "default"
    selection_policy: str = "greedy"
    acceptance_policy: str = "always"
    delivery_ratio: float = 1.0
    meter_bias: float = 1.0


@dataclass(frozen=True)
class MintSpec:
    tick: int
    to: str
    amount: Decimal


@dataclass(frozen=True)
class PaymentSpec:
    tick: int
    sender: str
    to: str
    amount: Decimal
    memo: str = ""


@dataclass(frozen=True)
class Scenario:
    name: str
    end_tick: int
    nodes: tuple[NodeSpec, ...]
    seed: str = ""
    state: str = "state"
    authorities: tuple[str, ...] = ("authority-0",)
    mints: tuple[MintSpec, ...] = ()
    payments: tuple[PaymentSpec, ...] = ()
    faults: tuple[Fault, ...] = ()
    contract_window: int = 10
    dispute_tolerance: Decimal = Decimal("0.050")
    latency: int = 1
    meter_latency: int = 0
    utilities: tuple[tuple[str, str], ...] = ()

    @classmethod
    def from_dict(cls, data: dict) -> Scenario:
        return _parse(data)

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        p = Path(path)
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ScenarioInvalid(exc.strerror or str(exc), str(p)) from exc
        except json.JSONDecodeError as exc:
            raise ScenarioInvalid(f"invalid JSON: {exc}", str(p)) from exc
        return cls.from_dict(data)

    def node(self, name: str) -> NodeSpec:
        return next(n for n in self.nodes if n.name == name)

    @property
    def participants(self) -> set[str]:
        return {n.name for n in self.nodes} | {self.state}


# -- parsing ---------------------------------------------------------------------------

class _Reader:
    """Pulls typed values out of nested dicts, reporting the JSON path on error."""

    def __init__(self, data: Any, where: str):
        self.data = data
        self.where = where

    def fail(self, msg: str, key: str | None = None):
        loc = (f"{self.where}.{key}" if self.where else key) if key else self.where
        raise ScenarioInvalid(msg, loc or "$")

    def get(self, key: str, kind, default=...):
        if not isinstance(self.data, dict):
            self.fail("expected an object")
        if key not in self.data:
            if default is ...:
                self.fail("missing required field", key)
            return default
        value = self.data[key]
        if kind is Decimal:
            try:
                return fixed(value if not isinstance(value, float) else repr(value))
            except ValueError as exc:
                self.fail(str(exc), key)
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                self.fail("expected a number", key)
            return float(value)
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            self.fail("expected an integer", key)
        if kind not in (int, Decimal, float) and not isinstance(value, kind):
            self.fail(f"expected {getattr(kind, '__name__', kind)}", key)
        return value

    def sub(self, key: str, value) -> _Reader:
        return _Reader(value, f"{self.where}.{key}" if self.where else key)

    def items(self, key: str):
        seq = self.get(key, list, [])
        return [self.sub(f"{key}[{i}]", v) for i, v in enumerate(seq)]


def _parse_node(r: _Reader, utilities: set[str]) -> NodeSpec:
    name = r.get("name", str)
    meters = []
    for m in r.items("meters"):
        direction = m.get("direction", str, "Produced")
        try:
            direction = Direction(direction)
        except ValueError:
            m.fail(f"unknown direction {direction!r}", "direction")
        utility = m.get("utility", str)
        if utility not in utilities:
            m.fail(f"unknown utility {utility!r}", "utility")
        driver = None
        if "driver" in m.data:
            d = m.sub("driver", m.get("driver", dict))
            dtype = d.get("type", str)
            if dtype not in DRIVERS:
                d.fail(f"unknown driver type {dtype!r}", "type")
            driver = DriverSpec(dtype, {k: v for k, v in d.data.items() if k != "type"})
        meters.append(MeterSpec(m.get("id", str), utility, direction, driver))
    offers = {}
    for utility, spec in r.get("offers", dict, {}).items():
        o = r.sub(f"offers.{utility}", spec)
        if utility not in utilities:
            o.fail(f"unknown utility {utility!r}")
        policy = o.get("policy", str, "flat")
        params = o.get("params", dict, {})
        try:
            make_policy(policy, params)
        except Exception as exc:  # unknown name or bad params
            o.fail(str(exc), "policy")
        base = o.get("base_price", float)
        if base <= 0:
            o.fail("must be positive", "base_price")
        validity = o.get("validity", int, 20)
        if validity < 0:
            o.fail("must be >= 0", "validity")
        offers[utility] = OfferSpec(policy, params, base, o.get("target_stock", float, 0.0), validity)
    reserve = {}
    rr = r.sub("reserve", r.get("reserve", dict, {}))
    for utility in rr.data:
        reserve[utility] = rr.get(utility, Decimal)
    demand = []
    for d in r.items("demand"):
        utility = d.get("utility", str)
        if utility not in utilities:
            d.fail(f"unknown utility {utility!r}", "utility")
        qty = d.get("quantity", Decimal)
        if qty <= 0:
            d.fail("must be positive", "quantity")
        tick = d.get("tick", int)
        if tick < 1:
            d.fail("demand ticks start at 1", "tick")
        demand.append(DemandEntry(tick, utility, qty))
    for key, table in (("rating_policy", RATING_POLICIES), ("selection_policy", SELECTION_POLICIES),
                       ("acceptance_policy", ACCEPTANCE_POLICIES)):
        if r.get(key, str, next(iter(table))) not in table:
            r.fail(f"unknown policy {r.data[key]!r}", key)
    ratio = r.get("delivery_ratio", float, 1.0)
    if not 0 <= ratio <= 1:
        r.fail("must be in [0, 1]", "delivery_ratio")
    bias = r.get("meter_bias", float, 1.0)
    if bias < 0:
        r.fail("must be >= 0", "meter_bias")
    return NodeSpec(
        name=name, meters=tuple(meters), offers=offers, reserve=reserve, demand=tuple(demand),
        low_credit_threshold=r.get("low_credit_threshold", Decimal, Decimal("10.000")),
        rating_policy=r.get("rating_policy", str, "default"),
        selection_policy=r.get("selection_policy", str, "greedy"),
        acceptance_policy=r.get("acceptance_policy", str, "always"),
        delivery_ratio=ratio, meter_bias=bias,
    )


def _parse(data: dict) -> Scenario:
    r = _Reader(data, "")
    if not isinstance(data, dict):
        r.fail("scenario must be a JSON object")
    utilities = {u.name for u in UTILITIES}
    extra = []
    for u in r.items("utilities"):
        name, unit = u.get("name", str), u.get("unit", str)
        try:
            UTILITIES.register(name, unit)
        except ValueError as exc:
            u.fail(str(exc))
        utilities.add(name)
        extra.append((name, unit))
    nodes = tuple(_parse_node(n, utilities) for n in r.items("nodes"))
    names = [n.name for n in nodes]
    for i, name in enumerate(names):
        if name in RESERVED_NAMES:
            r.fail(f"node names {sorted(RESERVED_NAMES)} are reserved", f"nodes[{i}].name")
        if name in names[:i]:
            r.fail(f"duplicate node name {name!r}", f"nodes[{i}].name")
    seen_meters: set[str] = set()
    for i, n in enumerate(nodes):
        for j, m in enumerate(n.meters):
            if m.id in seen_meters:
                r.fail(f"duplicate meter id {m.id!r}", f"nodes[{i}].meters[{j}].id")
            seen_meters.add(m.id)
    state = r.get("state", str, "state")
    if state in names:
        r.fail("the state account cannot also be a node", "state")
    participants = set(names) | {state}
    authorities = tuple(r.get("authorities", list, ["authority-0"]))
    if not authorities or not all(isinstance(a, str) for a in authorities):
        r.fail("need at least one authority name", "authorities")
    if len(set(authorities)) != len(authorities) or set(authorities) & participants:
        r.fail("authority names must be unique and distinct from nodes", "authorities")
    mints = []
    for m in r.items("mints"):
        to = m.get("to", str)
        if to not in participants:
            m.fail(f"unknown participant {to!r}", "to")
        amount = m.get("amount", Decimal)
        if amount <= 0:
            m.fail("must be positive", "amount")
        tick = m.get("tick", int, 0)
        if tick < 0:
            m.fail("must be >= 0", "tick")
        mints.append(MintSpec(tick, to, amount))
    payments = []
    for p in r.items("payments"):
        sender, to = p.get("from", str), p.get("to", str)
        for key, who in (("from", sender), ("to", to)):
            if who not in participants:
                p.fail(f"unknown participant {who!r}", key)
        amount = p.get("amount", Decimal)
        if amount <= 0:
            p.fail("must be positive", "amount")
        payments.append(PaymentSpec(p.get("tick", int), sender, to, amount, p.get("memo", str, "")))
    faults = []
    for f in r.items("faults"):
        kind = f.get("kind", str)
        try:
            faults.append(Fault(FaultKind(kind), f.get("at", int, 0)))
        except ValueError:
            f.fail(f"unknown fault kind {kind!r}", "kind")
    end_tick = r.get("end_tick", int)
    if end_tick < 0:
        r.fail("must be >= 0", "end_tick")
    window = r.get("contract_window", int, 10)
    if window < 1:
        r.fail("must be >= 1", "contract_window")
    tol = r.get("dispute_tolerance", Decimal, Decimal("0.050"))
    if not 0 <= tol < 1:
        r.fail("must be in [0, 1)", "dispute_tolerance")
    latency = r.sub("latency", r.get("latency", dict, {}))
    lat, mlat = latency.get("default", int, 1), latency.get("meter", int, 0)
    if lat < 0 or mlat < 0:
        latency.fail("latencies must be >= 0")
    return Scenario(
        name=r.get("name", str, "scenario"), end_tick=end_tick, nodes=nodes,
        seed=str(r.get("seed", (str, int), "")), state=state, authorities=authorities,
        mints=tuple(mints), payments=tuple(payments), faults=tuple(faults),
        contract_window=window, dispute_tolerance=tol, latency=lat, meter_latency=mlat,
        utilities=tuple(extra),
    )


# -- faults ------------------------------------------------------------------------------

def parse_fault(spec: str) -> Fault:
    """``kind[:tick]`` where kind is drop, expire, tamper or a full fault name."""
    kind, _, at = spec.partition(":")
    k = FAULT_ALIASES.get(kind.lower())
    if k is None:
        try:
            k = FaultKind(kind)
        except ValueError:
            raise ValueError(f"unknown fault {kind!r}") from None
    try:
        tick = int(at) if at else 0
    except ValueError:
        raise ValueError(f"bad fault tick {at!r}") from None
    return Fault(k, tick)


def inject_fault(scenario: Scenario, kind: FaultKind | str, at: int = 0) -> Scenario:
    """Copy of ``scenario`` with one more fault armed.

    Raises :class:`NoSuchTarget` when the scenario has nothing the fault
    could hit (no offers to drop or expire, no trades to tamper with).
    """
    kind = FaultKind(kind)
    producers = any(n.offers and any(m.driver for m in n.meters) for n in scenario.nodes)
    demand = any(n.demand for n in scenario.nodes)
    if not producers or (kind != FaultKind.DROP_OFFER and not demand):
        raise NoSuchTarget(f"scenario {scenario.name!r} has no target for {kind.value}")
    return replace(scenario, faults=scenario.faults + (Fault(kind, at),))
