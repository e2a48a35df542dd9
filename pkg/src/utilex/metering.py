"""Smart meters, signed readings, delivery proofs and the device driver contract."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Protocol, runtime_checkable

from .crypto import AccountId, Keypair, verify
from .encoding import encode, fixed, fmt, round_milli
from .errors import (
    Disputed,
    InvalidReading,
    MeterAlreadyRegistered,
    OwnerMismatch,
    UnregisteredMeter,
    UtilityMismatch,
)
from .transactions import TxKind, payload_type

DEFAULT_DISPUTE_TOLERANCE = Decimal("0.05")


class Direction(str, enum.Enum):
    PRODUCED = "Produced"
    CONSUMED = "Consumed"


@dataclass(frozen=True)
class UtilityType:
    name: str
    unit: str


ELECTRICITY = UtilityType("electricity", "kWh")
WATER = UtilityType("water", "L")
DATA = UtilityType("data", "GB")


class UtilityRegistry:
    """Name -> unit table.  Units are fixed once a name is registered."""

    def __init__(self, initial=(ELECTRICITY, WATER, DATA)):
        self._types: dict[str, UtilityType] = {}
        for u in initial:
            self.register(u.name, u.unit)

    def register(self, name: str, unit: str) -> UtilityType:
        existing = self._types.get(name)
        if existing is not None:
            if existing.unit != unit:
                raise ValueError(f"utility {name!r} already registered with unit {existing.unit}")
            return existing
        u = self._types[name] = UtilityType(name, unit)
        return u

    def get(self, name: str) -> UtilityType:
        try:
            return self._types[name]
        except KeyError:
            raise KeyError(f"unknown utility {name!r}") from None

    def __contains__(self, name) -> bool:
        return name in self._types

    def __iter__(self):
        return iter(self._types.values())


UTILITIES = UtilityRegistry()


def units(value) -> Decimal:
    """Exact quantity in thousandths of a utility unit."""
    return fixed(value)


@dataclass(frozen=True)
class MeterReading:
    meter_id: str
    owner: AccountId
    direction: Direction
    utility: str
    quantity: Decimal
    tick: int
    nonce: int
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return encode(self, omit={"signature"})

    @property
    def key(self) -> tuple[str, int]:
        return (self.meter_id, self.nonce)


@payload_type(TxKind.METER_REGISTER)
@dataclass(frozen=True)
class MeterRegistration:
    meter_id: str
    owner: AccountId
    utility: str
    pubkey: bytes


@dataclass
class Meter:
    """A metering device with its own signing key and nonce counter."""

    meter_id: str
    owner: AccountId
    utility: str
    keys: Keypair | None
    next_nonce: int = 0

    @classmethod
    def from_seed(cls, meter_id: str, owner: AccountId, utility: str, seed: str = "") -> Meter:
        return cls(meter_id, owner, utility, Keypair.from_seed(f"{seed}/meter/{meter_id}"))

    def registration(self) -> MeterRegistration:
        if self.keys is None:
            raise UnregisteredMeter(f"meter {self.meter_id} has no keypair")
        return MeterRegistration(self.meter_id, self.owner, self.utility, self.keys.pubkey)


def sign_reading(meter: Meter, direction: Direction, quantity, tick: int,
                 registry: MeterRegistry | None = None) -> MeterReading:
    if meter.keys is None or (registry is not None and meter.meter_id not in registry):
        raise UnregisteredMeter(f"meter {meter.meter_id} is not registered")
    q = round_milli(quantity)
    if q < 0:
        raise InvalidReading(f"negative quantity {quantity}")
    nonce = meter.next_nonce
    meter.next_nonce += 1
    unsigned = MeterReading(meter.meter_id, meter.owner, Direction(direction), meter.utility, q, tick, nonce)
    sig = meter.keys.sign(unsigned.signing_bytes())
    return MeterReading(meter.meter_id, meter.owner, unsigned.direction, meter.utility, q, tick, nonce, sig)


class MeterRegistry:
    """Registered meter keys plus every (meter_id, nonce) already consumed."""

    def __init__(self):
        self.meters: dict[str, MeterRegistration] = {}
        self.seen: set[tuple[str, int]] = set()

    def __contains__(self, meter_id) -> bool:
        return meter_id in self.meters

    def register(self, reg: MeterRegistration) -> None:
        if reg.meter_id in self.meters:
            raise MeterAlreadyRegistered(reg.meter_id)
        if len(reg.pubkey) != 32:
            raise ValueError("meter pubkey must be 32 bytes")
        self.meters[reg.meter_id] = reg

    def problems(self, reading: MeterReading) -> list[str]:
        """Reasons the reading is unacceptable; empty when it verifies."""
        reg = self.meters.get(reading.meter_id)
        if reg is None:
            return [f"meter {reading.meter_id} not registered"]
        out = []
        if reg.owner != reading.owner:
            out.append(f"meter {reading.meter_id} is registered to {reg.owner.hex[:8]}, "
                       f"reading claims {reading.owner.hex[:8]}")
        if reg.utility != reading.utility:
            out.append(f"meter {reading.meter_id} measures {reg.utility}, not {reading.utility}")
        if reading.quantity < 0:
            out.append("negative quantity")
        if not verify(reg.pubkey, reading.signature, reading.signing_bytes()):
            out.append("bad signature")
        if reading.key in self.seen:
            out.append(f"nonce {reading.nonce} already used by {reading.meter_id}")
        return out

    def consume(self, *readings: MeterReading) -> None:
        for r in readings:
            self.seen.add(r.key)

    def copy(self) -> MeterRegistry:
        c = MeterRegistry()
        c.meters = dict(self.meters)
        c.seen = set(self.seen)
        return c


def verify_reading(reading: MeterReading, registry: MeterRegistry) -> bool:
    return not registry.problems(reading)


@dataclass(frozen=True)
class DeliveryProof:
    contract_id: str
    supplier_reading: MeterReading
    consumer_reading: MeterReading
    quantity: Decimal
    disputed: bool = False


def _mismatch(supplied: Decimal, consumed: Decimal, tolerance: Decimal) -> bool:
    return abs(supplied - consumed) > tolerance * supplied


def proof_problems(proof: DeliveryProof, contract, registry: MeterRegistry,
                   tolerance: Decimal = DEFAULT_DISPUTE_TOLERANCE) -> list[str]:
    """Everything wrong with ``proof`` for ``contract``.

    ``contract`` needs ``contract_id``, ``buyer``, ``supplier`` and ``utility``.
    A dispute is not a problem here; callers decide whether disputed
    proofs are acceptable.
    """
    s, c = proof.supplier_reading, proof.consumer_reading
    out = []
    if proof.contract_id != contract.contract_id:
        out.append("proof is for another contract")
    if s.key == c.key:
        out.append("supplier and consumer readings are the same reading")
    for label, r, direction, owner in (
        ("supplier", s, Direction.PRODUCED, contract.supplier),
        ("consumer", c, Direction.CONSUMED, contract.buyer),
    ):
        out += [f"{label} reading: {p}" for p in registry.problems(r)]
        if r.direction != direction:
            out.append(f"{label} reading direction is {r.direction.value}")
        if r.owner != owner:
            out.append(f"{label} reading owner is not the contract {label}")
        if r.utility != contract.utility:
            out.append(f"{label} reading is {r.utility}, contract is {contract.utility}")
    if proof.quantity != min(s.quantity, c.quantity):
        out.append("proof quantity does not match readings")
    if proof.disputed != _mismatch(s.quantity, c.quantity, tolerance):
        out.append("dispute flag does not match readings")
    return out


def build_proof(contract, supplier_reading: MeterReading, consumer_reading: MeterReading,
                registry: MeterRegistry, tolerance=DEFAULT_DISPUTE_TOLERANCE) -> DeliveryProof:
    """Pair two readings into a delivery proof for ``contract``.

    The settled quantity is the consumer-side reading, capped at the
    supplier-side reading.  Raises :class:`Disputed` (carrying the proof)
    when the readings disagree by more than ``tolerance`` of the supplied
    quantity.
    """
    tolerance = Decimal(tolerance)
    for r in (supplier_reading, consumer_reading):
        if r.utility != contract.utility:
            raise UtilityMismatch(f"{r.meter_id} reads {r.utility}, contract is {contract.utility}")
    if supplier_reading.owner != contract.supplier or supplier_reading.direction != Direction.PRODUCED:
        raise OwnerMismatch("supplier reading must be a Produced reading from the contract supplier")
    if consumer_reading.owner != contract.buyer or consumer_reading.direction != Direction.CONSUMED:
        raise OwnerMismatch("consumer reading must be a Consumed reading from the contract buyer")
    for r in (supplier_reading, consumer_reading):
        bad = registry.problems(r)
        if bad:
            raise InvalidReading(f"{r.meter_id}: {'; '.join(bad)}")
    s, c = supplier_reading.quantity, consumer_reading.quantity
    disputed = _mismatch(s, c, tolerance)
    proof = DeliveryProof(contract.contract_id, supplier_reading, consumer_reading, min(s, c), disputed)
    if disputed:
        raise Disputed(f"supplier {fmt(s)} vs consumer {fmt(c)} exceeds {tolerance:%} tolerance", proof)
    return proof


# -- driver integration -----------------------------------------------------------

@runtime_checkable
class DeviceDriver(Protocol):
    """Anything that can feed a meter.

    ``poll`` returns the raw quantity measured since the previous poll;
    ``describe`` returns ``(UtilityType, unit, meter_id)``.
    """

    def poll(self) -> float: ...

    def describe(self) -> tuple[UtilityType, str, str]: ...


DriverFactory = Callable[..., DeviceDriver]
DRIVERS: dict[str, DriverFactory] = {}


def register_driver(name: str, factory: DriverFactory | None = None):
    """Register a driver factory under ``name``; usable as a decorator.

    Factories are called as ``factory(meter_id=..., utility=..., clock=..., **params)``
    where ``clock()`` returns the current simulation tick.
    """

    def deco(f):
        if name in DRIVERS and DRIVERS[name] is not f:
            raise ValueError(f"driver {name!r} already registered")
        DRIVERS[name] = f
        return f

    return deco(factory) if factory is not None else deco


@register_driver("schedule")
@dataclass
class ScheduleDriver:
    """Scripted generator: ``rate`` units per tick for ticks in [start, end]."""

    meter_id: str
    utility: UtilityType
    clock: Callable[[], int]
    rate: float = 0.0
    start: int = 0
    end: int = 0

    def poll(self) -> float:
        t = self.clock()
        return self.rate if self.start <= t <= self.end else 0.0

    def describe(self):
        return (self.utility, self.utility.unit, self.meter_id)


@register_driver("pulses")
@dataclass
class PulseDriver:
    """Scripted generator emitting fixed amounts at listed ticks."""

    meter_id: str
    utility: UtilityType
    clock: Callable[[], int]
    pulses: dict = field(default_factory=dict)

    def poll(self) -> float:
        return float(self.pulses.get(str(self.clock()), self.pulses.get(self.clock(), 0.0)))

    def describe(self):
        return (self.utility, self.utility.unit, self.meter_id)


def read_driver(meter: Meter, driver: DeviceDriver, tick: int) -> MeterReading | None:
    """Poll ``driver`` and sign a Produced reading; ``None`` when nothing was produced."""
    utility, unit, meter_id = driver.describe()
    if meter_id != meter.meter_id or utility.name != meter.utility:
        raise UtilityMismatch(f"driver describes {meter_id}/{utility.name}, bound to {meter.meter_id}")
    raw = driver.poll()
    if raw is None or raw == 0:
        return None
    if raw < 0:
        raise InvalidReading(f"driver {meter_id} returned {raw}")
    return sign_reading(meter, Direction.PRODUCED, raw, tick)
