"""Canonical binary encoding, fixed-point helpers and the JSON codec.

Every hash and signature in the system is taken over the output of
:func:`encode`, so two implementations agree on hashes as long as they agree
on this byte layout (documented in ``docs/FORMATS.md``).

Layout: each value is one tag byte followed by a body.  Variable-length
bodies carry a 4-byte big-endian length prefix.

====  =======================================================
tag   body
====  =======================================================
N     none
T/F   booleans, no body
I     len + ASCII decimal integer
M     len + ASCII decimal integer of thousandths (fixed point)
D     len + ``repr`` of a float
S     len + UTF-8 text
X     len + raw bytes
L     count + items
R     len + record name, count, then each field's value in
      declaration order
====  =======================================================
"""

from __future__ import annotations

import dataclasses
import enum
import struct
import types
import typing
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Any

MILLI = Decimal("0.001")


# -- fixed point ---------------------------------------------------------------

def fixed(value: Any) -> Decimal:
    """Parse ``value`` as an exact 3-decimal fixed-point number.

    Raises ``ValueError`` if the value needs more than three decimals;
    use :func:`round_milli` when rounding is intended.
    """
    if isinstance(value, Decimal):
        d = value
    elif isinstance(value, float):
        d = Decimal(repr(value))
    else:
        try:
            d = Decimal(value)
        except (InvalidOperation, TypeError) as exc:
            raise ValueError(f"not a number: {value!r}") from exc
    if not d.is_finite():
        raise ValueError(f"not finite: {value!r}")
    q = d.quantize(MILLI, rounding=ROUND_HALF_EVEN)
    if q != d:
        raise ValueError(f"{value!r} has sub-milli precision")
    return q


def round_milli(value: Any) -> Decimal:
    """Round half-even to the nearest thousandth."""
    if isinstance(value, float):
        value = Decimal(repr(value))
    return Decimal(value).quantize(MILLI, rounding=ROUND_HALF_EVEN)


def mul_milli(a: Decimal, b: Decimal) -> Decimal:
    """Fixed-point product, rounded half-even to the thousandth."""
    return (a * b).quantize(MILLI, rounding=ROUND_HALF_EVEN)


def fmt(d: Decimal) -> str:
    return format(d.quantize(MILLI), "f")


# -- canonical binary encoding ----------------------------------------------------

def _len(n: int) -> bytes:
    return struct.pack(">I", n)


def _blob(tag: bytes, body: bytes) -> bytes:
    return tag + _len(len(body)) + body


def encode(obj: Any, *, omit: frozenset[str] | set[str] = frozenset()) -> bytes:
    """Canonical bytes of ``obj``.

    ``omit`` drops named fields of the top-level record only (used to exclude
    a signature from the bytes it signs).  Record fields declared with
    ``metadata={"encode": False}`` are always dropped.
    """
    out = bytearray()
    _encode_into(out, obj, omit)
    return bytes(out)


def _encode_into(out: bytearray, obj: Any, omit=frozenset()) -> None:
    if obj is None:
        out += b"N"
    elif obj is True:
        out += b"T"
    elif obj is False:
        out += b"F"
    elif isinstance(obj, enum.Enum):
        _encode_into(out, obj.value)
    elif isinstance(obj, int):
        out += _blob(b"I", str(obj).encode())
    elif isinstance(obj, Decimal):
        q = obj.quantize(MILLI)
        if q != obj:
            raise ValueError(f"cannot encode {obj} exactly in thousandths")
        out += _blob(b"M", str(int(q.scaleb(3))).encode())
    elif isinstance(obj, float):
        out += _blob(b"D", repr(obj).encode())
    elif isinstance(obj, str):
        out += _blob(b"S", obj.encode("utf-8"))
    elif isinstance(obj, (bytes, bytearray)):
        out += _blob(b"X", bytes(obj))
    elif isinstance(obj, (list, tuple)):
        out += b"L" + _len(len(obj))
        for item in obj:
            _encode_into(out, item)
    elif dataclasses.is_dataclass(obj):
        fields = [
            f for f in dataclasses.fields(obj)
            if f.metadata.get("encode", True) and f.name not in omit
        ]
        out += _blob(b"R", type(obj).__name__.encode())
        out += _len(len(fields))
        for f in fields:
            _encode_into(out, getattr(obj, f.name))
    else:
        raise TypeError(f"no canonical encoding for {type(obj).__name__}")


# -- JSON codec -----------------------------------------------------------------

def to_jsonable(obj: Any) -> Any:
    """Convert records into plain JSON data (hex bytes, string decimals)."""
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj.value if isinstance(obj, enum.Enum) else obj
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, Decimal):
        return fmt(obj)
    if isinstance(obj, float):
        return obj
    if isinstance(obj, (bytes, bytearray)):
        return bytes(obj).hex()
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if dataclasses.is_dataclass(obj):
        custom = getattr(obj, "__json__", None)
        if custom is not None:
            return custom()
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    raise TypeError(f"cannot serialise {type(obj).__name__}")


_HINTS: dict[type, dict[str, Any]] = {}


def _hints(cls: type) -> dict[str, Any]:
    if cls not in _HINTS:
        _HINTS[cls] = typing.get_type_hints(cls)
    return _HINTS[cls]


def from_jsonable(hint: Any, data: Any) -> Any:
    """Inverse of :func:`to_jsonable`, driven by type hints."""
    origin = typing.get_origin(hint)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(hint) if a is not type(None)]
        if data is None:
            return None
        if len(args) != 1:
            raise TypeError(f"ambiguous union {hint}")
        return from_jsonable(args[0], data)
    if origin in (tuple, list):
        args = typing.get_args(hint)
        if origin is tuple and len(args) > 1 and args[1] is not Ellipsis:
            return tuple(from_jsonable(a, x) for a, x in zip(args, data, strict=True))
        item = args[0] if args else Any
        seq = [from_jsonable(item, x) for x in data]
        return tuple(seq) if origin is tuple else seq
    if origin is dict:
        _, vt = typing.get_args(hint)
        return {k: from_jsonable(vt, v) for k, v in data.items()}
    if hint is Any:
        return data
    if hint is Decimal:
        return fixed(data)
    if hint is bytes:
        if not isinstance(data, str):
            raise ValueError("expected hex string")
        return bytes.fromhex(data)
    if hint is float:
        return float(data)
    if isinstance(hint, type) and issubclass(hint, enum.Enum):
        return hint(data)
    if hint in (int, str, bool):
        if not isinstance(data, hint) or (hint is int and isinstance(data, bool)):
            raise ValueError(f"expected {hint.__name__}, got {data!r}")
        return data
    if dataclasses.is_dataclass(hint):
        custom = getattr(hint, "__from_json__", None)
        if custom is not None:
            return custom(data)
        if not isinstance(data, dict):
            raise ValueError(f"expected object for {hint.__name__}")
        hints = _hints(hint)
        kwargs = {}
        for f in dataclasses.fields(hint):
            if f.name in data:
                kwargs[f.name] = from_jsonable(hints[f.name], data[f.name])
        return hint(**kwargs)
    raise TypeError(f"cannot decode into {hint!r}")
