"""Signed ledger transactions and the identities that sign them."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any

from .crypto import AccountId, Keypair, sha256
from .encoding import encode, from_jsonable, to_jsonable


class TxKind(str, enum.Enum):
    GENESIS = "Genesis"
    METER_REGISTER = "MeterRegister"
    MINT = "Mint"
    TRANSFER = "Transfer"
    ESCROW = "Escrow"
    RELEASE = "Release"
    REFUND = "Refund"
    CONTRACT_CREATE = "ContractCreate"
    CONTRACT_FULFILL = "ContractFulfill"
    CONTRACT_REVOKE = "ContractRevoke"
    RATING_STORE = "RatingStore"


# Escrow, Release and Refund are effects of contract transactions; they appear
# in settlement records but are never accepted as submitted transactions.
LEDGER_EMITTED = frozenset({TxKind.ESCROW, TxKind.RELEASE, TxKind.REFUND})

PAYLOAD_TYPES: dict[TxKind, type] = {}


def payload_type(kind: TxKind):
    """Class decorator binding a payload record to its transaction kind."""

    def deco(cls):
        PAYLOAD_TYPES[kind] = cls
        return cls

    return deco


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    payload: Any
    signer: AccountId
    seq: int
    signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return encode(self, omit={"signature"})

    @property
    def tx_id(self) -> str:
        return sha256(self.signing_bytes())[:16].hex()

    def signature_ok(self) -> bool:
        return self.signer.is_valid() and self.signer.verify(self.signature, self.signing_bytes())

    def __json__(self):
        return {
            "kind": self.kind.value,
            "payload": to_jsonable(self.payload),
            "signer": to_jsonable(self.signer),
            "seq": self.seq,
            "signature": self.signature.hex(),
        }

    @classmethod
    def __from_json__(cls, data):
        kind = TxKind(data["kind"])
        ptype = PAYLOAD_TYPES.get(kind)
        if ptype is None:
            raise ValueError(f"no payload type registered for {kind.value}")
        return cls(
            kind=kind,
            payload=from_jsonable(ptype, data["payload"]),
            signer=from_jsonable(AccountId, data["signer"]),
            seq=from_jsonable(int, data["seq"]),
            signature=bytes.fromhex(data["signature"]),
        )


@dataclass
class Identity:
    """A named keypair that signs transactions with an increasing sequence."""

    name: str
    keys: Keypair
    seq: int = field(default=0)

    @classmethod
    def from_seed(cls, name: str, seed: str = "") -> Identity:
        return cls(name, Keypair.from_seed(f"{seed}/{name}"))

    @property
    def account(self) -> AccountId:
        return self.keys.account

    def sign(self, message: bytes) -> bytes:
        return self.keys.sign(message)

    def tx(self, kind: TxKind, payload: Any) -> Transaction:
        self.seq += 1
        unsigned = Transaction(kind, payload, self.account, self.seq)
        return Transaction(kind, payload, self.account, self.seq, self.sign(unsigned.signing_bytes()))
