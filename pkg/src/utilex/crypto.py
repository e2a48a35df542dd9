"""Ed25519 keys and pseudonymous account identifiers."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def account_id_for(pubkey: bytes) -> bytes:
    return sha256(pubkey)[:16]


@dataclass(frozen=True)
class AccountId:
    """Pseudonymous account: 16-byte id bound to a 32-byte verification key.

    Equality and hashing use the id only.  The binding
    ``id == SHA-256(pubkey)[:16]`` is checked by :meth:`is_valid` instead of
    the constructor so that tampered records can still be decoded and then
    reported rather than crash the decoder.
    """

    id: bytes
    pubkey: bytes

    @classmethod
    def from_pubkey(cls, pubkey: bytes) -> AccountId:
        return cls(account_id_for(pubkey), pubkey)

    @property
    def hex(self) -> str:
        return self.id.hex()

    def is_valid(self) -> bool:
        return len(self.pubkey) == 32 and self.id == account_id_for(self.pubkey)

    def verify(self, signature: bytes, message: bytes) -> bool:
        return verify(self.pubkey, signature, message)

    def __eq__(self, other):
        if not isinstance(other, AccountId):
            return NotImplemented
        return self.id == other.id

    def __hash__(self):
        return hash(self.id)

    def __repr__(self):
        return f"AccountId({self.hex[:8]})"


@lru_cache(maxsize=4096)
def _public_key(pubkey: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(pubkey)


def verify(pubkey: bytes, signature: bytes, message: bytes) -> bool:
    try:
        _public_key(bytes(pubkey)).verify(bytes(signature), message)
    except (InvalidSignature, ValueError):
        return False
    return True


class Keypair:
    """An Ed25519 signing key.  Signatures are deterministic."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self.pubkey = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        self.account = AccountId.from_pubkey(self.pubkey)

    @classmethod
    def from_seed(cls, seed: bytes | str) -> Keypair:
        if isinstance(seed, str):
            seed = seed.encode("utf-8")
        return cls(Ed25519PrivateKey.from_private_bytes(sha256(seed)))

    @classmethod
    def generate(cls) -> Keypair:
        return cls(Ed25519PrivateKey.generate())

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)

    def __repr__(self):
        return f"Keypair({self.account.hex[:8]})"
