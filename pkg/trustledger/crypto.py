"""
Hashing and signature primitives.

SHA-256 for every digest in the system, Ed25519 for transaction signatures and
the challenge-response step. Keys travel as raw 32-byte public keys.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

logger = logging.getLogger(__name__)

HASH_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64


@dataclass(frozen=True, order=True)
class Hash256:
    """32-byte digest. Ordering is bytewise, which fixes lexicographic tie-breaks."""

    digest: bytes

    def __post_init__(self):
        if not isinstance(self.digest, (bytes, bytearray)) or len(self.digest) != HASH_SIZE:
            raise ValueError(f"Hash256 requires exactly {HASH_SIZE} bytes")
        object.__setattr__(self, "digest", bytes(self.digest))

    @classmethod
    def from_hex(cls, text: str) -> "Hash256":
        return cls(bytes.fromhex(text))

    def hex(self) -> str:
        return self.digest.hex()

    def short(self) -> str:
        return self.digest.hex()[:12]

    def __bytes__(self) -> bytes:
        return self.digest

    def __repr__(self) -> str:
        return f"Hash256({self.short()}...)"


ZERO_HASH = Hash256(bytes(HASH_SIZE))

# Account ids are hashes of the registration public key.
AccountId = Hash256


def sha256(*parts: bytes) -> Hash256:
    """SHA-256 over the concatenation of parts."""
    h = hashlib.sha256()
    for part in parts:
        h.update(part)
    return Hash256(h.digest())


def account_id_for(public_key: bytes) -> AccountId:
    if len(public_key) != PUBLIC_KEY_SIZE:
        raise ValueError(f"Ed25519 public keys are {PUBLIC_KEY_SIZE} bytes")
    return sha256(public_key)


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 signing key with its raw public key."""

    _private_key: Ed25519PrivateKey = field(repr=False, compare=False)
    public_key: bytes

    @classmethod
    def generate(cls) -> "KeyPair":
        return cls._wrap(Ed25519PrivateKey.generate())

    @classmethod
    def from_seed(cls, seed: Union[str, bytes]) -> "KeyPair":
        """Deterministic key derived as SHA-256(seed); used by schedules and the simulator."""
        if isinstance(seed, str):
            seed = seed.encode("utf-8")
        return cls._wrap(Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest()))

    @classmethod
    def _wrap(cls, private_key: Ed25519PrivateKey) -> "KeyPair":
        raw = private_key.public_key().public_bytes(
            encoding=serialization.Encoding.Raw,
            format=serialization.PublicFormat.Raw,
        )
        return cls(private_key, raw)

    @property
    def account_id(self) -> AccountId:
        return account_id_for(self.public_key)

    def sign(self, message: bytes) -> bytes:
        return self._private_key.sign(message)


def verify_signature(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """True iff signature is a valid Ed25519 signature of message under public_key."""
    if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True
