"""Key material: Ed25519 signing keys, X25519 exchange keys, fingerprints.

All credential families, session tokens, log blocks, and transit envelopes
sign with Ed25519 over a canonical byte serialization. Transit encryption
uses ephemeral-static X25519 agreement into ChaCha20-Poly1305. Raw 32-byte
public keys are the identity unit everywhere; fingerprints are SHA-256 of
the raw public key, hex encoded.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw
_RAW_PRIV = serialization.PrivateFormat.Raw
_NOENC = serialization.NoEncryption()


def fingerprint(public_key: bytes) -> str:
    """Hex SHA-256 digest of a raw public key."""
    return hashlib.sha256(public_key).hexdigest()


@dataclass(frozen=True)
class SigningKey:
    """Ed25519 keypair wrapper with raw-bytes import/export."""

    _priv: Ed25519PrivateKey

    @classmethod
    def generate(cls) -> "SigningKey":
        return cls(Ed25519PrivateKey.generate())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SigningKey":
        return cls(Ed25519PrivateKey.from_private_bytes(raw))

    def private_bytes(self) -> bytes:
        return self._priv.private_bytes(_RAW, _RAW_PRIV, _NOENC)

    def public_bytes(self) -> bytes:
        return self._priv.public_key().public_bytes(_RAW, _RAW_PUB)

    def sign(self, message: bytes) -> bytes:
        return self._priv.sign(message)


def verify_signature(public_key: bytes, signature: bytes, message: bytes) -> bool:
    """True iff signature is a valid Ed25519 signature over message."""
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature, message)
        return True
    except (InvalidSignature, ValueError):
        return False


@dataclass(frozen=True)
class ExchangeKey:
    """X25519 keypair wrapper used for transit encryption."""

    _priv: X25519PrivateKey

    @classmethod
    def generate(cls) -> "ExchangeKey":
        return cls(X25519PrivateKey.generate())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ExchangeKey":
        return cls(X25519PrivateKey.from_private_bytes(raw))

    def private_bytes(self) -> bytes:
        return self._priv.private_bytes(_RAW, _RAW_PRIV, _NOENC)

    def public_bytes(self) -> bytes:
        return self._priv.public_key().public_bytes(_RAW, _RAW_PUB)

    def agree(self, peer_public: bytes) -> bytes:
        """Raw shared secret with a peer's public exchange key."""
        return self._priv.exchange(X25519PublicKey.from_public_bytes(peer_public))
