"""Node identity: transport keys, DID keys, and the transport fingerprint."""

from __future__ import annotations

from dataclasses import dataclass

from .keys import ExchangeKey, SigningKey, fingerprint
from .registry import DIDDocument

DID_METHOD = "did:pv:"


@dataclass(frozen=True)
class NodeIdentity:
    """Key material for one node.

    The transport signing key identifies the node on the wire; its SHA-256
    fingerprint is the replay-binding value embedded in attestations,
    presentations, and session tokens. The DID key signs credentials.
    """

    transport_sign: SigningKey
    transport_exchange: ExchangeKey
    did_key: SigningKey

    @classmethod
    def generate(cls) -> "NodeIdentity":
        return cls(SigningKey.generate(), ExchangeKey.generate(), SigningKey.generate())

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.transport_sign.public_bytes())

    @property
    def did(self) -> str:
        return DID_METHOD + fingerprint(self.did_key.public_bytes())[:32]

    def did_document(self, updated_at: float = 0.0) -> DIDDocument:
        return DIDDocument(
            did=self.did,
            public_keys=(("key-1", self.did_key.public_bytes()),),
            updated_at=updated_at,
        )

    def to_dict(self) -> dict:
        from .values import b64u

        return {
            "transportSign": b64u(self.transport_sign.private_bytes()),
            "transportExchange": b64u(self.transport_exchange.private_bytes()),
            "didKey": b64u(self.did_key.private_bytes()),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "NodeIdentity":
        from .values import b64u_decode

        return cls(
            transport_sign=SigningKey.from_bytes(b64u_decode(raw["transportSign"])),
            transport_exchange=ExchangeKey.from_bytes(b64u_decode(raw["transportExchange"])),
            did_key=SigningKey.from_bytes(b64u_decode(raw["didKey"])),
        )
