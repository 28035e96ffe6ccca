"""Encrypted, authenticated datagrams plus peer discovery.

Every payload-bearing datagram is sealed for the recipient and signed by
the sender:

    0x02 | sender sign key (32) | sender exchange key (32)
         | ephemeral X25519 key (32) | nonce (12) | 4-byte length
         | ChaCha20-Poly1305 ciphertext | Ed25519 signature (64)

The AEAD key is derived from an ephemeral-static X25519 agreement against
the recipient's exchange key; the signature covers everything from the
ephemeral key through the ciphertext. A wiretap sees public keys and
ciphertext only.

Discovery uses plaintext signed announcements (0x01) carrying the sender's
two public keys; they double as the ping/pong liveness probe and teach
nodes the exchange keys they need for sealing.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from ..identity import NodeIdentity
from ..keys import ExchangeKey, fingerprint, verify_signature
from ..values import b64u, b64u_decode
from .transport import Address

FRAME_ANNOUNCE = 0x01
FRAME_SECURE = 0x02

_SIG_LEN = 64
_KEY_LEN = 32
_NONCE_LEN = 12


class ChannelError(Exception):
    pass


class UnknownPeer(ChannelError):
    """No exchange key or address on record for the requested peer."""


@dataclass
class PeerInfo:
    fingerprint: str
    sign_public: bytes
    exchange_public: bytes
    address: Address
    last_seen: float = 0.0
    did: str = ""
    did_public: bytes = b""


def _aead_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    return hashlib.blake2b(shared + eph_pub + recipient_pub, digest_size=32).digest()


def seal(identity: NodeIdentity, peer: PeerInfo, plaintext: bytes) -> bytes:
    """Encrypt-to-recipient and sign one datagram body.

    The signature covers the sender keys too, so a relay cannot swap in its
    own exchange key to intercept replies.
    """
    eph = ExchangeKey.generate()
    eph_pub = eph.public_bytes()
    key = _aead_key(eph.agree(peer.exchange_public), eph_pub, peer.exchange_public)
    nonce = os.urandom(_NONCE_LEN)
    sender_sign = identity.transport_sign.public_bytes()
    sender_exch = identity.transport_exchange.public_bytes()
    aad = sender_sign + sender_exch + eph_pub
    ciphertext = ChaCha20Poly1305(key).encrypt(nonce, plaintext, aad)
    signed_part = (
        sender_sign + sender_exch + eph_pub + nonce
        + struct.pack(">I", len(ciphertext)) + ciphertext
    )
    signature = identity.transport_sign.sign(signed_part)
    return bytes([FRAME_SECURE]) + signed_part + signature


def unseal(identity: NodeIdentity, data: bytes) -> tuple[bytes, bytes, bytes]:
    """Verify and decrypt; returns (sender_sign, sender_exchange, plaintext)."""
    if len(data) < 1 + 3 * _KEY_LEN + _NONCE_LEN + 4 + _SIG_LEN:
        raise ChannelError("secure frame too short")
    signed_part = data[1 : -_SIG_LEN]
    signature = data[-_SIG_LEN:]
    sender_sign = signed_part[:_KEY_LEN]
    sender_exch = signed_part[_KEY_LEN : 2 * _KEY_LEN]
    if not verify_signature(sender_sign, signature, signed_part):
        raise ChannelError("sender signature invalid")
    rest = signed_part[2 * _KEY_LEN :]
    eph_pub = rest[:_KEY_LEN]
    nonce = rest[_KEY_LEN : _KEY_LEN + _NONCE_LEN]
    (ct_len,) = struct.unpack(">I", rest[_KEY_LEN + _NONCE_LEN : _KEY_LEN + _NONCE_LEN + 4])
    ciphertext = rest[_KEY_LEN + _NONCE_LEN + 4 :]
    if len(ciphertext) != ct_len:
        raise ChannelError("ciphertext length mismatch")
    my_exch_pub = identity.transport_exchange.public_bytes()
    key = _aead_key(identity.transport_exchange.agree(eph_pub), eph_pub, my_exch_pub)
    aad = sender_sign + sender_exch + eph_pub
    try:
        plaintext = ChaCha20Poly1305(key).decrypt(nonce, ciphertext, aad)
    except InvalidTag as exc:
        raise ChannelError("datagram not sealed for this node") from exc
    return sender_sign, sender_exch, plaintext


def announce_frame(identity: NodeIdentity, reply_wanted: bool, now: float) -> bytes:
    body = json.dumps(
        {
            "sign": b64u(identity.transport_sign.public_bytes()),
            "exchange": b64u(identity.transport_exchange.public_bytes()),
            "did": identity.did,
            "didKey": b64u(identity.did_key.public_bytes()),
            "ts": now,
            "reply": reply_wanted,
        }
    ).encode("utf-8")
    signature = identity.transport_sign.sign(body)
    return bytes([FRAME_ANNOUNCE]) + struct.pack(">H", len(body)) + body + signature


def parse_announce(data: bytes, sender: Address, now: float) -> tuple[PeerInfo, bool]:
    if len(data) < 3:
        raise ChannelError("announce frame too short")
    (body_len,) = struct.unpack(">H", data[1:3])
    body_raw = data[3 : 3 + body_len]
    signature = data[3 + body_len :]
    if len(signature) != _SIG_LEN:
        raise ChannelError("announce signature missing")
    try:
        body = json.loads(body_raw)
        sign_pub = b64u_decode(body["sign"])
        exch_pub = b64u_decode(body["exchange"])
        did = body.get("did", "")
        did_pub = b64u_decode(body["didKey"]) if body.get("didKey") else b""
        reply = bool(body.get("reply"))
    except Exception as exc:
        raise ChannelError(f"undecodable announce: {exc}") from exc
    if not verify_signature(sign_pub, signature, body_raw):
        raise ChannelError("announce signature invalid")
    info = PeerInfo(
        fingerprint=fingerprint(sign_pub),
        sign_public=sign_pub,
        exchange_public=exch_pub,
        address=sender,
        last_seen=now,
        did=did,
        did_public=did_pub,
    )
    return info, reply


class PeerTable:
    """Live peers keyed by transport fingerprint."""

    def __init__(self, liveness_window: float = 15.0):
        self.liveness_window = liveness_window
        self._peers: dict[str, PeerInfo] = {}

    def update(self, info: PeerInfo) -> None:
        self._peers[info.fingerprint] = info

    def get(self, fp: str) -> PeerInfo:
        info = self._peers.get(fp)
        if info is None:
            raise UnknownPeer(fp)
        return info

    def learn_keys(self, sign_pub: bytes, exch_pub: bytes, address: Address, now: float) -> PeerInfo:
        """Record keys observed on an incoming sealed frame.

        DID details only travel on announcements; keep whatever we know.
        """
        fp = fingerprint(sign_pub)
        existing = self._peers.get(fp)
        info = PeerInfo(
            fp, sign_pub, exch_pub, address, last_seen=now,
            did=existing.did if existing else "",
            did_public=existing.did_public if existing else b"",
        )
        if existing is None or existing.last_seen <= now:
            self._peers[fp] = info
        return info

    def live(self, now: float) -> list[PeerInfo]:
        return sorted(
            (p for p in self._peers.values() if now - p.last_seen <= self.liveness_window),
            key=lambda p: p.fingerprint,
        )
