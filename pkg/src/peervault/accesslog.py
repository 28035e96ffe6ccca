"""Tamper-evident access log: dual-signed blocks on pairwise chains.

Every accessible-files grant produces one block holding a bloom filter of
the granted paths. The block links the previous block hash and sequence
number of BOTH parties' personal chains and is signed first by the host,
then countersigned by the requester. Altering any recorded field changes
the block hash, which invalidates both signatures and breaks the hash link
on at least one of the two chains, so unilateral rewriting is detectable.

The log records offers, not retrievals: individual file fetches are
deliberately not logged.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import Iterable, Optional

from .bloom import BloomFilter
from .keys import SigningKey, verify_signature
from .values import b64u, b64u_decode, canonical_bytes

GENESIS_HASH = "0" * 64


class AccessLogError(Exception):
    """Base class for access log errors."""


class HostSignatureInvalid(AccessLogError):
    """Refusing to countersign a proposal whose host signature fails."""


class ChainBroken(AccessLogError):
    """Verification found a defect; carries the block position and reason."""

    def __init__(self, position: int, reason: str):
        self.position = position
        self.reason = reason
        super().__init__(f"block {position}: {reason}")


@dataclass(frozen=True)
class AccessLogBlock:
    host_public_key: bytes
    requester_public_key: bytes
    bloom: BloomFilter
    timestamp: float
    prev_hash_host: str
    prev_hash_requester: str
    seq_host: int
    seq_requester: int
    host_signature: bytes = b""
    requester_signature: Optional[bytes] = None

    def hashed_content(self) -> bytes:
        """Canonical bytes of every field except the two signatures."""
        return canonical_bytes(
            {
                "host": b64u(self.host_public_key),
                "requester": b64u(self.requester_public_key),
                "bloom": self.bloom.to_dict(),
                "timestamp": self.timestamp,
                "prevHost": self.prev_hash_host,
                "prevRequester": self.prev_hash_requester,
                "seqHost": self.seq_host,
                "seqRequester": self.seq_requester,
            }
        )

    def block_hash(self) -> str:
        return hashlib.sha256(self.hashed_content()).hexdigest()

    def dual_signed(self) -> bool:
        return bool(self.host_signature) and self.requester_signature is not None

    def to_dict(self) -> dict:
        return {
            "host": b64u(self.host_public_key),
            "requester": b64u(self.requester_public_key),
            "bloom": self.bloom.to_dict(),
            "timestamp": self.timestamp,
            "prevHost": self.prev_hash_host,
            "prevRequester": self.prev_hash_requester,
            "seqHost": self.seq_host,
            "seqRequester": self.seq_requester,
            "hostSignature": b64u(self.host_signature),
            "requesterSignature": (
                b64u(self.requester_signature) if self.requester_signature is not None else None
            ),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "AccessLogBlock":
        return cls(
            host_public_key=b64u_decode(raw["host"]),
            requester_public_key=b64u_decode(raw["requester"]),
            bloom=BloomFilter.from_dict(raw["bloom"]),
            timestamp=float(raw["timestamp"]),
            prev_hash_host=raw["prevHost"],
            prev_hash_requester=raw["prevRequester"],
            seq_host=int(raw["seqHost"]),
            seq_requester=int(raw["seqRequester"]),
            host_signature=b64u_decode(raw["hostSignature"]),
            requester_signature=(
                b64u_decode(raw["requesterSignature"])
                if raw.get("requesterSignature") is not None
                else None
            ),
        )


@dataclass(frozen=True)
class ChainTip:
    """Linkage data needed to append a party's next block."""

    prev_hash: str = GENESIS_HASH
    next_seq: int = 0


def propose_block(
    host_key: SigningKey,
    requester_public_key: bytes,
    granted_paths: Iterable[str],
    host_tip: ChainTip,
    requester_tip: ChainTip,
    timestamp: float,
    fp_rate: float = 0.01,
) -> AccessLogBlock:
    """Build and host-sign a block recording one grant.

    An empty grant still produces a block: the request itself is the event
    being logged. The bloom filter is sized for the actual grant size at
    the target false-positive rate.
    """
    paths = sorted(set(granted_paths))
    bloom = BloomFilter.sized_for(max(len(paths), 1), fp_rate)
    for path in paths:
        bloom.insert(path)
    block = AccessLogBlock(
        host_public_key=host_key.public_bytes(),
        requester_public_key=requester_public_key,
        bloom=bloom,
        timestamp=timestamp,
        prev_hash_host=host_tip.prev_hash,
        prev_hash_requester=requester_tip.prev_hash,
        seq_host=host_tip.next_seq,
        seq_requester=requester_tip.next_seq,
    )
    signature = host_key.sign(block.block_hash().encode("ascii"))
    return replace(block, host_signature=signature)


def countersign(block: AccessLogBlock, requester_key: SigningKey) -> AccessLogBlock:
    """Append the requester signature after checking the host's.

    Idempotent: countersigning an already countersigned block re-derives
    the same deterministic signature.
    """
    digest = block.block_hash().encode("ascii")
    if not verify_signature(block.host_public_key, block.host_signature, digest):
        raise HostSignatureInvalid("host signature does not verify over the block hash")
    if requester_key.public_bytes() != block.requester_public_key:
        raise AccessLogError("countersigning key is not the block's requester")
    return replace(block, requester_signature=requester_key.sign(digest))


# ---------------------------------------------------------------------------
# Chain storage and verification
# ---------------------------------------------------------------------------

class ChainStore:
    """One identity's personal chain plus a per-peer-pair index."""

    def __init__(self, owner_public_key: bytes):
        self.owner_public_key = owner_public_key
        self.blocks: list[AccessLogBlock] = []

    def tip(self) -> ChainTip:
        if not self.blocks:
            return ChainTip()
        return ChainTip(prev_hash=self.blocks[-1].block_hash(), next_seq=len(self.blocks))

    def append(self, block: AccessLogBlock) -> None:
        owner = self.owner_public_key
        if owner == block.host_public_key:
            prev, seq = block.prev_hash_host, block.seq_host
        elif owner == block.requester_public_key:
            prev, seq = block.prev_hash_requester, block.seq_requester
        else:
            raise AccessLogError("block does not involve this chain's owner")
        tip = self.tip()
        if prev != tip.prev_hash or seq != tip.next_seq:
            raise AccessLogError("block does not link to the current chain tip")
        if not block.dual_signed():
            raise AccessLogError("only dual-signed blocks are appended")
        self.blocks.append(block)

    def blocks_with(self, peer_public_key: bytes) -> list[AccessLogBlock]:
        return [
            b
            for b in self.blocks
            if peer_public_key in (b.host_public_key, b.requester_public_key)
        ]

    def export_json(self) -> str:
        return json.dumps(
            {"owner": b64u(self.owner_public_key), "blocks": [b.to_dict() for b in self.blocks]},
            indent=2,
        )

    @classmethod
    def import_json(cls, text: str) -> "ChainStore":
        raw = json.loads(text)
        store = cls(owner_public_key=b64u_decode(raw["owner"]))
        store.blocks = [AccessLogBlock.from_dict(b) for b in raw["blocks"]]
        return store


@dataclass(frozen=True)
class ChainReport:
    ok: bool
    length: int
    error: Optional[ChainBroken] = None


def verify_chain(blocks: list[AccessLogBlock], owner_public_key: bytes) -> ChainReport:
    """Check hash links, sequence monotonicity, and both signatures.

    Any single-field mutation of any block is caught here: the recomputed
    hash no longer matches what was signed, or the link to the neighbouring
    block breaks.
    """
    expected = ChainTip()
    for position, block in enumerate(blocks):
        if owner_public_key == block.host_public_key:
            prev, seq = block.prev_hash_host, block.seq_host
        elif owner_public_key == block.requester_public_key:
            prev, seq = block.prev_hash_requester, block.seq_requester
        else:
            return ChainReport(False, len(blocks), ChainBroken(position, "owner not a participant"))
        if seq != expected.next_seq:
            return ChainReport(False, len(blocks), ChainBroken(position, f"sequence {seq} != {expected.next_seq}"))
        if prev != expected.prev_hash:
            return ChainReport(False, len(blocks), ChainBroken(position, "hash link mismatch"))
        digest = block.block_hash().encode("ascii")
        if not verify_signature(block.host_public_key, block.host_signature, digest):
            return ChainReport(False, len(blocks), ChainBroken(position, "host signature invalid"))
        if block.requester_signature is None or not verify_signature(
            block.requester_public_key, block.requester_signature, digest
        ):
            return ChainReport(False, len(blocks), ChainBroken(position, "requester signature invalid"))
        expected = ChainTip(prev_hash=block.block_hash(), next_seq=expected.next_seq + 1)
    return ChainReport(True, len(blocks))


@dataclass(frozen=True)
class AuditVerdict:
    """Membership answer plus how much to believe a positive."""

    path: str
    present: bool
    fp_estimate: float
    inserted_count: int


def audit(block: AccessLogBlock, path: str) -> AuditVerdict:
    """Query the block's bloom filter for a path.

    A negative is definitive; a positive holds except with the stated
    false-positive probability. The inserted count is exposed so auditors
    can flag implausibly dense filters.
    """
    return AuditVerdict(
        path=path,
        present=block.bloom.query(path),
        fp_estimate=block.bloom.fp_estimate(),
        inserted_count=block.bloom.n,
    )
