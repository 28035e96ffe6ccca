"""Lock-step reliable blob transfer over lossy datagrams.

A blob is cut into fixed-size DATA blocks, each carrying a random transfer
id, a block number, and a last-block flag. The sender transmits one block,
waits for its ACK, and retransmits with exponential backoff until it runs
out of retries. The receiver accepts blocks strictly in order, re-ACKs
duplicates (an ACK may have been lost), and hands the reassembled blob up
exactly once. Reassembly buffers are capped so a peer cannot balloon
memory.

Inner frame layout (sealed by the channel before hitting the wire):

    DATA: 0x01 | transfer id (8) | block number (4) | flags (1) | payload
    ACK:  0x02 | transfer id (8) | block number (4)
"""

from __future__ import annotations

import os
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

BLOCK_SIZE = 1200
RETRANSMIT_TIMEOUT = 0.5
BACKOFF = 2.0
MAX_RETRIES = 5
MAX_TRANSFER_BYTES = 250 * 1024 * 1024

_DATA = 0x01
_ACK = 0x02
_FLAG_LAST = 0x01


class TransferError(Exception):
    pass


class TransferTimeout(TransferError):
    """A block exhausted its retries without an ACK."""


class PayloadTooLarge(TransferError):
    """Refused before any packet is sent."""


def pack_data(transfer_id: bytes, block_no: int, last: bool, payload: bytes) -> bytes:
    return (
        bytes([_DATA])
        + transfer_id
        + struct.pack(">IB", block_no, _FLAG_LAST if last else 0)
        + payload
    )


def pack_ack(transfer_id: bytes, block_no: int) -> bytes:
    return bytes([_ACK]) + transfer_id + struct.pack(">I", block_no)


@dataclass
class DataFrame:
    transfer_id: bytes
    block_no: int
    last: bool
    payload: bytes


@dataclass
class AckFrame:
    transfer_id: bytes
    block_no: int


def parse_frame(data: bytes) -> DataFrame | AckFrame | None:
    if not data:
        return None
    kind = data[0]
    if kind == _DATA and len(data) >= 14:
        block_no, flags = struct.unpack(">IB", data[9:14])
        return DataFrame(data[1:9], block_no, bool(flags & _FLAG_LAST), data[14:])
    if kind == _ACK and len(data) >= 13:
        (block_no,) = struct.unpack(">I", data[9:13])
        return AckFrame(data[1:9], block_no)
    return None


class AckRouter:
    """Collects incoming ACKs so sender threads can block on specific ones."""

    def __init__(self):
        self._cond = threading.Condition()
        self._acked: dict[bytes, int] = {}  # transfer id -> highest block acked

    def on_ack(self, frame: AckFrame) -> None:
        with self._cond:
            current = self._acked.get(frame.transfer_id, -1)
            if frame.block_no > current:
                self._acked[frame.transfer_id] = frame.block_no
            self._cond.notify_all()

    def wait(self, transfer_id: bytes, block_no: int, timeout: float) -> bool:
        deadline = time.monotonic() + timeout
        with self._cond:
            while self._acked.get(transfer_id, -1) < block_no:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)
            return True

    def forget(self, transfer_id: bytes) -> None:
        with self._cond:
            self._acked.pop(transfer_id, None)


@dataclass
class TransferConfig:
    block_size: int = BLOCK_SIZE
    retransmit_timeout: float = RETRANSMIT_TIMEOUT
    backoff: float = BACKOFF
    max_retries: int = MAX_RETRIES
    max_bytes: int = MAX_TRANSFER_BYTES


def send_blob(
    blob: bytes,
    send_frame: Callable[[bytes], None],
    acks: AckRouter,
    config: TransferConfig = TransferConfig(),
) -> None:
    """Deliver one blob reliably; raises rather than delivering corrupt data."""
    if len(blob) > config.max_bytes:
        raise PayloadTooLarge(f"{len(blob)} bytes exceeds the {config.max_bytes} cap")
    transfer_id = os.urandom(8)
    total_blocks = max(1, -(-len(blob) // config.block_size))
    try:
        for block_no in range(total_blocks):
            chunk = blob[block_no * config.block_size : (block_no + 1) * config.block_size]
            frame = pack_data(transfer_id, block_no, block_no == total_blocks - 1, chunk)
            timeout = config.retransmit_timeout
            for attempt in range(config.max_retries + 1):
                send_frame(frame)
                if acks.wait(transfer_id, block_no, timeout):
                    break
                timeout *= config.backoff
            else:
                raise TransferTimeout(
                    f"block {block_no}/{total_blocks} unacknowledged after "
                    f"{config.max_retries} retries"
                )
    finally:
        acks.forget(transfer_id)


@dataclass
class _Assembly:
    next_expected: int = 0
    chunks: list[bytes] = field(default_factory=list)
    received_bytes: int = 0
    completed: bool = False
    last_block: int = -1
    touched: float = 0.0


class TransferAssembler:
    """Receiver side: in-order block acceptance per (peer, transfer id)."""

    def __init__(self, max_bytes: int = MAX_TRANSFER_BYTES, reap_after: float = 60.0):
        self._lock = threading.Lock()
        self._transfers: dict[tuple[str, bytes], _Assembly] = {}
        self._max_bytes = max_bytes
        self._reap_after = reap_after

    def on_data(
        self, peer_fp: str, frame: DataFrame, now: Optional[float] = None
    ) -> tuple[Optional[bytes], Optional[bytes]]:
        """Process one DATA frame.

        Returns (ack_frame_to_send, completed_blob). Duplicates are re-ACKed
        without re-delivering; a completed transfer yields its blob exactly
        once.
        """
        now = now if now is not None else time.monotonic()
        key = (peer_fp, frame.transfer_id)
        with self._lock:
            self._reap(now)
            state = self._transfers.get(key)
            if state is None:
                state = _Assembly()
                self._transfers[key] = state
            state.touched = now

            if state.completed:
                # Late retransmit of the final block: its ACK was lost.
                if frame.block_no <= state.last_block:
                    return pack_ack(frame.transfer_id, frame.block_no), None
                return None, None
            if frame.block_no < state.next_expected:
                return pack_ack(frame.transfer_id, frame.block_no), None
            if frame.block_no > state.next_expected:
                return None, None  # out of order; sender will retransmit

            if state.received_bytes + len(frame.payload) > self._max_bytes:
                del self._transfers[key]
                return None, None
            state.chunks.append(frame.payload)
            state.received_bytes += len(frame.payload)
            state.next_expected += 1
            ack = pack_ack(frame.transfer_id, frame.block_no)
            if frame.last:
                state.completed = True
                state.last_block = frame.block_no
                blob = b"".join(state.chunks)
                state.chunks = []
                return ack, blob
            return ack, None

    def _reap(self, now: float) -> None:
        stale = [k for k, s in self._transfers.items() if now - s.touched > self._reap_after]
        for key in stale:
            del self._transfers[key]
