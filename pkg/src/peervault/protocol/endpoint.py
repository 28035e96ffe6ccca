"""One node's network endpoint: receive loop, discovery, reliable blobs.

The endpoint owns the datagram transport. Its receive loop verifies and
decrypts every frame, feeds transfer machinery, answers announcements, and
hands fully reassembled blobs to the registered handler on worker threads.
Sending a blob to a peer blocks until the lock-step transfer completes.

Blobs are opaque here except for a one-byte kind prefix that upper layers
use to route (protocol message vs access-log exchange).
"""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

from ..identity import NodeIdentity
from .channel import (
    FRAME_ANNOUNCE,
    FRAME_SECURE,
    ChannelError,
    PeerInfo,
    PeerTable,
    announce_frame,
    parse_announce,
    seal,
    unseal,
)
from .transfer import (
    AckFrame,
    AckRouter,
    DataFrame,
    TransferAssembler,
    TransferConfig,
    parse_frame,
    send_blob,
)
from .transport import Address, TransportClosed

BLOB_MESSAGE = 0x01
BLOB_LOG = 0x02
BLOB_CREDENTIAL = 0x03

BlobHandler = Callable[[str, bytes], None]  # (peer fingerprint, blob sans kind byte)


class PeerEndpoint:
    def __init__(
        self,
        identity: NodeIdentity,
        transport,
        transfer_config: Optional[TransferConfig] = None,
        liveness_window: float = 15.0,
        clock: Callable[[], float] = time.time,
    ):
        self.identity = identity
        self.transport = transport
        self.peers = PeerTable(liveness_window)
        self.clock = clock
        self.config = transfer_config or TransferConfig()
        self._acks = AckRouter()
        self._assembler = TransferAssembler(max_bytes=self.config.max_bytes)
        self._handlers: dict[int, BlobHandler] = {}
        self._send_locks: dict[str, threading.Lock] = {}
        self._send_locks_guard = threading.Lock()
        self._running = False
        self._recv_thread: Optional[threading.Thread] = None
        self._workers = ThreadPoolExecutor(max_workers=8)
        self.bytes_sent = 0
        self.bytes_received = 0

    @property
    def address(self) -> Address:
        return self.transport.address

    @property
    def fingerprint(self) -> str:
        return self.identity.fingerprint

    def on_blob(self, kind: int, handler: BlobHandler) -> None:
        self._handlers[kind] = handler

    def start(self) -> None:
        self._running = True
        self._recv_thread = threading.Thread(target=self._recv_loop, daemon=True)
        self._recv_thread.start()

    def stop(self) -> None:
        self._running = False
        self.transport.close()
        if self._recv_thread:
            self._recv_thread.join(timeout=5)
        self._workers.shutdown(wait=False, cancel_futures=True)

    # -- discovery -----------------------------------------------------------

    def announce_to(self, address: Address, reply_wanted: bool = True) -> None:
        self.transport.send(address, announce_frame(self.identity, reply_wanted, self.clock()))

    def live_peers(self) -> list[PeerInfo]:
        return [p for p in self.peers.live(self.clock()) if p.fingerprint != self.fingerprint]

    # -- reliable blobs --------------------------------------------------------

    def send_blob(self, peer_fp: str, kind: int, blob: bytes) -> None:
        """Reliably deliver kind-prefixed blob; one transfer per peer at a time."""
        peer = self.peers.get(peer_fp)
        with self._peer_lock(peer_fp):
            send_blob(
                bytes([kind]) + blob,
                lambda frame: self._send_sealed(peer, frame),
                self._acks,
                self.config,
            )

    def _peer_lock(self, peer_fp: str) -> threading.Lock:
        with self._send_locks_guard:
            lock = self._send_locks.get(peer_fp)
            if lock is None:
                lock = threading.Lock()
                self._send_locks[peer_fp] = lock
            return lock

    def _send_sealed(self, peer: PeerInfo, frame: bytes) -> None:
        data = seal(self.identity, peer, frame)
        self.bytes_sent += len(data)
        try:
            self.transport.send(peer.address, data)
        except TransportClosed:
            if self._running:
                raise  # late frames during shutdown are expected losses

    # -- receive path -----------------------------------------------------------

    def _recv_loop(self) -> None:
        while self._running:
            try:
                item = self.transport.recv(timeout=0.2)
            except TransportClosed:
                return
            except OSError:
                if self._running:
                    continue
                return
            if item is None:
                continue
            sender, data = item
            self.bytes_received += len(data)
            try:
                self._handle_datagram(sender, data)
            except ChannelError:
                continue  # unauthenticated or undecryptable; drop silently

    def _handle_datagram(self, sender: Address, data: bytes) -> None:
        if not data:
            return
        kind = data[0]
        if kind == FRAME_ANNOUNCE:
            info, reply_wanted = parse_announce(data, sender, self.clock())
            if info.fingerprint == self.fingerprint:
                return
            self.peers.update(info)
            if reply_wanted:
                self.announce_to(sender, reply_wanted=False)
            return
        if kind == FRAME_SECURE:
            sender_sign, sender_exch, plaintext = unseal(self.identity, data)
            info = self.peers.learn_keys(sender_sign, sender_exch, sender, self.clock())
            frame = parse_frame(plaintext)
            if isinstance(frame, AckFrame):
                self._acks.on_ack(frame)
            elif isinstance(frame, DataFrame):
                ack, blob = self._assembler.on_data(info.fingerprint, frame)
                if ack is not None:
                    self._send_sealed(info, ack)
                if blob is not None and blob:
                    self._dispatch(info.fingerprint, blob)

    def _dispatch(self, peer_fp: str, blob: bytes) -> None:
        handler = self._handlers.get(blob[0])
        if handler is None:
            return
        body = blob[1:]
        self._workers.submit(self._run_handler, handler, peer_fp, body)

    def _run_handler(self, handler: BlobHandler, peer_fp: str, body: bytes) -> None:
        try:
            handler(peer_fp, body)
        except Exception:  # handler bugs must not kill the endpoint
            import logging

            logging.getLogger(__name__).exception("blob handler failed")
