from __future__ import annotations

import os
import random

import pytest

from peervault.identity import NodeIdentity
from peervault.protocol.channel import ChannelError, PeerInfo, seal, unseal
from peervault.protocol.endpoint import PeerEndpoint
from peervault.protocol.transfer import (
    AckFrame,
    AckRouter,
    DataFrame,
    PayloadTooLarge,
    TransferAssembler,
    TransferConfig,
    TransferTimeout,
    pack_ack,
    pack_data,
    parse_frame,
    send_blob,
)
from peervault.protocol.transport import LinkConditions, SimulatedNetwork


class TestFrames:
    def test_data_round_trip(self):
        frame = parse_frame(pack_data(b"12345678", 7, True, b"payload"))
        assert isinstance(frame, DataFrame)
        assert (frame.transfer_id, frame.block_no, frame.last, frame.payload) == (
            b"12345678", 7, True, b"payload",
        )

    def test_ack_round_trip(self):
        frame = parse_frame(pack_ack(b"abcdefgh", 3))
        assert isinstance(frame, AckFrame)
        assert (frame.transfer_id, frame.block_no) == (b"abcdefgh", 3)

    def test_garbage_is_none(self):
        for blob in [b"", b"\x07", b"\x01short", os.urandom(5)]:
            assert parse_frame(blob) is None


class _DirectLink:
    """Glues a sender to an assembler with an optional per-frame drop plan."""

    def __init__(self, drop_plan=None):
        self.acks = AckRouter()
        self.assembler = TransferAssembler()
        self.delivered: list[bytes] = []
        self.frames_sent = 0
        self._drop_plan = drop_plan or (lambda i: False)

    def send(self, frame_bytes: bytes) -> None:
        index = self.frames_sent
        self.frames_sent += 1
        if self._drop_plan(index):
            return
        frame = parse_frame(frame_bytes)
        ack, blob = self.assembler.on_data("peer", frame)
        if blob is not None:
            self.delivered.append(blob)
        if ack is not None:
            self.acks.on_ack(parse_frame(ack))


class TestLockStep:
    def test_small_blob_intact(self):
        link = _DirectLink()
        blob = os.urandom(10_000)
        send_blob(blob, link.send, link.acks, TransferConfig(retransmit_timeout=0.05))
        assert link.delivered == [blob]

    def test_exact_block_multiple(self):
        link = _DirectLink()
        blob = os.urandom(1200 * 3)
        send_blob(blob, link.send, link.acks, TransferConfig(retransmit_timeout=0.05))
        assert link.delivered == [blob]

    def test_empty_blob(self):
        link = _DirectLink()
        send_blob(b"", link.send, link.acks, TransferConfig(retransmit_timeout=0.05))
        assert link.delivered == [b""]

    def test_deterministic_drop_pattern_recovers(self):
        # Drop every third frame: every block needs one retransmission round.
        link = _DirectLink(drop_plan=lambda i: i % 3 == 0)
        blob = os.urandom(1200 * 5 + 37)
        send_blob(blob, link.send, link.acks,
                  TransferConfig(retransmit_timeout=0.01, max_retries=5))
        assert link.delivered == [blob]

    def test_persistent_loss_times_out(self):
        link = _DirectLink(drop_plan=lambda i: True)
        with pytest.raises(TransferTimeout):
            send_blob(b"x", link.send, link.acks,
                      TransferConfig(retransmit_timeout=0.005, max_retries=3))

    def test_cap_enforced_before_any_packet(self):
        link = _DirectLink()
        config = TransferConfig(max_bytes=100)
        with pytest.raises(PayloadTooLarge):
            send_blob(b"y" * 101, link.send, link.acks, config)
        assert link.frames_sent == 0

    def test_duplicate_blocks_deliver_once(self):
        assembler = TransferAssembler()
        tid = b"t" * 8
        first = parse_frame(pack_data(tid, 0, False, b"aa"))
        last = parse_frame(pack_data(tid, 1, True, b"bb"))
        results = [assembler.on_data("p", f) for f in (first, first, last, last)]
        blobs = [blob for _, blob in results if blob is not None]
        acks = [ack for ack, _ in results]
        assert blobs == [b"aabb"]
        assert all(a is not None for a in acks)  # duplicates re-acked

    def test_out_of_order_ignored(self):
        assembler = TransferAssembler()
        tid = b"u" * 8
        ack, blob = assembler.on_data("p", parse_frame(pack_data(tid, 5, False, b"zz")))
        assert ack is None and blob is None

    def test_oversize_reassembly_aborts(self):
        assembler = TransferAssembler(max_bytes=1000)
        tid = b"v" * 8
        ack, blob = assembler.on_data("p", parse_frame(pack_data(tid, 0, False, b"x" * 999)))
        assert ack is not None
        ack, blob = assembler.on_data("p", parse_frame(pack_data(tid, 1, True, b"x" * 2)))
        assert ack is None and blob is None


class TestSealedChannel:
    def test_seal_unseal_round_trip(self):
        alice, bob = NodeIdentity.generate(), NodeIdentity.generate()
        bob_info = PeerInfo(
            bob.fingerprint, bob.transport_sign.public_bytes(),
            bob.transport_exchange.public_bytes(), ("sim", 1),
        )
        sealed = seal(alice, bob_info, b"hello bob")
        sender_sign, sender_exch, plaintext = unseal(bob, sealed)
        assert plaintext == b"hello bob"
        assert sender_sign == alice.transport_sign.public_bytes()
        assert sender_exch == alice.transport_exchange.public_bytes()

    def test_not_decryptable_by_third_party(self):
        alice, bob, eve = (NodeIdentity.generate() for _ in range(3))
        bob_info = PeerInfo(
            bob.fingerprint, bob.transport_sign.public_bytes(),
            bob.transport_exchange.public_bytes(), ("sim", 1),
        )
        sealed = seal(alice, bob_info, b"secret file bytes")
        with pytest.raises(ChannelError):
            unseal(eve, sealed)

    def test_tampered_frame_rejected(self):
        alice, bob = NodeIdentity.generate(), NodeIdentity.generate()
        bob_info = PeerInfo(
            bob.fingerprint, bob.transport_sign.public_bytes(),
            bob.transport_exchange.public_bytes(), ("sim", 1),
        )
        sealed = bytearray(seal(alice, bob_info, b"hello"))
        rng = random.Random(4)
        for _ in range(20):
            blob = bytearray(sealed)
            blob[rng.randrange(1, len(blob))] ^= 0x01
            with pytest.raises(ChannelError):
                unseal(bob, bytes(blob))

    def test_no_plaintext_on_wire(self):
        alice, bob = NodeIdentity.generate(), NodeIdentity.generate()
        bob_info = PeerInfo(
            bob.fingerprint, bob.transport_sign.public_bytes(),
            bob.transport_exchange.public_bytes(), ("sim", 1),
        )
        marker = b"MARKER-" + os.urandom(16).hex().encode()
        assert marker not in seal(alice, bob_info, marker)


def make_endpoint(network, clock=None):
    identity = NodeIdentity.generate()
    kwargs = {"clock": clock} if clock else {}
    ep = PeerEndpoint(
        identity, network.endpoint(),
        transfer_config=TransferConfig(retransmit_timeout=0.05, max_retries=8),
        **kwargs,
    )
    ep.start()
    return ep


class TestEndpoint:
    def test_mutual_discovery(self):
        network = SimulatedNetwork()
        a, b = make_endpoint(network), make_endpoint(network)
        try:
            a.announce_to(b.address)
            deadline_wait(lambda: a.live_peers() and b.live_peers())
            assert [p.fingerprint for p in a.live_peers()] == [b.fingerprint]
            assert [p.fingerprint for p in b.live_peers()] == [a.fingerprint]
        finally:
            a.stop(); b.stop()

    def test_offline_node_absent_after_window(self):
        network = SimulatedNetwork()
        now = [1000.0]
        a = make_endpoint(network, clock=lambda: now[0])
        b = make_endpoint(network, clock=lambda: now[0])
        try:
            a.announce_to(b.address)
            deadline_wait(lambda: a.live_peers())
            now[0] += 100.0  # beyond the liveness window
            assert a.live_peers() == []
        finally:
            a.stop(); b.stop()

    def test_blob_exchange(self):
        network = SimulatedNetwork()
        a, b = make_endpoint(network), make_endpoint(network)
        received = []
        b.on_blob(0x01, lambda fp, blob: received.append((fp, blob)))
        try:
            a.announce_to(b.address)
            deadline_wait(lambda: a.live_peers())
            payload = os.urandom(50_000)
            a.send_blob(b.fingerprint, 0x01, payload)
            deadline_wait(lambda: received)
            assert received == [(a.fingerprint, payload)]
        finally:
            a.stop(); b.stop()

    def test_blob_exchange_with_loss(self):
        network = SimulatedNetwork(LinkConditions(loss_rate=0.10, seed=7))
        a, b = make_endpoint(network), make_endpoint(network)
        received = []
        b.on_blob(0x01, lambda fp, blob: received.append(blob))
        try:
            for _ in range(50):  # announcements are fire-and-forget
                a.announce_to(b.address)
                b.announce_to(a.address)
                if a.live_peers() and b.live_peers():
                    break
            payload = os.urandom(20_000)
            a.send_blob(b.fingerprint, 0x01, payload)
            deadline_wait(lambda: received, timeout=20)
            assert received == [payload]
        finally:
            a.stop(); b.stop()

    def test_five_node_mesh_discovers_all_pairs(self):
        network = SimulatedNetwork()
        nodes = [make_endpoint(network) for _ in range(5)]
        try:
            for node in nodes:
                for other in nodes:
                    if node is not other:
                        node.announce_to(other.address)
            deadline_wait(lambda: all(len(n.live_peers()) == 4 for n in nodes))
            for node in nodes:
                assert len(node.live_peers()) == 4
        finally:
            for node in nodes:
                node.stop()


def deadline_wait(predicate, timeout=10.0, interval=0.01):
    import time as _time

    deadline = _time.monotonic() + timeout
    while _time.monotonic() < deadline:
        if predicate():
            return
        _time.sleep(interval)
    raise AssertionError("condition not reached before deadline")
