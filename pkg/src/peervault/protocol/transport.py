"""Datagram transports: real UDP and an in-process simulated network.

Both expose the same two calls (send / recv with timeout) over opaque
(host, port) style addresses. The simulated network delivers through
per-endpoint queues and can inject loss, delay, and reordering from a
seeded RNG, which keeps loss-tolerance tests deterministic.
"""

from __future__ import annotations

import queue
import random
import socket
import threading
from dataclasses import dataclass
from typing import Optional

Address = tuple[str, int]

MAX_DATAGRAM = 65507


class TransportClosed(Exception):
    pass


class UdpTransport:
    def __init__(self, bind_host: str = "127.0.0.1", bind_port: int = 0):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.bind((bind_host, bind_port))
        self._closed = False

    @property
    def address(self) -> Address:
        return self._sock.getsockname()[:2]

    def send(self, peer: Address, data: bytes) -> None:
        if self._closed:
            raise TransportClosed()
        self._sock.sendto(data, peer)

    def recv(self, timeout: Optional[float]) -> Optional[tuple[Address, bytes]]:
        if self._closed:
            raise TransportClosed()
        self._sock.settimeout(timeout)
        try:
            data, addr = self._sock.recvfrom(MAX_DATAGRAM)
            return addr[:2], data
        except socket.timeout:
            return None
        except OSError:
            if self._closed:
                raise TransportClosed() from None
            raise

    def close(self) -> None:
        self._closed = True
        self._sock.close()


@dataclass
class LinkConditions:
    """Fault injection applied to every delivery on a simulated network."""

    loss_rate: float = 0.0
    delay: float = 0.0
    reorder_rate: float = 0.0
    seed: int = 0


class SimulatedNetwork:
    """Broker connecting any number of in-process endpoints by fake address."""

    def __init__(self, conditions: Optional[LinkConditions] = None):
        self.conditions = conditions or LinkConditions()
        self._rng = random.Random(self.conditions.seed)
        self._endpoints: dict[Address, "SimulatedTransport"] = {}
        self._next_port = 40000
        self._lock = threading.Lock()

    def endpoint(self) -> "SimulatedTransport":
        with self._lock:
            address = ("sim", self._next_port)
            self._next_port += 1
            ep = SimulatedTransport(self, address)
            self._endpoints[address] = ep
            return ep

    def deliver(self, sender: Address, peer: Address, data: bytes) -> None:
        with self._lock:
            target = self._endpoints.get(peer)
            dropped = self._rng.random() < self.conditions.loss_rate
            delay = self.conditions.delay
            reordered = self._rng.random() < self.conditions.reorder_rate
        if target is None or dropped:
            return
        if delay or reordered:
            extra = delay + (0.002 if reordered else 0.0)
            timer = threading.Timer(extra, target._inbox.put, args=((sender, data),))
            timer.daemon = True
            timer.start()
        else:
            target._inbox.put((sender, data))

    def drop(self, address: Address) -> None:
        with self._lock:
            self._endpoints.pop(address, None)


class SimulatedTransport:
    def __init__(self, network: SimulatedNetwork, address: Address):
        self._network = network
        self.address = address
        self._inbox: "queue.Queue[tuple[Address, bytes]]" = queue.Queue()
        self._closed = False

    def send(self, peer: Address, data: bytes) -> None:
        if self._closed:
            raise TransportClosed()
        if len(data) > MAX_DATAGRAM:
            raise ValueError("datagram exceeds maximum size")
        self._network.deliver(self.address, peer, data)

    def recv(self, timeout: Optional[float]) -> Optional[tuple[Address, bytes]]:
        if self._closed:
            raise TransportClosed()
        try:
            return self._inbox.get(timeout=timeout if timeout else 0.01)
        except queue.Empty:
            return None

    def close(self) -> None:
        self._closed = True
        self._network.drop(self.address)
