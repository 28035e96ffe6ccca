"""Bloom filter with recorded sizing and hash seeds for reproducible audits.

Membership is computed by double hashing: two keyed 64-bit blake2b digests
h1, h2 combine into k indices (h1 + i*h2) mod m. The parameters (m, k, n)
and both seeds are part of the filter's serialized form, so any verifier
can re-run a membership query on an archived filter and reproduce the
false-positive estimate. Inserted elements are never reported absent.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field

from .values import b64u, b64u_decode


def optimal_bits(capacity: int, fp_rate: float) -> int:
    """Bit count for a target false-positive rate at the given capacity."""
    if capacity <= 0:
        return 8
    return max(8, int(-capacity * math.log(fp_rate) / math.log(2) ** 2))


def optimal_hashes(bits: int, capacity: int) -> int:
    if capacity <= 0:
        return 1
    return max(1, round(bits / capacity * math.log(2)))


@dataclass
class BloomFilter:
    bits: bytearray
    m: int
    k: int
    n: int = 0
    seed1: bytes = field(default_factory=lambda: os.urandom(8))
    seed2: bytes = field(default_factory=lambda: os.urandom(8))

    @classmethod
    def sized_for(cls, capacity: int, fp_rate: float = 0.01) -> "BloomFilter":
        m = optimal_bits(capacity, fp_rate)
        k = optimal_hashes(m, capacity)
        return cls(bits=bytearray((m + 7) // 8), m=m, k=k)

    def _indices(self, item: str) -> list[int]:
        raw = item.encode("utf-8")
        h1 = int.from_bytes(hashlib.blake2b(raw, digest_size=8, key=self.seed1).digest(), "big")
        h2 = int.from_bytes(hashlib.blake2b(raw, digest_size=8, key=self.seed2).digest(), "big")
        return [(h1 + i * h2) % self.m for i in range(self.k)]

    def insert(self, item: str) -> None:
        for pos in self._indices(item):
            self.bits[pos // 8] |= 1 << (pos % 8)
        self.n += 1

    def query(self, item: str) -> bool:
        return all(self.bits[pos // 8] & (1 << (pos % 8)) for pos in self._indices(item))

    def fp_estimate(self) -> float:
        """Analytic false-positive probability (1 - e^(-kn/m))^k."""
        if self.n == 0:
            return 0.0
        return (1.0 - math.exp(-self.k * self.n / self.m)) ** self.k

    def to_dict(self) -> dict:
        return {
            "bits": b64u(bytes(self.bits)),
            "m": self.m,
            "k": self.k,
            "n": self.n,
            "seed1": b64u(self.seed1),
            "seed2": b64u(self.seed2),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "BloomFilter":
        return cls(
            bits=bytearray(b64u_decode(raw["bits"])),
            m=int(raw["m"]),
            k=int(raw["k"]),
            n=int(raw["n"]),
            seed1=b64u_decode(raw["seed1"]),
            seed2=b64u_decode(raw["seed2"]),
        )
