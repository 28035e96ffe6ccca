"""Workload harness: timed request runs per access-token type, CSV out.

Two local nodes are wired over the in-process network (or UDP loopback).
For each access-token type, the requester performs N timed runs separated
by a configurable interval: present the token, obtain a session token,
fetch one file of the configured size. The session-token runs reuse one
previously minted token so they measure the cheap path. Absolute times are
hardware-bound and only reported, never asserted.

CSV columns:
    token_type, run, delta_s, file_kb, request_bytes, verifications,
    registry_lookups, grant_ms, fetch_ms, total_ms, ok
"""

from __future__ import annotations

import csv
import io
import os
import time
from dataclasses import dataclass
from datetime import date
from typing import Optional

from .credential import issue_attestation, issue_credential, present
from .identity import NodeIdentity
from .keys import SigningKey
from .node import Node, NodeConfig
from .protocol.messages import AccessibleFilesRequest, FileRequest, encode
from .protocol.transport import SimulatedNetwork
from .registry import InProcessRegistryClient, IssuerRecord, RegistryStore

TOKEN_TYPES = ("baseline", "session_token", "attestations", "presentation")

CSV_FIELDS = [
    "token_type", "run", "delta_s", "file_kb", "request_bytes",
    "verifications", "registry_lookups", "grant_ms", "fetch_ms", "total_ms", "ok",
]

BENCH_FILE = "bench/payload.bin"


@dataclass
class BenchResult:
    rows: list[dict]

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=CSV_FIELDS)
        writer.writeheader()
        writer.writerows(self.rows)
        return out.getvalue()


class BenchHarness:
    def __init__(self, workdir, file_kb: int = 220, kdf_iterations: int = 1000):
        self.file_kb = file_kb
        self.network = SimulatedNetwork()
        self.store = RegistryStore()

        def make_node(name: str) -> Node:
            config = NodeConfig(
                vault_dir=str(workdir / name),
                transport="sim",
                kdf_iterations=kdf_iterations,
                registry_cache_ttl=0,
                announce_interval=0.2,
                liveness_window=60.0,
            )
            node = Node.init(config, f"bench-{name}",
                             registry=InProcessRegistryClient(self.store, cache_ttl=0),
                             transport=self.network.endpoint())
            node._transport = self.network.endpoint()
            node.unlock(f"bench-{name}")
            node.start_network()
            return node

        self.host = make_node("host")
        self.requester = make_node("requester")
        self.host.endpoint.announce_to(self.requester.endpoint.address)
        self.requester.endpoint.announce_to(self.host.endpoint.address)
        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            if self.host.endpoint.live_peers() and self.requester.endpoint.live_peers():
                break
            time.sleep(0.02)

        self.payload = os.urandom(self.file_kb * 1024)
        self.host.vault.put(BENCH_FILE, self.payload)

        # Credential material mirroring the reference workload: three
        # single-claim attestations vs one three-claim credential.
        attestor = SigningKey.generate()
        self.attestations = tuple(
            issue_attestation(name, value, self.requester.identity.fingerprint, attestor)
            for name, value in [("age", 25), ("university", "TU Delft"), ("club", "chess")]
        )
        self.host.grant_trust(self.attestations[0].attestor_id)

        issuer = NodeIdentity.generate()
        self.store.register_did(issuer.did_document())
        self.store.accredit_issuer(IssuerRecord(did=issuer.did))
        vc = issue_credential(
            "bench-vc", issuer, self.requester.identity.did,
            {"age": 25, "university": "TU Delft", "club": "chess"},
            date.today(),
        )
        self.presentation = present([vc], self.requester.identity,
                                    self.requester.identity.fingerprint)

    def close(self) -> None:
        self.requester.shutdown()
        self.host.shutdown()

    def _tokens_for(self, token_type: str) -> tuple:
        if token_type == "attestations":
            return self.attestations
        if token_type == "presentation":
            return (self.presentation,)
        return ()

    def run(self, token_type: str, runs: int, delta_s: float) -> list[dict]:
        if token_type not in TOKEN_TYPES:
            raise ValueError(f"unknown token type {token_type!r}")
        host_fp = self.host.identity.fingerprint
        client = self.requester.client
        rows = []

        reusable_token: Optional[str] = None
        if token_type == "session_token":
            reusable_token, _ = client.accessible_files(host_fp, self._tokens_for("attestations"))

        for run_index in range(runs):
            client.cache.clear()  # every run pays the real transfer
            records_before = self.host.metrics.requests_handled
            started = time.perf_counter()
            grant_ms = 0.0
            request_bytes = 0
            ok = True
            try:
                if token_type == "session_token":
                    session_token = reusable_token
                    request_bytes += len(encode(FileRequest(
                        session_token=session_token, path=BENCH_FILE)))
                else:
                    tokens = self._tokens_for(token_type)
                    request_bytes += len(encode(AccessibleFilesRequest(
                        access_tokens=tokens, timestamp=0.0)))
                    session_token, _ = client.accessible_files(host_fp, tokens)
                    grant_ms = (time.perf_counter() - started) * 1000
                data = client.fetch(host_fp, BENCH_FILE, session_token)
                ok = data == self.payload
            except Exception:
                ok = False
            total_ms = (time.perf_counter() - started) * 1000

            verifications = 0
            lookups = 0
            for record in self.host.metrics.records_since(records_before):
                verifications += record.total_verifications()
                lookups += record.registry_lookups

            rows.append({
                "token_type": token_type,
                "run": run_index,
                "delta_s": delta_s,
                "file_kb": self.file_kb,
                "request_bytes": request_bytes,
                "verifications": verifications,
                "registry_lookups": lookups,
                "grant_ms": round(grant_ms, 3),
                "fetch_ms": round(total_ms - grant_ms, 3),
                "total_ms": round(total_ms, 3),
                "ok": ok,
            })
            if delta_s > 0 and run_index < runs - 1:
                time.sleep(delta_s)
        return rows


def run_bench(workdir, delta_s: float = 5.0, file_kb: int = 220, runs: int = 50,
              token_types: tuple[str, ...] = TOKEN_TYPES) -> BenchResult:
    harness = BenchHarness(workdir, file_kb=file_kb)
    try:
        rows = []
        for token_type in token_types:
            rows.extend(harness.run(token_type, runs, delta_s))
        return BenchResult(rows)
    finally:
        harness.close()
