"""The runnable daemon: configuration, wiring, serving, and access logging.

A node owns one vault, one network endpoint, one registry client, and the
pairwise access-log chains. Its wallet (identity keys, trusted issuers,
received credentials, chains) persists inside the encrypted vault, so a
locked node has no usable key material on disk.

Startup order: unlock vault, load wallet, start endpoint, start admin API,
announce to bootstrap peers. Shutdown flushes chains and locks the vault.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from dataclasses import replace as dc_replace

from .accesslog import (
    AccessLogBlock,
    ChainStore,
    ChainTip,
    countersign,
    propose_block,
    verify_chain,
)
from .keys import verify_signature
from .credential import (
    Attestation,
    TrustedIssuerList,
    VerifiableCredential,
    issue_sic,
    present,
)
from .identity import NodeIdentity
from .protocol.client import FileCache, VaultClient
from .protocol.endpoint import BLOB_CREDENTIAL, BLOB_LOG, PeerEndpoint
from .protocol.handlers import (
    HostContext,
    RequestRecord,
    handle_accessible_files_request,
    handle_file_request,
)
from .protocol.messages import (
    AccessibleFilesRequest,
    AccessToken,
    FileRequest,
    Message,
)
from .protocol.router import MessageRouter
from .protocol.transport import UdpTransport
from .registry import (
    HttpRegistryClient,
    RegistryClient,
    RegistryError,
    RegistryUnavailable,
)
from .token import DEFAULT_TTL_SECONDS
from .values import b64u, b64u_decode
from .vault import Vault

log = logging.getLogger(__name__)


class NodeError(Exception):
    pass


class ConfigError(NodeError):
    pass


class PortInUse(NodeError):
    pass


@dataclass
class NodeConfig:
    vault_dir: str = "vault"
    listen_host: str = "127.0.0.1"
    listen_port: int = 0
    registry_url: str = "http://127.0.0.1:9300"
    bootstrap: list[str] = field(default_factory=list)
    token_ttl: int = DEFAULT_TTL_SECONDS
    transport: str = "udp"  # "udp" | "sim"
    admin_host: str = "127.0.0.1"
    admin_port: int = 0
    announce_interval: float = 5.0
    liveness_window: float = 15.0
    registry_cache_ttl: float = 60.0
    kdf_iterations: int = 210_000
    cache_capacity: int = 128
    webui_dir: str = ""

    def __post_init__(self):
        if self.admin_host not in ("127.0.0.1", "localhost", "::1"):
            raise ConfigError("the admin API binds loopback only")

    @classmethod
    def load(cls, path: str | Path) -> "NodeConfig":
        """Parse the key = value config format (one pair per line, # comments)."""
        values: dict[str, object] = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "bootstrap":
                values[key] = [v.strip() for v in value.split(",") if v.strip()]
            elif key in ("listen_port", "admin_port", "token_ttl", "kdf_iterations", "cache_capacity"):
                values[key] = int(value)
            elif key in ("announce_interval", "liveness_window", "registry_cache_ttl"):
                values[key] = float(value)
            else:
                values[key] = value
        try:
            return cls(**values)  # type: ignore[arg-type]
        except TypeError as exc:
            raise ConfigError(f"unknown config key: {exc}") from exc

    def dump(self, path: str | Path) -> None:
        lines = [
            f"vault_dir = {self.vault_dir}",
            f"listen_host = {self.listen_host}",
            f"listen_port = {self.listen_port}",
            f"registry_url = {self.registry_url}",
            f"bootstrap = {', '.join(self.bootstrap)}",
            f"token_ttl = {self.token_ttl}",
            f"transport = {self.transport}",
            f"admin_host = {self.admin_host}",
            f"admin_port = {self.admin_port}",
            f"announce_interval = {self.announce_interval}",
            f"liveness_window = {self.liveness_window}",
            f"registry_cache_ttl = {self.registry_cache_ttl}",
            f"kdf_iterations = {self.kdf_iterations}",
            f"cache_capacity = {self.cache_capacity}",
            f"webui_dir = {self.webui_dir}",
        ]
        Path(path).write_text("\n".join(lines) + "\n")


class Metrics:
    """Cumulative counters plus a bounded history of per-request records."""

    def __init__(self, history: int = 1000):
        self._lock = threading.Lock()
        self.requests_handled = 0
        self.verifications: dict[str, int] = {}
        self.registry_lookups = 0
        self.log_blocks = 0
        self._history: list[RequestRecord] = []
        self._history_cap = history

    def record(self, record: RequestRecord) -> None:
        with self._lock:
            self.requests_handled += 1
            for event, n in record.verifications.items():
                self.verifications[event] = self.verifications.get(event, 0) + n
            self.registry_lookups += record.registry_lookups
            self._history.append(record)
            del self._history[: -self._history_cap]

    def last_record(self) -> Optional[RequestRecord]:
        with self._lock:
            return self._history[-1] if self._history else None

    def records_since(self, handled_count: int) -> list[RequestRecord]:
        """Records appended after the first `handled_count` requests."""
        with self._lock:
            skip = max(0, len(self._history) - (self.requests_handled - handled_count))
            return list(self._history[skip:])

    def snapshot(self) -> dict:
        with self._lock:
            return {
                "requestsHandled": self.requests_handled,
                "verifications": dict(self.verifications),
                "registryLookups": self.registry_lookups,
                "logBlocks": self.log_blocks,
                "recent": [
                    {
                        "kind": r.kind,
                        "tokenTypes": r.token_types,
                        "verifications": r.verifications,
                        "totalVerifications": r.total_verifications(),
                        "registryLookups": r.registry_lookups,
                        "grantedFiles": r.granted_files,
                        "outcome": r.outcome,
                    }
                    for r in self._history[-50:]
                ],
            }


class Node:
    """Everything behind one peer: vault, wallet, endpoint, chains, metrics."""

    def __init__(
        self,
        config: NodeConfig,
        transport=None,
        registry: Optional[RegistryClient] = None,
        clock: Callable[[], float] = time.time,
    ):
        self.config = config
        self.clock = clock
        self.vault = Vault(config.vault_dir)
        self.identity: Optional[NodeIdentity] = None
        self.trusted = TrustedIssuerList()
        self.credentials: list[dict] = []  # wallet: received credential JSON
        self.metrics = Metrics()
        self.registry = registry or HttpRegistryClient(
            config.registry_url, cache_ttl=config.registry_cache_ttl
        )
        self._transport = transport
        self.endpoint: Optional[PeerEndpoint] = None
        self.router: Optional[MessageRouter] = None
        self.client: Optional[VaultClient] = None
        self.chain: Optional[ChainStore] = None
        self._chain_lock = threading.Lock()
        self._log_queue: "queue.Queue[Optional[tuple[str, list[str]]]]" = queue.Queue()
        self._log_worker: Optional[threading.Thread] = None
        self._log_pending: dict[str, "ThreadSafeBox"] = {}
        self._session_tokens: dict[str, str] = {}  # peer fp -> cached token
        self._announcer: Optional[threading.Thread] = None
        self._stop_event = threading.Event()
        self._did_registered = False

    # -- lifecycle -------------------------------------------------------------

    @classmethod
    def init(cls, config: NodeConfig, password: str, registry: Optional[RegistryClient] = None,
             transport=None, clock: Callable[[], float] = time.time) -> "Node":
        """First launch: create the vault, mint an identity, register its DID."""
        vault = Vault.init(config.vault_dir, password, iterations=config.kdf_iterations)
        vault.unlock(password)
        identity = NodeIdentity.generate()
        node = cls(config, transport=transport, registry=registry, clock=clock)
        node.vault = vault
        node.identity = identity
        node.chain = ChainStore(identity.transport_sign.public_bytes())
        node._register_did()
        node._save_wallet()
        vault.lock()
        return node

    def _register_did(self) -> None:
        assert self.identity is not None
        try:
            self.registry.register_did(self.identity.did_document(updated_at=self.clock()))
            self._did_registered = True
        except (RegistryUnavailable, RegistryError) as exc:
            log.warning("DID registration deferred, registry unreachable: %s", exc)
            self._did_registered = False

    def unlock(self, password: str) -> None:
        self.vault.unlock(password)
        self._load_wallet()
        if not self._did_registered:
            self._register_did()

    def lock(self) -> None:
        if self.vault.unlocked:
            self._save_wallet()
            self.vault.lock()

    def start_network(self) -> None:
        """Bring up the endpoint, router, and periodic announcements."""
        assert self.identity is not None, "unlock before starting the network"
        if self._transport is None:
            if self.config.transport != "udp":
                raise NodeError("simulated transport must be injected by the harness")
            try:
                self._transport = UdpTransport(self.config.listen_host, self.config.listen_port)
            except OSError as exc:
                raise PortInUse(
                    f"cannot bind {self.config.listen_host}:{self.config.listen_port}: {exc}"
                ) from exc
        self.endpoint = PeerEndpoint(
            self.identity,
            self._transport,
            liveness_window=self.config.liveness_window,
            clock=self.clock,
        )
        self.router = MessageRouter(self.endpoint, server=self._serve_message)
        self.endpoint.on_blob(BLOB_LOG, self._on_log_blob)
        self.endpoint.on_blob(BLOB_CREDENTIAL, self._on_credential_blob)
        self.client = VaultClient(
            self.router, cache=FileCache(self.config.cache_capacity), clock=self.clock
        )
        self.endpoint.start()
        self._stop_event.clear()
        self._announcer = threading.Thread(target=self._announce_loop, daemon=True)
        self._announcer.start()
        self._log_worker = threading.Thread(target=self._log_loop, daemon=True)
        self._log_worker.start()

    def stop_network(self) -> None:
        self._stop_event.set()
        if self._log_worker is not None:
            self._log_queue.put(None)
            self._log_worker.join(timeout=10)
            self._log_worker = None
        if self._announcer is not None:
            self._announcer.join(timeout=2)
            self._announcer = None
        if self.endpoint is not None:
            self.endpoint.stop()
            self.endpoint = None
        self.router = None
        self.client = None
        self._transport = None

    def shutdown(self) -> None:
        """Clean stop: network down, chains flushed, vault locked."""
        self.stop_network()
        self.lock()

    # -- wallet persistence ------------------------------------------------------

    def _save_wallet(self) -> None:
        assert self.identity is not None
        wallet = {
            "identity": self.identity.to_dict(),
            "trusted": self.trusted.to_list(),
            "didRegistered": self._did_registered,
            "credentials": self.credentials,
            "chain": json.loads(self.chain.export_json()) if self.chain else None,
        }
        self.vault.wallet_put(wallet)

    def _load_wallet(self) -> None:
        wallet = self.vault.wallet_get()
        if not wallet:
            raise NodeError("vault has no wallet; run init first")
        self.identity = NodeIdentity.from_dict(wallet["identity"])
        self.trusted = TrustedIssuerList.from_list(wallet.get("trusted", ["self"]))
        self.credentials = wallet.get("credentials", [])
        self._did_registered = bool(wallet.get("didRegistered"))
        chain_raw = wallet.get("chain")
        if chain_raw:
            self.chain = ChainStore.import_json(json.dumps(chain_raw))
        else:
            self.chain = ChainStore(self.identity.transport_sign.public_bytes())

    # -- trust management -----------------------------------------------------------

    def grant_trust(self, issuer_id: str) -> None:
        self.trusted = self.trusted.grant(issuer_id)
        self._save_wallet()

    def revoke_trust(self, issuer_id: str) -> None:
        self.trusted = self.trusted.revoke(issuer_id)
        self._save_wallet()

    # -- host side ---------------------------------------------------------------

    def _host_context(self) -> HostContext:
        assert self.identity is not None
        return HostContext(
            vault=self.vault,
            identity=self.identity,
            trusted=self.trusted,
            registry=self.registry,
            clock=self.clock,
            token_ttl=self.config.token_ttl,
        )

    def _serve_message(self, peer_fp: str, message: Message) -> Optional[Message]:
        if not self.vault.unlocked:
            return None  # locked hosts stay silent
        if isinstance(message, AccessibleFilesRequest):
            grant = handle_accessible_files_request(message, peer_fp, self._host_context())
            self.metrics.record(grant.record)
            # Countersigning happens asynchronously; the response is not
            # held back waiting for the requester's log signature.
            self._log_queue.put((peer_fp, grant.granted_paths))
            return grant.response
        if isinstance(message, FileRequest):
            reply, record = handle_file_request(message, peer_fp, self._host_context())
            self.metrics.record(record)
            return reply
        return None

    # -- access logging (host proposes, requester countersigns) --------------------

    def _log_loop(self) -> None:
        """Work grants off one at a time; chain appends stay ordered."""
        while True:
            item = self._log_queue.get()
            if item is None:
                return
            self._log_grant(*item)

    def _log_grant(self, requester_fp: str, granted_paths: list[str]) -> None:
        assert self.identity is not None and self.chain is not None
        for attempt in range(3):
            try:
                tip_reply = self._log_request(requester_fp, {"type": "tip_request"})
                requester_tip = ChainTip(
                    prev_hash=tip_reply["prevHash"], next_seq=int(tip_reply["nextSeq"])
                )
                with self._chain_lock:
                    host_tip = self.chain.tip()
                block = propose_block(
                    self.identity.transport_sign,
                    b64u_decode(tip_reply["requesterKey"]),
                    granted_paths,
                    host_tip,
                    requester_tip,
                    timestamp=self.clock(),
                )
                accept = self._log_request(
                    requester_fp, {"type": "propose", "block": block.to_dict()}
                )
                if accept.get("type") != "accept":
                    continue  # stale tip; retry from scratch
                signed = dc_replace(block, requester_signature=b64u_decode(accept["signature"]))
                digest = signed.block_hash().encode("ascii")
                if not verify_signature(signed.requester_public_key,
                                        signed.requester_signature, digest):
                    log.warning("requester returned an invalid countersignature")
                    return
                with self._chain_lock:
                    self.chain.append(signed)
                    self.metrics.log_blocks += 1
                self._save_wallet()
                return
            except Exception as exc:  # noqa: BLE001
                log.debug("log exchange attempt %d failed: %s", attempt, exc)
                time.sleep(0.05 * (attempt + 1))
        log.warning("giving up on access-log countersign with %s", requester_fp)

    def _log_request(self, peer_fp: str, body: dict, timeout: float = 10.0) -> dict:
        assert self.endpoint is not None
        xid = uuid.uuid4().hex
        box = ThreadSafeBox()
        self._log_pending[xid] = box
        try:
            payload = json.dumps({**body, "xid": xid}).encode("utf-8")
            self.endpoint.send_blob(peer_fp, BLOB_LOG, payload)
            result = box.wait(timeout)
            if result is None:
                raise NodeError(f"log exchange timed out ({body.get('type')})")
            return result
        finally:
            self._log_pending.pop(xid, None)

    def _on_log_blob(self, peer_fp: str, body: bytes) -> None:
        try:
            message = json.loads(body)
        except json.JSONDecodeError:
            return
        kind = message.get("type")
        xid = message.get("xid", "")
        if kind in ("tip", "accept", "reject"):
            box = self._log_pending.get(xid)
            if box is not None:
                box.put(message)
            return
        if kind == "tip_request":
            self._reply_log(peer_fp, self._tip_reply(xid))
            return
        if kind == "propose":
            self._reply_log(peer_fp, self._countersign_reply(message, xid))

    def _tip_reply(self, xid: str) -> dict:
        assert self.chain is not None and self.identity is not None
        with self._chain_lock:
            tip = self.chain.tip()
        return {
            "type": "tip",
            "xid": xid,
            "prevHash": tip.prev_hash,
            "nextSeq": tip.next_seq,
            "requesterKey": b64u(self.identity.transport_sign.public_bytes()),
        }

    def _countersign_reply(self, message: dict, xid: str) -> dict:
        assert self.chain is not None and self.identity is not None
        try:
            block = AccessLogBlock.from_dict(message["block"])
        except Exception:
            return {"type": "reject", "xid": xid, "reason": "undecodable block"}
        with self._chain_lock:
            tip = self.chain.tip()
            if (block.prev_hash_requester != tip.prev_hash
                    or block.seq_requester != tip.next_seq):
                return {"type": "reject", "xid": xid, "reason": "stale tip"}
            try:
                signed = countersign(block, self.identity.transport_sign)
                self.chain.append(signed)
            except Exception as exc:  # invalid host signature and friends
                return {"type": "reject", "xid": xid, "reason": str(exc)}
        self._save_wallet()
        return {"type": "accept", "xid": xid,
                "signature": b64u(signed.requester_signature)}

    def _reply_log(self, peer_fp: str, body: dict) -> None:
        assert self.endpoint is not None
        try:
            self.endpoint.send_blob(peer_fp, BLOB_LOG, json.dumps(body).encode("utf-8"))
        except Exception as exc:  # noqa: BLE001
            log.debug("log reply to %s failed: %s", peer_fp, exc)

    # -- requester side ------------------------------------------------------------

    def wallet_tokens(self) -> tuple[AccessToken, ...]:
        """Everything presentable from the wallet, bound to our fingerprint."""
        assert self.identity is not None
        tokens: list[AccessToken] = []
        vcs: list[VerifiableCredential] = []
        for raw in self.credentials:
            if raw.get("kind") == "attestation":
                tokens.append(Attestation.from_dict(raw["data"]))
            elif raw.get("kind") == "credential":
                vcs.append(VerifiableCredential.from_dict(raw["data"]))
        if vcs:
            tokens.append(present(vcs, self.identity, self.identity.fingerprint))
        return tuple(tokens)

    def store_credential(self, kind: str, data: dict) -> None:
        self.credentials.append({"kind": kind, "data": data})
        self._save_wallet()

    def remote_tree(self, peer_fp: str, tokens: Optional[tuple[AccessToken, ...]] = None):
        """Run the accessible-files flow; caches the session token per peer."""
        assert self.client is not None
        tokens = self.wallet_tokens() if tokens is None else tokens
        session_token, tree = self.client.accessible_files(peer_fp, tokens)
        self._session_tokens[peer_fp] = session_token
        return session_token, tree

    def remote_fetch(self, peer_fp: str, path: str) -> bytes:
        """Fetch one file, transparently refreshing an expired session token."""
        assert self.client is not None
        token = self._session_tokens.get(peer_fp)
        if token is None:
            token, _ = self.remote_tree(peer_fp)
        data, renewed = self.client.fetch_with_retry(
            peer_fp, path, token, refresh=lambda: self.remote_tree(peer_fp)[0]
        )
        self._session_tokens[peer_fp] = renewed
        return data

    def issue_sic_for_peer(self, peer_fp: str, claims: dict) -> VerifiableCredential:
        """Issue a self-issued credential to a discovered peer and deliver it."""
        assert self.identity is not None and self.endpoint is not None
        peer = self.endpoint.peers.get(peer_fp)
        if not peer.did or not peer.did_public:
            raise NodeError(f"peer {peer_fp} has not announced a DID")
        sic = issue_sic(peer.did, peer.did_public, claims, self.identity)
        payload = json.dumps({"type": "credential", "kind": "credential",
                              "data": sic.to_dict()}).encode("utf-8")
        self.endpoint.send_blob(peer_fp, BLOB_CREDENTIAL, payload)
        return sic

    def _on_credential_blob(self, peer_fp: str, body: bytes) -> None:
        try:
            message = json.loads(body)
            VerifiableCredential.from_dict(message["data"])  # structural check
        except Exception:
            return
        self.store_credential("credential", message["data"])

    # -- discovery -------------------------------------------------------------------

    def _announce_loop(self) -> None:
        while not self._stop_event.is_set():
            self._announce_once()
            self._stop_event.wait(self.config.announce_interval)

    def _announce_once(self) -> None:
        if self.endpoint is None:
            return
        targets: set = set()
        for entry in self.config.bootstrap:
            host, _, port = entry.rpartition(":")
            try:
                targets.add((host, int(port)))
            except ValueError:
                continue
        for peer in self.endpoint.peers.live(self.clock()):
            targets.add(peer.address)
        for address in targets:
            try:
                self.endpoint.announce_to(address)
            except Exception:  # noqa: BLE001
                continue

    # -- log inspection -----------------------------------------------------------------

    def chain_report(self) -> dict:
        assert self.chain is not None and self.identity is not None
        with self._chain_lock:
            blocks = list(self.chain.blocks)
        report = verify_chain(blocks, self.identity.transport_sign.public_bytes())
        return {
            "ok": report.ok,
            "length": report.length,
            "error": None if report.ok else {
                "position": report.error.position,
                "reason": report.error.reason,
            },
        }


class ThreadSafeBox:
    """One-shot handoff between the log reply handler and a waiting thread."""

    def __init__(self):
        self._event = threading.Event()
        self._value: Optional[dict] = None

    def put(self, value: dict) -> None:
        self._value = value
        self._event.set()

    def wait(self, timeout: float) -> Optional[dict]:
        if self._event.wait(timeout):
            return self._value
        return None
