"""Loopback HTTP/JSON admin API: the surface the CLI and web UI drive.

Bound to loopback only; the OS user boundary is the trust boundary, so
there is no additional authentication. Data endpoints answer 401 while the
vault is locked. Policy writes validate through the policy parser before
anything persists. No private key, password, or derived key ever appears
in a response.

Endpoints (all JSON unless noted):

    GET    /status                     node identity and state
    POST   /unlock {password}          POST /lock
    GET    /peers                      live peers
    GET    /tree                       local entries
    GET    /file?path=                 local file bytes (octet-stream)
    PUT    /file?path=                 local write (body = raw bytes)
    DELETE /file?path=
    GET    /policy?path=               {policy, version}
    PUT    /policy {path, selector, node}
    POST   /access-check {path, mode, tokens, fingerprint}
    GET    /remote/{fp}/tree           accessible-files flow against a peer
    GET    /remote/{fp}/file?path=     on-demand fetch (cached)
    POST   /sic {peer, claims}         issue + deliver a self-issued credential
    GET    /wallet                     stored credentials (public material)
    GET    /trust  POST /trust {issuer}  DELETE /trust/{issuer}
    GET    /log    GET /log/verify     GET /log/audit?seq=&path=
    GET    /metrics
    GET    /ui/... static web UI files when configured
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, unquote, urlparse

from .accesslog import audit
from .credential import (
    Attestation,
    CredentialError,
    VerifiablePresentation,
    verify_attestation,
    verify_presentation,
)
from .node import Node, NodeError
from .policy import (
    MalformedPolicy,
    Mode,
    UnknownPath,
    node_from_dict,
    policy_to_dict,
)
from .protocol.client import FetchError
from .protocol.messages import _token_from_dict
from .protocol.router import PeerUnreachable, RequestTimeout
from .registry import RegistryUnavailable
from .vault import FileTooLarge, InvalidPath, Locked, VaultError
from . import token as token_mod

_CONTENT_TYPES = {
    ".html": "text/html", ".js": "text/javascript", ".css": "text/css",
    ".map": "application/json", ".svg": "image/svg+xml", ".ico": "image/x-icon",
}


class AdminApiServer:
    def __init__(self, node: Node, host: str = "127.0.0.1", port: int = 0):
        self.node = node
        handler = type("Handler", (_AdminHandler,), {"node": node})
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def port(self) -> int:
        return self._server.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)


class _AdminHandler(BaseHTTPRequestHandler):
    node: Node

    # -- plumbing -------------------------------------------------------------

    def log_message(self, fmt, *args):
        pass

    def _json(self, code: int, payload) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _bytes(self, code: int, payload: bytes, content_type: str = "application/octet-stream") -> None:
        self.send_response(code)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _error(self, code: int, message: str) -> None:
        self._json(code, {"error": message})

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        if not length:
            return {}
        return json.loads(self.rfile.read(length))

    def _raw_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(length) if length else b""

    def _query(self) -> dict[str, str]:
        parsed = parse_qs(urlparse(self.path).query)
        return {k: v[0] for k, v in parsed.items()}

    def _route(self) -> str:
        return urlparse(self.path).path

    # -- dispatch ----------------------------------------------------------------

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_PUT(self):
        self._dispatch("PUT")

    def do_DELETE(self):
        self._dispatch("DELETE")

    def _dispatch(self, method: str) -> None:
        route = self._route()
        try:
            if self._try_static(method, route):
                return
            handler = self._find_handler(method, route)
            if handler is None:
                self._error(404, f"no such endpoint: {method} {route}")
                return
            handler()
        except Locked:
            self._error(401, "vault is locked")
        except MalformedPolicy as exc:
            self._error(400, f"malformed policy: {exc}")
        except (UnknownPath, FileNotFoundError) as exc:
            self._error(404, f"unknown path: {exc}")
        except (InvalidPath, FileTooLarge, CredentialError, NodeError, ValueError, KeyError) as exc:
            self._error(400, f"{type(exc).__name__}: {exc}")
        except (PeerUnreachable, RequestTimeout, FetchError, RegistryUnavailable) as exc:
            self._error(502, f"{type(exc).__name__}: {exc}")
        except VaultError as exc:
            self._error(500, f"{type(exc).__name__}: {exc}")
        except BrokenPipeError:
            pass

    def _find_handler(self, method: str, route: str):
        if route.startswith("/remote/"):
            parts = route.split("/")
            if len(parts) == 4 and method == "GET":
                peer_fp, leaf = parts[2], parts[3]
                if leaf == "tree":
                    return lambda: self._remote_tree(peer_fp)
                if leaf == "file":
                    return lambda: self._remote_file(peer_fp)
            return None
        if route.startswith("/trust/") and method == "DELETE":
            issuer = unquote(route[len("/trust/"):])
            return lambda: self._trust_delete(issuer)
        exact = {
            ("GET", "/status"): self._status,
            ("POST", "/unlock"): self._unlock,
            ("POST", "/lock"): self._lock,
            ("GET", "/peers"): self._peers,
            ("GET", "/tree"): self._tree,
            ("GET", "/file"): self._file_get,
            ("PUT", "/file"): self._file_put,
            ("DELETE", "/file"): self._file_delete,
            ("GET", "/policy"): self._policy_get,
            ("PUT", "/policy"): self._policy_put,
            ("POST", "/access-check"): self._access_check,
            ("POST", "/sic"): self._sic,
            ("GET", "/wallet"): self._wallet,
            ("GET", "/trust"): self._trust_list,
            ("POST", "/trust"): self._trust_add,
            ("GET", "/log"): self._log_list,
            ("GET", "/log/verify"): self._log_verify,
            ("GET", "/log/audit"): self._log_audit,
            ("GET", "/log/export"): self._log_export,
            ("GET", "/metrics"): self._metrics,
        }
        return exact.get((method, route))

    def _try_static(self, method: str, route: str) -> bool:
        webui = self.node.config.webui_dir
        if not webui or method != "GET":
            return False
        if route == "/" or route == "/ui":
            route = "/ui/index.html"
        if not route.startswith("/ui/"):
            return False
        rel = route[len("/ui/"):] or "index.html"
        base = Path(webui).resolve()
        target = (base / rel).resolve()
        if not str(target).startswith(str(base)) or not target.is_file():
            self._error(404, "no such file")
            return True
        ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
        self._bytes(200, target.read_bytes(), ctype)
        return True

    # -- endpoints ------------------------------------------------------------------

    def _status(self):
        node = self.node
        identity = node.identity
        self._json(200, {
            "unlocked": node.vault.unlocked,
            "fingerprint": identity.fingerprint if identity else None,
            "did": identity.did if identity else None,
            "didRegistered": node._did_registered,
            "address": list(node.endpoint.address) if node.endpoint else None,
            "peerCount": len(node.endpoint.live_peers()) if node.endpoint else 0,
        })

    def _unlock(self):
        body = self._body()
        try:
            self.node.unlock(str(body.get("password", "")))
        except VaultError as exc:
            self._error(401, f"{type(exc).__name__}: {exc}")
            return
        self._json(200, {"ok": True})

    def _lock(self):
        self.node.lock()
        self._json(200, {"ok": True})

    def _peers(self):
        node = self.node
        peers = node.endpoint.live_peers() if node.endpoint else []
        self._json(200, {
            "peers": [
                {
                    "fingerprint": p.fingerprint,
                    "did": p.did,
                    "address": list(p.address),
                    "lastSeen": p.last_seen,
                }
                for p in peers
            ]
        })

    def _tree(self):
        self._require_unlocked()
        entries = self.node.vault.entries()
        self._json(200, {
            "entries": [
                {"path": e.path, "kind": e.kind, "size": e.size} for e in entries
            ]
        })

    def _file_get(self):
        self._require_unlocked()
        path = self._query().get("path", "")
        self._bytes(200, self.node.vault.get(path))

    def _file_put(self):
        self._require_unlocked()
        path = self._query().get("path", "")
        entry = self.node.vault.put(path, self._raw_body())
        self._json(200, {"path": entry.path, "size": entry.size})

    def _file_delete(self):
        self._require_unlocked()
        self.node.vault.delete(self._query().get("path", ""))
        self._json(200, {"ok": True})

    def _policy_get(self):
        self._require_unlocked()
        path = self._query().get("path", "")
        policy, version = self.node.vault.get_policy(path)
        self._json(200, {"path": path, "policy": policy_to_dict(policy), "version": version})

    def _policy_put(self):
        self._require_unlocked()
        body = self._body()
        path = body.get("path", "")
        selector = body.get("selector", "combined")
        raw_node = body.get("node")
        node = None if raw_node is None else node_from_dict(raw_node)
        version = self.node.vault.set_policy(path, selector, node)
        policy, _ = self.node.vault.get_policy(path)
        self._json(200, {"path": path, "policy": policy_to_dict(policy), "version": version})

    def _access_check(self):
        """Evaluate an access decision exactly as the wire path would."""
        self._require_unlocked()
        node = self.node
        body = self._body()
        path = body.get("path", "")
        mode = Mode(body.get("mode", "read"))
        fingerprint = body.get("fingerprint", "")
        bags = set()
        for raw in body.get("tokens", []):
            supplied = _token_from_dict(raw)
            try:
                if isinstance(supplied, Attestation):
                    bags.add(verify_attestation(
                        supplied, fingerprint, node.trusted,
                        self_ids=frozenset({node.identity.did, node.identity.fingerprint}),
                    ))
                elif isinstance(supplied, VerifiablePresentation):
                    bags.update(verify_presentation(
                        supplied, fingerprint, node.registry, node.trusted, own=node.identity,
                    ))
            except (CredentialError, RegistryUnavailable):
                continue
        decision = node.vault.check_access(path, mode, frozenset(bags), me=node.identity.did)
        self._json(200, {
            "path": path,
            "mode": mode.value,
            "granted": decision.granted,
            "satisfyingCredentialIds": sorted(decision.satisfying_credential_ids),
        })

    def _remote_tree(self, peer_fp: str):
        self._require_unlocked()
        token_str, tree = self.node.remote_tree(peer_fp)
        payload = token_mod.SessionToken(token_str).payload
        self._json(200, {
            "peer": peer_fp,
            "tree": tree.to_dict(),
            "files": tree.file_paths(),
            "sessionToken": token_str,
            "expiresAt": payload["exp"],
        })

    def _remote_file(self, peer_fp: str):
        self._require_unlocked()
        path = self._query().get("path", "")
        self._bytes(200, self.node.remote_fetch(peer_fp, path))

    def _sic(self):
        self._require_unlocked()
        body = self._body()
        peer_fp = body.get("peer", "")
        claims_raw = body.get("claims", {})
        from .values import from_wire

        claims = {k: from_wire(v) for k, v in claims_raw.items()}
        sic = self.node.issue_sic_for_peer(peer_fp, claims)
        self._json(200, {"credential": sic.to_dict()})

    def _wallet(self):
        self._require_unlocked()
        self._json(200, {"credentials": self.node.credentials})

    def _trust_list(self):
        self._json(200, {"trusted": self.node.trusted.to_list()})

    def _trust_add(self):
        self._require_unlocked()
        issuer = str(self._body().get("issuer", ""))
        if not issuer:
            self._error(400, "issuer required")
            return
        self.node.grant_trust(issuer)
        self._json(200, {"trusted": self.node.trusted.to_list()})

    def _trust_delete(self, issuer: str):
        self._require_unlocked()
        self.node.revoke_trust(issuer)
        self._json(200, {"trusted": self.node.trusted.to_list()})

    def _log_list(self):
        self._require_unlocked()
        node = self.node
        with node._chain_lock:
            blocks = list(node.chain.blocks) if node.chain else []
        self._json(200, {
            "blocks": [
                {
                    "seq": i,
                    "hash": b.block_hash(),
                    "timestamp": b.timestamp,
                    "hostSeq": b.seq_host,
                    "requesterSeq": b.seq_requester,
                    "insertedPaths": b.bloom.n,
                    "fpEstimate": b.bloom.fp_estimate(),
                    "dualSigned": b.dual_signed(),
                }
                for i, b in enumerate(blocks)
            ]
        })

    def _log_verify(self):
        self._require_unlocked()
        self._json(200, self.node.chain_report())

    def _log_export(self):
        self._require_unlocked()
        node = self.node
        with node._chain_lock:
            text = node.chain.export_json() if node.chain else "{}"
        self._bytes(200, text.encode("utf-8"), "application/json")

    def _log_audit(self):
        self._require_unlocked()
        query = self._query()
        seq = int(query.get("seq", "-1"))
        path = query.get("path", "")
        node = self.node
        with node._chain_lock:
            blocks = list(node.chain.blocks) if node.chain else []
        if not 0 <= seq < len(blocks):
            self._error(404, f"no block at position {seq}")
            return
        verdict = audit(blocks[seq], path)
        self._json(200, {
            "seq": seq,
            "path": verdict.path,
            "present": verdict.present,
            "fpEstimate": verdict.fp_estimate,
            "insertedCount": verdict.inserted_count,
        })

    def _metrics(self):
        node = self.node
        payload = node.metrics.snapshot()
        payload["registryCounters"] = node.registry.lookup_counter()
        if node.endpoint is not None:
            payload["bytesSent"] = node.endpoint.bytes_sent
            payload["bytesReceived"] = node.endpoint.bytes_received
        self._json(200, payload)

    def _require_unlocked(self):
        if not self.node.vault.unlocked:
            raise Locked("vault is locked")
