"""Mock verifiable data registry: DID documents and accredited issuers.

Stands in for a hosted DID registry and trusted-issuers registry so that
presentation verification has a resolvable key source. The same store can
be used through an in-process client (deterministic tests) or over a small
HTTP/JSON service (multi-node runs); both clients expose identical methods
and per-instance lookup counters.

HTTP surface:
    GET  /did/{id}   -> DID document JSON          (404 unknown)
    PUT  /did/{id}   -> register/replace document  (400 malformed)
    GET  /tir/{did}  -> {"did": ..., "accredited": bool}
    POST /tir        -> accredit {"did": ..., "accreditation": label}
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional
from urllib.parse import urlparse

import requests

from .values import b64u, b64u_decode


class RegistryError(Exception):
    """Base class for registry errors."""


class NotFound(RegistryError):
    """DID is not registered."""


class MalformedDocument(RegistryError):
    """Document fails structural validation."""


class UnresolvableDID(RegistryError):
    """Accreditation refers to a DID absent from the DID store."""


class RegistryUnavailable(RegistryError):
    """The registry service cannot be reached."""


@dataclass(frozen=True)
class DIDDocument:
    """Resolvable identifier with one or more public verification keys."""

    did: str
    public_keys: tuple[tuple[str, bytes], ...]
    updated_at: float = 0.0

    def __post_init__(self):
        if not self.did:
            raise MalformedDocument("did must be non-empty")
        if not self.public_keys:
            raise MalformedDocument("document needs at least one public key")
        key_ids = [kid for kid, _ in self.public_keys]
        if len(set(key_ids)) != len(key_ids):
            raise MalformedDocument("key ids must be unique within the document")

    def key_bytes(self) -> list[bytes]:
        return [raw for _, raw in self.public_keys]

    def to_dict(self) -> dict:
        return {
            "did": self.did,
            "publicKeys": [{"id": kid, "key": b64u(raw)} for kid, raw in self.public_keys],
            "updatedAt": self.updated_at,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DIDDocument":
        try:
            keys = tuple((k["id"], b64u_decode(k["key"])) for k in raw["publicKeys"])
            return cls(did=raw["did"], public_keys=keys, updated_at=float(raw.get("updatedAt", 0.0)))
        except MalformedDocument:
            raise
        except Exception as exc:
            raise MalformedDocument(f"bad DID document: {exc}") from exc


@dataclass(frozen=True)
class IssuerRecord:
    did: str
    accreditation: str = "accredited"


class RegistryStore:
    """In-memory DID + issuer store behind a single write gate."""

    def __init__(self):
        self._lock = threading.Lock()
        self._dids: dict[str, DIDDocument] = {}
        self._issuers: dict[str, IssuerRecord] = {}

    def register_did(self, doc: DIDDocument) -> None:
        with self._lock:
            self._dids[doc.did] = doc

    def resolve_did(self, did: str) -> DIDDocument:
        with self._lock:
            doc = self._dids.get(did)
        if doc is None:
            raise NotFound(did)
        return doc

    def accredit_issuer(self, record: IssuerRecord) -> None:
        with self._lock:
            if record.did not in self._dids:
                raise UnresolvableDID(record.did)
            self._issuers[record.did] = record

    def is_trusted_issuer(self, did: str) -> bool:
        with self._lock:
            return did in self._issuers


@dataclass
class LookupCounter:
    """Registry traffic attributable to verification, by call type.

    `resolve` counts DID resolutions (the per-presentation overhead of
    interest); `tir` counts accreditation checks separately.
    """

    resolve: int = 0
    tir: int = 0

    def snapshot(self) -> dict[str, int]:
        return {"resolve": self.resolve, "tir": self.tir}


class RegistryClient:
    """Common behaviour for both client flavours: caching and counting."""

    def __init__(self, cache_ttl: float = 60.0):
        self._cache_ttl = cache_ttl
        self._cache: dict[str, tuple[float, DIDDocument]] = {}
        self.counter = LookupCounter()

    def lookup_counter(self) -> dict[str, int]:
        return self.counter.snapshot()

    def resolve_did(self, did: str) -> DIDDocument:
        if self._cache_ttl > 0:
            hit = self._cache.get(did)
            if hit is not None and time.monotonic() - hit[0] < self._cache_ttl:
                return hit[1]
        self.counter.resolve += 1
        doc = self._resolve(did)
        if self._cache_ttl > 0:
            self._cache[did] = (time.monotonic(), doc)
        return doc

    def is_trusted_issuer(self, did: str) -> bool:
        self.counter.tir += 1
        return self._is_trusted(did)

    # Subclass hooks -------------------------------------------------------

    def _resolve(self, did: str) -> DIDDocument:
        raise NotImplementedError

    def _is_trusted(self, did: str) -> bool:
        raise NotImplementedError

    def register_did(self, doc: DIDDocument) -> None:
        raise NotImplementedError

    def accredit_issuer(self, record: IssuerRecord) -> None:
        raise NotImplementedError


class InProcessRegistryClient(RegistryClient):
    """Client bound directly to a store instance; no network involved."""

    def __init__(self, store: RegistryStore, cache_ttl: float = 60.0):
        super().__init__(cache_ttl)
        self._store = store
        self.available = True

    def _resolve(self, did: str) -> DIDDocument:
        if not self.available:
            raise RegistryUnavailable("registry marked unavailable")
        return self._store.resolve_did(did)

    def _is_trusted(self, did: str) -> bool:
        if not self.available:
            raise RegistryUnavailable("registry marked unavailable")
        return self._store.is_trusted_issuer(did)

    def register_did(self, doc: DIDDocument) -> None:
        if not self.available:
            raise RegistryUnavailable("registry marked unavailable")
        self._store.register_did(doc)

    def accredit_issuer(self, record: IssuerRecord) -> None:
        if not self.available:
            raise RegistryUnavailable("registry marked unavailable")
        self._store.accredit_issuer(record)


class HttpRegistryClient(RegistryClient):
    """HTTP client for a standalone registry service. Fails fast when down."""

    def __init__(self, base_url: str, cache_ttl: float = 60.0, timeout: float = 5.0):
        super().__init__(cache_ttl)
        self.base_url = base_url.rstrip("/")
        self._timeout = timeout

    def _request(self, method: str, path: str, body: Optional[dict] = None) -> requests.Response:
        try:
            return requests.request(
                method, self.base_url + path, json=body, timeout=self._timeout
            )
        except requests.RequestException as exc:
            raise RegistryUnavailable(str(exc)) from exc

    def _resolve(self, did: str) -> DIDDocument:
        resp = self._request("GET", f"/did/{did}")
        if resp.status_code == 404:
            raise NotFound(did)
        if resp.status_code != 200:
            raise RegistryUnavailable(f"unexpected status {resp.status_code}")
        return DIDDocument.from_dict(resp.json())

    def _is_trusted(self, did: str) -> bool:
        resp = self._request("GET", f"/tir/{did}")
        if resp.status_code != 200:
            raise RegistryUnavailable(f"unexpected status {resp.status_code}")
        return bool(resp.json().get("accredited"))

    def register_did(self, doc: DIDDocument) -> None:
        resp = self._request("PUT", f"/did/{doc.did}", doc.to_dict())
        if resp.status_code == 400:
            raise MalformedDocument(resp.json().get("error", "malformed"))
        if resp.status_code != 200:
            raise RegistryUnavailable(f"unexpected status {resp.status_code}")

    def accredit_issuer(self, record: IssuerRecord) -> None:
        resp = self._request("POST", "/tir", {"did": record.did, "accreditation": record.accreditation})
        if resp.status_code == 404:
            raise UnresolvableDID(record.did)
        if resp.status_code != 200:
            raise RegistryUnavailable(f"unexpected status {resp.status_code}")


class _RegistryHandler(BaseHTTPRequestHandler):
    store: RegistryStore  # assigned by the service

    def _send(self, code: int, payload: dict) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b"{}"
        return json.loads(raw)

    def do_GET(self):
        path = urlparse(self.path).path
        if path.startswith("/did/"):
            did = path[len("/did/"):]
            try:
                self._send(200, self.store.resolve_did(did).to_dict())
            except NotFound:
                self._send(404, {"error": "unknown DID"})
            return
        if path.startswith("/tir/"):
            did = path[len("/tir/"):]
            self._send(200, {"did": did, "accredited": self.store.is_trusted_issuer(did)})
            return
        self._send(404, {"error": "no such endpoint"})

    def do_PUT(self):
        path = urlparse(self.path).path
        if path.startswith("/did/"):
            try:
                doc = DIDDocument.from_dict(self._read_body())
            except (MalformedDocument, json.JSONDecodeError) as exc:
                self._send(400, {"error": str(exc)})
                return
            self.store.register_did(doc)
            self._send(200, {"ok": True})
            return
        self._send(404, {"error": "no such endpoint"})

    def do_POST(self):
        path = urlparse(self.path).path
        if path == "/tir":
            try:
                body = self._read_body()
                record = IssuerRecord(did=body["did"], accreditation=body.get("accreditation", "accredited"))
            except (KeyError, json.JSONDecodeError) as exc:
                self._send(400, {"error": str(exc)})
                return
            try:
                self.store.accredit_issuer(record)
            except UnresolvableDID:
                self._send(404, {"error": "DID not resolvable"})
                return
            self._send(200, {"ok": True})
            return
        self._send(404, {"error": "no such endpoint"})

    def log_message(self, fmt, *args):
        pass


class RegistryService:
    """Standalone HTTP wrapper around a RegistryStore."""

    def __init__(self, store: Optional[RegistryStore] = None, host: str = "127.0.0.1", port: int = 0):
        self.store = store or RegistryStore()
        handler = type("Handler", (_RegistryHandler,), {"store": self.store})
        self._server = ThreadingHTTPServer((host, port), handler)
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def main() -> None:
    """Run a standalone registry: python3 -m peervault.registry [--port N]."""
    import argparse
    import signal

    parser = argparse.ArgumentParser(description="mock DID + trusted-issuer registry")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9300)
    args = parser.parse_args()
    service = RegistryService(host=args.host, port=args.port)
    service.start()
    print(f"registry listening at {service.url}", flush=True)
    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *a: stop.set())
    signal.signal(signal.SIGTERM, lambda *a: stop.set())
    stop.wait()
    service.stop()


if __name__ == "__main__":
    main()
