"""On-demand fetching client with a memory-only LRU cache.

The client turns credentials into a session token via one accessible-files
round trip, then fetches individual files on demand. Fetched bytes are
cached per (peer, path) so repeated reads cost no network traffic; the
cache lives only in process memory and is bounded, evicting least recently
used entries.
"""

from __future__ import annotations

import time
from collections import OrderedDict
from typing import Callable, Optional

from .. import token as token_mod
from ..token import DirectoryTree
from .messages import (
    AccessibleFilesRequest,
    AccessibleFilesResponse,
    AccessToken,
    FailReason,
    FileRequest,
    FileRequestFailed,
    FileResponse,
)
from .router import MessageRouter


class FetchError(Exception):
    def __init__(self, reason: FailReason, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)


class TokenExpired(FetchError):
    """The peer wants a fresh accessible-files request."""

    def __init__(self, detail: str = ""):
        super().__init__(FailReason.EXPIRED_TOKEN, detail)


class UnexpectedReply(Exception):
    pass


class FileCache:
    """Bounded LRU keyed by (peer fingerprint, path). Never persisted."""

    def __init__(self, capacity: int = 128):
        self.capacity = capacity
        self._entries: "OrderedDict[tuple[str, str], bytes]" = OrderedDict()

    def get(self, peer_fp: str, path: str) -> Optional[bytes]:
        key = (peer_fp, path)
        data = self._entries.get(key)
        if data is not None:
            self._entries.move_to_end(key)
        return data

    def put(self, peer_fp: str, path: str, data: bytes) -> None:
        if self.capacity <= 0:
            return
        key = (peer_fp, path)
        self._entries[key] = data
        self._entries.move_to_end(key)
        while len(self._entries) > self.capacity:
            self._entries.popitem(last=False)

    def clear(self) -> None:
        self._entries.clear()

    def __len__(self) -> int:
        return len(self._entries)


class VaultClient:
    """Requester-side flows against one or more peer vaults."""

    def __init__(
        self,
        router: MessageRouter,
        cache: Optional[FileCache] = None,
        clock: Callable[[], float] = time.time,
        request_timeout: float = 30.0,
    ):
        self.router = router
        self.cache = cache or FileCache()
        self.clock = clock
        self.request_timeout = request_timeout
        self.wire_requests = 0

    def accessible_files(
        self, peer_fp: str, tokens: tuple[AccessToken, ...] = ()
    ) -> tuple[str, DirectoryTree]:
        """Present tokens, returning the minted session token and its subtree.

        The subtree is read out of the verified token, so a host cannot show
        one listing and sign another.
        """
        request = AccessibleFilesRequest(access_tokens=tokens, timestamp=self.clock())
        self.wire_requests += 1
        reply = self.router.request(peer_fp, request, timeout=self.request_timeout)
        if isinstance(reply, FileRequestFailed):
            raise FetchError(reply.reason, reply.detail)
        if not isinstance(reply, AccessibleFilesResponse):
            raise UnexpectedReply(type(reply).__name__)
        host_key = self.router.endpoint.peers.get(peer_fp).sign_public
        tree = token_mod.verify(reply.session_token, self._own_fp(), self.clock(), host_key)
        return reply.session_token, tree

    def fetch(self, peer_fp: str, path: str, session_token: str) -> bytes:
        """Return file bytes, from cache when possible."""
        cached = self.cache.get(peer_fp, path)
        if cached is not None:
            return cached
        request = FileRequest(session_token=session_token, path=path)
        self.wire_requests += 1
        reply = self.router.request(peer_fp, request, timeout=self.request_timeout)
        if isinstance(reply, FileRequestFailed):
            if reply.reason is FailReason.EXPIRED_TOKEN:
                raise TokenExpired(reply.detail)
            raise FetchError(reply.reason, reply.detail)
        if not isinstance(reply, FileResponse):
            raise UnexpectedReply(type(reply).__name__)
        self.cache.put(peer_fp, path, reply.payload)
        return reply.payload

    def fetch_with_retry(
        self, peer_fp: str, path: str, session_token: str,
        refresh: Callable[[], str],
    ) -> tuple[bytes, str]:
        """Fetch; on token expiry run one fresh accessible-files round trip.

        Returns (bytes, possibly refreshed session token).
        """
        try:
            return self.fetch(peer_fp, path, session_token), session_token
        except TokenExpired:
            renewed = refresh()
            return self.fetch(peer_fp, path, renewed), renewed

    def _own_fp(self) -> str:
        return self.router.endpoint.fingerprint
