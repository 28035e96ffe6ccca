"""Request/response correlation for protocol messages over an endpoint.

One router per node. Incoming response-type messages resolve the pending
request with the matching id; request-type messages go to the registered
server callback, whose reply (if any) is sent back over the same reliable
channel. Undecodable traffic is answered with a MALFORMED failure so a
confused peer fails fast instead of timing out.
"""

from __future__ import annotations

import queue
import threading
from typing import Callable, Optional

from .endpoint import BLOB_MESSAGE, PeerEndpoint
from .messages import (
    AccessibleFilesRequest,
    AccessibleFilesResponse,
    FailReason,
    FileRequest,
    FileRequestFailed,
    FileResponse,
    Malformed,
    Message,
    decode,
    encode,
)

_RESPONSE_TYPES = (AccessibleFilesResponse, FileResponse, FileRequestFailed)
_REQUEST_TYPES = (AccessibleFilesRequest, FileRequest)

ServerHandler = Callable[[str, Message], Optional[Message]]


class RequestTimeout(Exception):
    pass


class PeerUnreachable(Exception):
    pass


class MessageRouter:
    def __init__(self, endpoint: PeerEndpoint, server: Optional[ServerHandler] = None):
        self.endpoint = endpoint
        self.server = server
        self._pending: dict[tuple[str, str], "queue.Queue[Message]"] = {}
        self._lock = threading.Lock()
        endpoint.on_blob(BLOB_MESSAGE, self._on_blob)

    def request(self, peer_fp: str, message: Message, timeout: float = 30.0) -> Message:
        """Send a request and block for its correlated response."""
        key = (peer_fp, message.request_id)
        inbox: "queue.Queue[Message]" = queue.Queue()
        with self._lock:
            self._pending[key] = inbox
        try:
            try:
                self.endpoint.send_blob(peer_fp, BLOB_MESSAGE, encode(message))
            except Exception as exc:
                raise PeerUnreachable(str(exc)) from exc
            try:
                return inbox.get(timeout=timeout)
            except queue.Empty:
                raise RequestTimeout(f"no response to {message.request_id} within {timeout}s") from None
        finally:
            with self._lock:
                self._pending.pop(key, None)

    def send(self, peer_fp: str, message: Message) -> None:
        self.endpoint.send_blob(peer_fp, BLOB_MESSAGE, encode(message))

    # -- incoming ------------------------------------------------------------

    def _on_blob(self, peer_fp: str, body: bytes) -> None:
        try:
            message = decode(body)
        except Malformed as exc:
            if self.server is not None:
                self.send(peer_fp, FileRequestFailed(
                    request_id="", reason=FailReason.MALFORMED, detail=str(exc),
                ))
            return
        if isinstance(message, _RESPONSE_TYPES):
            self._resolve(peer_fp, message)
            return
        if isinstance(message, _REQUEST_TYPES) and self.server is not None:
            reply = self.server(peer_fp, message)
            if reply is not None:
                self.send(peer_fp, reply)

    def _resolve(self, peer_fp: str, message: Message) -> None:
        with self._lock:
            inbox = self._pending.pop((peer_fp, message.request_id), None)
            if inbox is None and message.request_id == "":
                # Peer could not recover our request id (it failed to decode
                # the request); at most one request per peer is in flight.
                for key in list(self._pending):
                    if key[0] == peer_fp:
                        inbox = self._pending.pop(key)
                        break
        if inbox is not None:
            inbox.put(message)
