"""The five data-vault protocol messages and their wire codec.

Frame layout: one type-tag byte, a 4-byte big-endian body length, the
canonical-JSON body, then a raw binary payload section (file bytes; empty
for every type except FileResponse). Decoding arbitrary bytes either
yields a message or raises Malformed; it never crashes.
"""

from __future__ import annotations

import json
import struct
import uuid
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from ..credential import Attestation, VerifiablePresentation
from ..values import canonical_bytes


class Malformed(Exception):
    """Bytes do not decode to a protocol message."""


class FailReason(str, Enum):
    EXPIRED_TOKEN = "EXPIRED_TOKEN"
    ACCESS_DENIED = "ACCESS_DENIED"
    UNKNOWN_PATH = "UNKNOWN_PATH"
    FILE_TOO_LARGE = "FILE_TOO_LARGE"
    MALFORMED = "MALFORMED"


AccessToken = Union[Attestation, VerifiablePresentation, str]
# Session tokens travel as their compact string encoding.


def new_request_id() -> str:
    return uuid.uuid4().hex


def _token_to_dict(token: AccessToken) -> dict:
    if isinstance(token, Attestation):
        return {"kind": "attestation", "data": token.to_dict()}
    if isinstance(token, VerifiablePresentation):
        return {"kind": "presentation", "data": token.to_dict()}
    if isinstance(token, str):
        return {"kind": "session_token", "data": token}
    raise Malformed(f"unsupported access token type: {type(token).__name__}")


def _token_from_dict(raw: dict) -> AccessToken:
    kind = raw.get("kind")
    data = raw.get("data")
    try:
        if kind == "attestation":
            return Attestation.from_dict(data)
        if kind == "presentation":
            return VerifiablePresentation.from_dict(data)
        if kind == "session_token" and isinstance(data, str):
            return data
    except Exception as exc:
        raise Malformed(f"undecodable {kind} token: {exc}") from exc
    raise Malformed(f"unknown access token kind: {kind!r}")


@dataclass(frozen=True)
class AccessibleFilesRequest:
    access_tokens: tuple[AccessToken, ...] = ()
    request_id: str = field(default_factory=new_request_id)
    timestamp: float = 0.0

    TAG = 1

    def body(self) -> dict:
        return {
            "tokens": [_token_to_dict(t) for t in self.access_tokens],
            "requestId": self.request_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_body(cls, body: dict, payload: bytes) -> "AccessibleFilesRequest":
        return cls(
            access_tokens=tuple(_token_from_dict(t) for t in body["tokens"]),
            request_id=body["requestId"],
            timestamp=float(body["timestamp"]),
        )


@dataclass(frozen=True)
class AccessibleFilesResponse:
    session_token: str
    request_id: str
    timestamp: float = 0.0  # echoed from the request

    TAG = 2

    def body(self) -> dict:
        return {
            "sessionToken": self.session_token,
            "requestId": self.request_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_body(cls, body: dict, payload: bytes) -> "AccessibleFilesResponse":
        return cls(
            session_token=body["sessionToken"],
            request_id=body["requestId"],
            timestamp=float(body["timestamp"]),
        )


@dataclass(frozen=True)
class FileRequest:
    session_token: str
    path: str
    request_id: str = field(default_factory=new_request_id)

    TAG = 3

    def body(self) -> dict:
        return {
            "sessionToken": self.session_token,
            "path": self.path,
            "requestId": self.request_id,
        }

    @classmethod
    def from_body(cls, body: dict, payload: bytes) -> "FileRequest":
        return cls(
            session_token=body["sessionToken"],
            path=body["path"],
            request_id=body["requestId"],
        )


@dataclass(frozen=True)
class FileResponse:
    request_id: str
    path: str
    total_size: int
    payload: bytes = b""

    TAG = 4

    def body(self) -> dict:
        return {
            "requestId": self.request_id,
            "path": self.path,
            "totalSize": self.total_size,
        }

    @classmethod
    def from_body(cls, body: dict, payload: bytes) -> "FileResponse":
        return cls(
            request_id=body["requestId"],
            path=body["path"],
            total_size=int(body["totalSize"]),
            payload=payload,
        )


@dataclass(frozen=True)
class FileRequestFailed:
    request_id: str
    reason: FailReason
    detail: str = ""

    TAG = 5

    def body(self) -> dict:
        return {"requestId": self.request_id, "reason": self.reason.value, "detail": self.detail}

    @classmethod
    def from_body(cls, body: dict, payload: bytes) -> "FileRequestFailed":
        return cls(
            request_id=body["requestId"],
            reason=FailReason(body["reason"]),
            detail=body.get("detail", ""),
        )


Message = Union[
    AccessibleFilesRequest,
    AccessibleFilesResponse,
    FileRequest,
    FileResponse,
    FileRequestFailed,
]

_BY_TAG = {
    cls.TAG: cls
    for cls in (
        AccessibleFilesRequest,
        AccessibleFilesResponse,
        FileRequest,
        FileResponse,
        FileRequestFailed,
    )
}


def encode(message: Message) -> bytes:
    body = canonical_bytes(message.body())
    payload = message.payload if isinstance(message, FileResponse) else b""
    return struct.pack(">BI", message.TAG, len(body)) + body + payload


def decode(data: bytes) -> Message:
    if len(data) < 5:
        raise Malformed("frame shorter than its fixed header")
    tag, body_len = struct.unpack(">BI", data[:5])
    cls = _BY_TAG.get(tag)
    if cls is None:
        raise Malformed(f"unknown message tag {tag}")
    if len(data) < 5 + body_len:
        raise Malformed("truncated body")
    try:
        body = json.loads(data[5 : 5 + body_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise Malformed(f"body is not valid JSON: {exc}") from exc
    payload = data[5 + body_len :]
    if payload and cls is not FileResponse:
        raise Malformed(f"unexpected payload section on tag {tag}")
    try:
        return cls.from_body(body, payload)
    except Malformed:
        raise
    except Exception as exc:
        raise Malformed(f"invalid {cls.__name__} body: {exc}") from exc


def request_id_of(message: Message) -> str:
    return message.request_id
