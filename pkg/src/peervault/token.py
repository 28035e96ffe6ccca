"""Host-signed session tokens carrying an accessible directory subtree.

A token is a compact three-part string `b64u(header).b64u(payload).b64u(sig)`
with JSON header/payload and an Ed25519 signature by the host over the
first two parts. Payload claims:

    sub_tree  nested directory map; folders map to child maps, files to null
    hfp       requester transport-key fingerprint (replay binding)
    iat       issue time, unix seconds
    exp       expiry, unix seconds (exclusive: a token is dead at exp)

The host keeps no per-token state; possession of a valid, unexpired token
bound to your own fingerprint is the entire capability.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

from .keys import SigningKey, verify_signature
from .values import b64u, b64u_decode, canonical_bytes

DEFAULT_TTL_SECONDS = 300

_HEADER = {"alg": "Ed25519", "typ": "PVST"}


class TokenError(Exception):
    """Base class for session token errors."""


class BadToken(TokenError):
    """Token is structurally invalid or its signature fails."""


class Expired(TokenError):
    """Token presented at or past its expiry."""


class HolderMismatch(TokenError):
    """Token bound to a different transport fingerprint."""


class InvalidTTL(TokenError):
    """Tokens must live for a positive number of seconds."""


# ---------------------------------------------------------------------------
# Directory trees
# ---------------------------------------------------------------------------

class DirectoryTree:
    """Nested folder map; file leaves are None, folders are child dicts."""

    def __init__(self, root: Optional[dict] = None):
        self.root: dict = root if root is not None else {}

    @classmethod
    def from_paths(cls, file_paths) -> "DirectoryTree":
        tree = cls()
        for path in file_paths:
            tree.add_file(path)
        return tree

    def add_file(self, path: str) -> None:
        parts = path.split("/")
        node = self.root
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            elif not isinstance(child, dict):
                raise ValueError(f"{part!r} is a file, cannot nest under it")
            node = child
        node[parts[-1]] = None

    def contains(self, path: str) -> bool:
        """True iff path names a file leaf. Folders are listable, not fetchable."""
        if not path:
            return False
        node = self.root
        parts = path.split("/")
        for part in parts[:-1]:
            node = node.get(part) if isinstance(node, dict) else None
            if not isinstance(node, dict):
                return False
        return parts[-1] in node and node[parts[-1]] is None

    def file_paths(self) -> list[str]:
        found: list[str] = []

        def walk(node: dict, prefix: str):
            for name in sorted(node):
                child = node[name]
                path = f"{prefix}{name}"
                if child is None:
                    found.append(path)
                else:
                    walk(child, path + "/")

        walk(self.root, "")
        return found

    def to_dict(self) -> dict:
        def canon(node: dict) -> dict:
            return {k: (None if v is None else canon(v)) for k, v in sorted(node.items())}

        return canon(self.root)

    def __eq__(self, other):
        return isinstance(other, DirectoryTree) and self.to_dict() == other.to_dict()

    def __bool__(self):
        return bool(self.root)


# ---------------------------------------------------------------------------
# Minting and verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SessionToken:
    encoded: str

    def __str__(self) -> str:
        return self.encoded

    @property
    def payload(self) -> dict:
        try:
            return json.loads(b64u_decode(self.encoded.split(".")[1]))
        except Exception as exc:
            raise BadToken(f"undecodable payload: {exc}") from exc

    @property
    def size_bytes(self) -> int:
        return len(self.encoded.encode("ascii"))


def mint(
    subtree: DirectoryTree,
    holder_fingerprint: str,
    ttl_seconds: int,
    host_key: SigningKey,
    now: float,
) -> SessionToken:
    """Sign a capability for the given subtree, bound to one requester."""
    if ttl_seconds <= 0:
        raise InvalidTTL(f"ttl must be positive, got {ttl_seconds}")
    issued = int(now)
    payload = {
        "sub_tree": subtree.to_dict(),
        "hfp": holder_fingerprint,
        "iat": issued,
        "exp": issued + int(ttl_seconds),
    }
    head = b64u(canonical_bytes(_HEADER))
    body = b64u(canonical_bytes(payload))
    signature = host_key.sign(f"{head}.{body}".encode("ascii"))
    return SessionToken(f"{head}.{body}.{b64u(signature)}")


def verify(
    token: SessionToken | str,
    expected_fingerprint: str,
    now: float,
    host_public_key: bytes,
) -> DirectoryTree:
    """Return the embedded subtree iff signature, binding, and expiry hold.

    Stateless by design: the only inputs are the token itself, the host's
    public key, and the clock.
    """
    encoded = token.encoded if isinstance(token, SessionToken) else token
    parts = encoded.split(".")
    if len(parts) != 3:
        raise BadToken("token must have three dot-separated parts")
    head, body, sig = parts
    try:
        signature = b64u_decode(sig)
        payload = json.loads(b64u_decode(body))
        subtree_raw = payload["sub_tree"]
        hfp = payload["hfp"]
        exp = int(payload["exp"])
        int(payload["iat"])
    except Exception as exc:
        raise BadToken(f"malformed token: {exc}") from exc
    if not verify_signature(host_public_key, signature, f"{head}.{body}".encode("ascii")):
        raise BadToken("signature invalid")
    if hfp != expected_fingerprint:
        raise HolderMismatch("token bound to a different requester")
    if now >= exp:
        raise Expired(f"token expired at {exp}")
    if not isinstance(subtree_raw, dict):
        raise BadToken("sub_tree must be an object")
    return DirectoryTree(subtree_raw)


def contains(tree: DirectoryTree, path: str) -> bool:
    return tree.contains(path)
