"""Host-side request handling: token verification, minting, file serving.

Both handlers are pure with respect to the network: they take a decoded
message plus host state and return the reply, leaving transport and access
logging to the node. Verification work is metered per request so the cost
of each access-token type is observable exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

from .. import token as token_mod
from ..credential import (
    Attestation,
    CredentialError,
    TrustedIssuerList,
    VerifiablePresentation,
    verify_attestation,
    verify_presentation,
)
from ..identity import NodeIdentity
from ..policy import AttributeBag, Mode
from ..registry import RegistryClient, RegistryUnavailable
from ..token import DirectoryTree
from ..vault import Vault
from .messages import (
    AccessibleFilesRequest,
    AccessibleFilesResponse,
    FailReason,
    FileRequest,
    FileRequestFailed,
    FileResponse,
)

SIG_SESSION_TOKEN = "sig.session_token"


@dataclass
class RequestRecord:
    """Instrumentation for one handled request."""

    kind: str
    token_types: list[str] = field(default_factory=list)
    verifications: dict[str, int] = field(default_factory=dict)
    registry_lookups: int = 0
    granted_files: int = 0
    outcome: str = "ok"

    def total_verifications(self) -> int:
        return sum(self.verifications.values())

    def meter(self, event: str, n: int = 1) -> None:
        self.verifications[event] = self.verifications.get(event, 0) + n


@dataclass
class HostContext:
    """Everything a handler needs from the node."""

    vault: Vault
    identity: NodeIdentity
    trusted: TrustedIssuerList
    registry: RegistryClient
    clock: Callable[[], float] = time.time
    token_ttl: int = token_mod.DEFAULT_TTL_SECONDS

    @property
    def self_issuer_ids(self) -> frozenset[str]:
        return frozenset({self.identity.did, self.identity.fingerprint})


@dataclass
class AccessGrant:
    """Handler output the node needs beyond the wire reply."""

    response: AccessibleFilesResponse
    granted_paths: list[str]
    requester_fingerprint: str
    record: RequestRecord


def handle_accessible_files_request(
    msg: AccessibleFilesRequest,
    requester_fp: str,
    ctx: HostContext,
) -> AccessGrant:
    """Verify every supplied token, compute the grant, mint a session token.

    Tokens that fail verification are dropped, not fatal: the response
    covers whatever the surviving credentials (plus always-unrestricted
    files) unlock. Valid session tokens presented here act as refresh
    requests; their previously granted paths carry over.
    """
    record = RequestRecord(kind="accessible_files")
    lookups_before = ctx.registry.lookup_counter()["resolve"]
    bags: set[AttributeBag] = set()
    carried_paths: set[str] = set()

    for supplied in msg.access_tokens:
        if isinstance(supplied, Attestation):
            record.token_types.append("attestation")
            try:
                bags.add(verify_attestation(
                    supplied, requester_fp, ctx.trusted,
                    self_ids=ctx.self_issuer_ids, meter=record.meter,
                ))
            except CredentialError:
                continue
        elif isinstance(supplied, VerifiablePresentation):
            record.token_types.append("presentation")
            try:
                bags.update(verify_presentation(
                    supplied, requester_fp, ctx.registry, ctx.trusted,
                    own=ctx.identity, meter=record.meter,
                ))
            except (CredentialError, RegistryUnavailable):
                continue
        elif isinstance(supplied, str):
            record.token_types.append("session_token")
            record.meter(SIG_SESSION_TOKEN)
            try:
                tree = token_mod.verify(
                    supplied, requester_fp, ctx.clock(),
                    ctx.identity.transport_sign.public_bytes(),
                )
                carried_paths.update(tree.file_paths())
            except token_mod.TokenError:
                continue

    me = ctx.identity.did
    subtree = ctx.vault.accessible_subtree(frozenset(bags), Mode.READ, me=me)
    granted = set(subtree.file_paths())
    existing = set(ctx.vault.index.file_paths())
    granted |= carried_paths & existing

    minted = token_mod.mint(
        DirectoryTree.from_paths(sorted(granted)),
        requester_fp,
        ctx.token_ttl,
        ctx.identity.transport_sign,
        ctx.clock(),
    )
    record.registry_lookups = ctx.registry.lookup_counter()["resolve"] - lookups_before
    record.granted_files = len(granted)
    response = AccessibleFilesResponse(
        session_token=str(minted),
        request_id=msg.request_id,
        timestamp=msg.timestamp,
    )
    return AccessGrant(
        response=response,
        granted_paths=sorted(granted),
        requester_fingerprint=requester_fp,
        record=record,
    )


def handle_file_request(
    msg: FileRequest,
    requester_fp: str,
    ctx: HostContext,
) -> tuple[FileResponse | FileRequestFailed, RequestRecord]:
    """Serve one file covered by a valid session token.

    The subtree in the token is the entire authority: nothing outside it is
    served even if unrestricted for everyone else. Expired tokens tell the
    client to run a fresh accessible-files request.
    """
    record = RequestRecord(kind="file", token_types=["session_token"])
    record.meter(SIG_SESSION_TOKEN)

    def failed(reason: FailReason, detail: str = "") -> tuple[FileRequestFailed, RequestRecord]:
        record.outcome = reason.value
        return FileRequestFailed(request_id=msg.request_id, reason=reason, detail=detail), record

    try:
        tree = token_mod.verify(
            msg.session_token, requester_fp, ctx.clock(),
            ctx.identity.transport_sign.public_bytes(),
        )
    except token_mod.Expired:
        return failed(FailReason.EXPIRED_TOKEN)
    except token_mod.BadToken as exc:
        return failed(FailReason.MALFORMED, str(exc))
    except token_mod.TokenError:
        return failed(FailReason.ACCESS_DENIED)

    if not tree.contains(msg.path):
        return failed(FailReason.ACCESS_DENIED)

    from ..policy import UnknownPath
    from ..vault import FileTooLarge, InvalidPath, VaultError

    try:
        data = ctx.vault.get(msg.path)
    except (UnknownPath, InvalidPath):
        return failed(FailReason.UNKNOWN_PATH)
    except FileTooLarge:
        return failed(FailReason.FILE_TOO_LARGE)
    except VaultError as exc:
        return failed(FailReason.ACCESS_DENIED, str(exc))

    record.granted_files = 1
    response = FileResponse(
        request_id=msg.request_id,
        path=msg.path,
        total_size=len(data),
        payload=data,
    )
    return response, record
