"""Access-token credentials: attestations, credentials, presentations.

Three families serve as access tokens:

* Attestation: a single claim signed by an attestor whose public key rides
  along inline, bound to the holder's transport-key fingerprint so it is
  worthless to anyone else. No registry traffic to verify.
* VerifiableCredential / VerifiablePresentation: multi-claim credentials
  tied to DIDs. The holder wraps credentials into a presentation signed
  with a DID key; the verifier resolves holder and issuer keys at the
  registry.
* Self-issued credential: a credential this node signs for a peer, meant
  to be presented back here. The subject's verification key is embedded so
  it verifies with zero registry lookups, and its issuer matches the
  reserved "issuer = me" rule value on the issuing node only.

All verification output is AttributeBag instances; nothing unverified ever
reaches policy evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import date
from typing import Callable, Mapping, Optional

from .identity import NodeIdentity
from .keys import SigningKey, fingerprint, verify_signature
from .policy import META_ISSUANCE_DATE, META_ISSUER, AttributeBag
from .registry import NotFound, RegistryClient, RegistryError, RegistryUnavailable
from .values import AttrValue, b64u, b64u_decode, canonical_bytes, from_wire, to_wire

# Meter callbacks receive (event, count); used to instrument verification.
Meter = Callable[[str, int], None]

SIG_ATTESTATION = "sig.attestation"
SIG_CREDENTIAL = "sig.credential"
SIG_HOLDER = "sig.holder"

_ATT_TAG = b"pv:att:v1:"
_VC_TAG = b"pv:vc:v1:"
_VP_TAG = b"pv:vp:v1:"


class CredentialError(Exception):
    """Base class for credential verification errors."""


class BadSignature(CredentialError):
    """Signature does not verify over the signed payload."""


class HolderMismatch(CredentialError):
    """Credential is bound to a different transport fingerprint (replay)."""


class UntrustedIssuer(CredentialError):
    """Attestor/issuer is not on the applicable trust list."""


class HolderProofInvalid(CredentialError):
    """Presentation envelope rejected; no enclosed credential is usable."""


class EmptyAfterFiltering(CredentialError):
    """Every enclosed credential failed verification."""


class EmptyClaims(CredentialError):
    """A credential must carry at least one claim."""


def _meter(meter: Optional[Meter], event: str, n: int = 1) -> None:
    if meter is not None:
        meter(event, n)


# ---------------------------------------------------------------------------
# Trusted issuers
# ---------------------------------------------------------------------------

SELF_ENTRY = "self"


@dataclass(frozen=True)
class TrustedIssuerList:
    """Local trust anchors: attestor key fingerprints and issuer DIDs.

    The reserved entry "self" stands for the node's own identity in both
    forms. Grant/revoke return updated lists; persistence is the caller's
    concern.
    """

    entries: frozenset[str] = frozenset({SELF_ENTRY})

    def grant(self, issuer_id: str) -> "TrustedIssuerList":
        return TrustedIssuerList(self.entries | {issuer_id})

    def revoke(self, issuer_id: str) -> "TrustedIssuerList":
        return TrustedIssuerList(self.entries - {issuer_id})

    def contains(self, issuer_id: str, self_ids: frozenset[str] = frozenset()) -> bool:
        if issuer_id in self.entries:
            return True
        return SELF_ENTRY in self.entries and issuer_id in self_ids

    def to_list(self) -> list[str]:
        return sorted(self.entries)

    @classmethod
    def from_list(cls, raw: list[str]) -> "TrustedIssuerList":
        return cls(frozenset(raw))


# ---------------------------------------------------------------------------
# Attestations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Attestation:
    """One verified attribute claim, attestor key attached."""

    attribute: str
    value: AttrValue
    attestor_public_key: bytes
    holder_fingerprint: str
    signature: bytes = b""

    def signing_payload(self) -> bytes:
        return _ATT_TAG + canonical_bytes(
            {
                "attribute": self.attribute,
                "value": to_wire(self.value),
                "holder": self.holder_fingerprint,
            }
        )

    @property
    def attestor_id(self) -> str:
        """Key id used on trust lists and in bag metadata."""
        return fingerprint(self.attestor_public_key)

    @property
    def credential_id(self) -> str:
        return "att:" + fingerprint(self.signing_payload() + self.signature)[:16]

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "value": to_wire(self.value),
            "attestor": b64u(self.attestor_public_key),
            "holder": self.holder_fingerprint,
            "signature": b64u(self.signature),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Attestation":
        return cls(
            attribute=raw["attribute"],
            value=from_wire(raw["value"]),
            attestor_public_key=b64u_decode(raw["attestor"]),
            holder_fingerprint=raw["holder"],
            signature=b64u_decode(raw["signature"]),
        )


def issue_attestation(
    attribute: str,
    value: AttrValue,
    holder_fingerprint: str,
    attestor: SigningKey,
) -> Attestation:
    att = Attestation(
        attribute=attribute,
        value=value,
        attestor_public_key=attestor.public_bytes(),
        holder_fingerprint=holder_fingerprint,
    )
    return replace(att, signature=attestor.sign(att.signing_payload()))


def verify_attestation(
    att: Attestation,
    expected_fingerprint: str,
    trusted: TrustedIssuerList,
    self_ids: frozenset[str] = frozenset(),
    meter: Optional[Meter] = None,
) -> AttributeBag:
    """Verify signature, holder binding, and attestor trust; build a bag.

    The three failure modes raise distinguishable errors so callers can
    tell a forgery from a replay from an unknown attestor.
    """
    _meter(meter, SIG_ATTESTATION)
    if not verify_signature(att.attestor_public_key, att.signature, att.signing_payload()):
        raise BadSignature("attestation signature invalid")
    if att.holder_fingerprint != expected_fingerprint:
        raise HolderMismatch("attestation bound to a different requester")
    if not trusted.contains(att.attestor_id, self_ids):
        raise UntrustedIssuer(att.attestor_id)
    return AttributeBag(
        credential_id=att.credential_id,
        claims={att.attribute: att.value},
        metadata={META_ISSUER: att.attestor_id},
    )


# ---------------------------------------------------------------------------
# Credentials and presentations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifiableCredential:
    """Multi-claim credential signed by an issuer DID key.

    `subject_public_key` is set only on self-issued credentials; it lets
    the issuing node verify the holder without resolving the subject DID.
    """

    id: str
    issuer_did: str
    subject_did: str
    claims: Mapping[str, AttrValue]
    issuance_date: date
    proof: bytes = b""
    subject_public_key: Optional[bytes] = None

    def __post_init__(self):
        if not self.claims:
            raise EmptyClaims(f"credential {self.id} has no claims")

    def signing_payload(self) -> bytes:
        return _VC_TAG + canonical_bytes(self._content_dict())

    def _content_dict(self) -> dict:
        return {
            "id": self.id,
            "issuer": self.issuer_did,
            "subject": self.subject_did,
            "claims": {k: to_wire(v) for k, v in sorted(self.claims.items())},
            "issuanceDate": self.issuance_date.isoformat(),
            "subjectKey": b64u(self.subject_public_key) if self.subject_public_key else None,
        }

    def to_dict(self) -> dict:
        data = self._content_dict()
        data["proof"] = b64u(self.proof)
        return data

    @classmethod
    def from_dict(cls, raw: dict) -> "VerifiableCredential":
        subject_key = raw.get("subjectKey")
        return cls(
            id=raw["id"],
            issuer_did=raw["issuer"],
            subject_did=raw["subject"],
            claims={k: from_wire(v) for k, v in raw["claims"].items()},
            issuance_date=date.fromisoformat(raw["issuanceDate"]),
            proof=b64u_decode(raw["proof"]),
            subject_public_key=b64u_decode(subject_key) if subject_key else None,
        )


@dataclass(frozen=True)
class VerifiablePresentation:
    """Holder-signed bundle of credentials, challenge-bound to a requester."""

    credentials: tuple[VerifiableCredential, ...]
    holder_did: str
    challenge: str
    proof: bytes = b""

    def __post_init__(self):
        if not self.credentials:
            raise CredentialError("presentation needs at least one credential")
        for vc in self.credentials:
            if vc.subject_did != self.holder_did:
                raise CredentialError(
                    f"credential {vc.id} subject {vc.subject_did} is not the holder"
                )

    def signing_payload(self) -> bytes:
        return _VP_TAG + canonical_bytes(
            {
                "credentials": [vc.to_dict() for vc in self.credentials],
                "holder": self.holder_did,
                "challenge": self.challenge,
            }
        )

    def to_dict(self) -> dict:
        return {
            "credentials": [vc.to_dict() for vc in self.credentials],
            "holder": self.holder_did,
            "challenge": self.challenge,
            "proof": b64u(self.proof),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "VerifiablePresentation":
        return cls(
            credentials=tuple(VerifiableCredential.from_dict(c) for c in raw["credentials"]),
            holder_did=raw["holder"],
            challenge=raw["challenge"],
            proof=b64u_decode(raw["proof"]),
        )


def issue_credential(
    credential_id: str,
    issuer: NodeIdentity,
    subject_did: str,
    claims: Mapping[str, AttrValue],
    issuance_date: date,
    subject_public_key: Optional[bytes] = None,
) -> VerifiableCredential:
    if not claims:
        raise EmptyClaims("cannot issue a credential without claims")
    vc = VerifiableCredential(
        id=credential_id,
        issuer_did=issuer.did,
        subject_did=subject_did,
        claims=dict(claims),
        issuance_date=issuance_date,
        subject_public_key=subject_public_key,
    )
    return replace(vc, proof=issuer.did_key.sign(vc.signing_payload()))


def issue_sic(
    subject_did: str,
    subject_public_key: bytes,
    claims: Mapping[str, AttrValue],
    issuer: NodeIdentity,
    issuance_date: Optional[date] = None,
) -> VerifiableCredential:
    """Self-issued credential: meaningful only when presented back to us.

    Embeds the subject's DID verification key so the round trip needs no
    registry at all.
    """
    if not claims:
        raise EmptyClaims("a self-issued credential needs at least one claim")
    when = issuance_date or date.today()
    content = {k: to_wire(v) for k, v in sorted(claims.items())}
    serial = fingerprint(canonical_bytes([subject_did, content]) + issuer.did_key.public_bytes())[:12]
    return issue_credential(
        credential_id=f"sic:{serial}",
        issuer=issuer,
        subject_did=subject_did,
        claims=claims,
        issuance_date=when,
        subject_public_key=subject_public_key,
    )


def present(
    credentials: list[VerifiableCredential],
    holder: NodeIdentity,
    challenge: str,
) -> VerifiablePresentation:
    """Wrap credentials into a presentation bound to a verifier challenge.

    The challenge is the presenting node's transport fingerprint as seen by
    the verifier, closing the same replay hole attestations close.
    """
    vp = VerifiablePresentation(
        credentials=tuple(credentials),
        holder_did=holder.did,
        challenge=challenge,
    )
    return replace(vp, proof=holder.did_key.sign(vp.signing_payload()))


def verify_presentation(
    vp: VerifiablePresentation,
    expected_fingerprint: str,
    registry: RegistryClient,
    trusted: TrustedIssuerList,
    own: Optional[NodeIdentity] = None,
    meter: Optional[Meter] = None,
) -> list[AttributeBag]:
    """Verify the envelope, then each credential; return one bag per survivor.

    The holder proof failing (or binding to another requester) rejects the
    whole presentation. Individual credentials with bad proofs, unknown or
    untrusted issuers are dropped without failing the rest. Registry cost:
    one holder resolution plus one per distinct issuer DID, except that
    credentials we issued ourselves verify against our own key.
    """
    if vp.challenge != expected_fingerprint:
        raise HolderProofInvalid("presentation bound to a different requester")

    own_did = own.did if own is not None else None
    self_ids = frozenset({own_did}) if own_did else frozenset()

    holder_keys = _holder_keys(vp, registry, own_did)
    _meter(meter, SIG_HOLDER)
    payload = vp.signing_payload()
    if not any(verify_signature(k, vp.proof, payload) for k in holder_keys):
        raise HolderProofInvalid("holder signature invalid")

    issuer_docs: dict[str, list[bytes]] = {}
    bags: list[AttributeBag] = []
    for vc in vp.credentials:
        _meter(meter, SIG_CREDENTIAL)
        if own is not None and vc.issuer_did == own_did:
            issuer_keys = [own.did_key.public_bytes()]
        else:
            if vc.issuer_did not in issuer_docs:
                try:
                    issuer_docs[vc.issuer_did] = registry.resolve_did(vc.issuer_did).key_bytes()
                except NotFound:
                    issuer_docs[vc.issuer_did] = []
            issuer_keys = issuer_docs[vc.issuer_did]
            if issuer_keys and not _issuer_trusted(vc.issuer_did, registry, trusted, self_ids):
                issuer_keys = []
        if not issuer_keys:
            continue
        if not any(verify_signature(k, vc.proof, vc.signing_payload()) for k in issuer_keys):
            continue
        bags.append(
            AttributeBag(
                credential_id=vc.id,
                claims=dict(vc.claims),
                metadata={
                    META_ISSUER: vc.issuer_did,
                    META_ISSUANCE_DATE: vc.issuance_date,
                },
            )
        )
    if not bags:
        raise EmptyAfterFiltering("no credential in the presentation verified")
    return bags


def _holder_keys(
    vp: VerifiablePresentation,
    registry: RegistryClient,
    own_did: Optional[str],
) -> list[bytes]:
    embedded = [vc.subject_public_key for vc in vp.credentials]
    if own_did is not None and all(
        vc.issuer_did == own_did and key is not None
        for vc, key in zip(vp.credentials, embedded)
    ):
        # Everything in the presentation came from us; the embedded subject
        # keys authenticate the holder with zero registry traffic.
        return [k for k in embedded if k is not None]
    try:
        return registry.resolve_did(vp.holder_did).key_bytes()
    except NotFound as exc:
        raise HolderProofInvalid(f"holder DID not resolvable: {vp.holder_did}") from exc


def _issuer_trusted(
    issuer_did: str,
    registry: RegistryClient,
    trusted: TrustedIssuerList,
    self_ids: frozenset[str],
) -> bool:
    if trusted.contains(issuer_did, self_ids):
        return True
    try:
        return registry.is_trusted_issuer(issuer_did)
    except RegistryUnavailable:
        raise
    except RegistryError:
        return False
