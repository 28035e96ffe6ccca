from __future__ import annotations

import random
from dataclasses import replace
from datetime import date

import pytest

from peervault.credential import (
    Attestation,
    BadSignature,
    EmptyAfterFiltering,
    EmptyClaims,
    HolderMismatch,
    HolderProofInvalid,
    TrustedIssuerList,
    UntrustedIssuer,
    VerifiablePresentation,
    issue_attestation,
    issue_credential,
    issue_sic,
    present,
    verify_attestation,
    verify_presentation,
)
from peervault.identity import NodeIdentity
from peervault.keys import SigningKey
from peervault.policy import AttributeRule, Operator, evaluate_leaf
from peervault.registry import (
    InProcessRegistryClient,
    IssuerRecord,
    RegistryStore,
    RegistryUnavailable,
)


@pytest.fixture
def attestor():
    return SigningKey.generate()


@pytest.fixture
def requester():
    return NodeIdentity.generate()


@pytest.fixture
def host():
    return NodeIdentity.generate()


@pytest.fixture
def registry_env(host, requester):
    store = RegistryStore()
    client = InProcessRegistryClient(store, cache_ttl=0)
    issuer = NodeIdentity.generate()
    store.register_did(issuer.did_document())
    store.register_did(requester.did_document())
    store.register_did(host.did_document())
    store.accredit_issuer(IssuerRecord(did=issuer.did))
    return store, client, issuer


class TestAttestation:
    def test_valid_attestation_yields_bag(self, attestor, requester):
        att = issue_attestation("age", 25, requester.fingerprint, attestor)
        trusted = TrustedIssuerList().grant(att.attestor_id)
        bag = verify_attestation(att, requester.fingerprint, trusted)
        assert bag.claims == {"age": 25}
        assert bag.metadata["issuer"] == att.attestor_id

    def test_replay_with_wrong_fingerprint(self, attestor, requester):
        att = issue_attestation("age", 25, requester.fingerprint, attestor)
        trusted = TrustedIssuerList().grant(att.attestor_id)
        other = NodeIdentity.generate()
        with pytest.raises(HolderMismatch):
            verify_attestation(att, other.fingerprint, trusted)

    def test_flipped_signature_bits(self, attestor, requester):
        # Oracle: flip each byte of the signature in turn; all must fail.
        att = issue_attestation("age", 25, requester.fingerprint, attestor)
        trusted = TrustedIssuerList().grant(att.attestor_id)
        rng = random.Random(3)
        for pos in rng.sample(range(len(att.signature)), 12):
            sig = bytearray(att.signature)
            sig[pos] ^= 1 << rng.randrange(8)
            bad = replace(att, signature=bytes(sig))
            with pytest.raises(BadSignature):
                verify_attestation(bad, requester.fingerprint, trusted)

    def test_tampered_payload_fails(self, attestor, requester):
        att = issue_attestation("age", 25, requester.fingerprint, attestor)
        trusted = TrustedIssuerList().grant(att.attestor_id)
        with pytest.raises(BadSignature):
            verify_attestation(replace(att, value=26), requester.fingerprint, trusted)

    def test_untrusted_attestor(self, attestor, requester):
        att = issue_attestation("age", 25, requester.fingerprint, attestor)
        with pytest.raises(UntrustedIssuer):
            verify_attestation(att, requester.fingerprint, TrustedIssuerList())

    def test_wire_round_trip(self, attestor, requester):
        att = issue_attestation("joined", date(2021, 5, 1), requester.fingerprint, attestor)
        assert Attestation.from_dict(att.to_dict()) == att


class TestTrustList:
    def test_grant_then_verify(self, attestor, requester):
        att = issue_attestation("age", 25, requester.fingerprint, attestor)
        trusted = TrustedIssuerList()
        with pytest.raises(UntrustedIssuer):
            verify_attestation(att, requester.fingerprint, trusted)
        trusted = trusted.grant(att.attestor_id)
        assert verify_attestation(att, requester.fingerprint, trusted)

    def test_revoke_unknown_is_noop(self):
        trusted = TrustedIssuerList()
        assert trusted.revoke("nobody") == trusted

    def test_self_entry_matches_own_ids(self):
        trusted = TrustedIssuerList()
        assert trusted.contains("did:pv:abc", self_ids=frozenset({"did:pv:abc"}))
        assert not trusted.revoke("self").contains("did:pv:abc", self_ids=frozenset({"did:pv:abc"}))

    def test_round_trip(self):
        trusted = TrustedIssuerList().grant("a").grant("b")
        assert TrustedIssuerList.from_list(trusted.to_list()) == trusted


class TestPresentation:
    def test_single_issuer_three_claims(self, registry_env, requester, host):
        _, client, issuer = registry_env
        vc = issue_credential(
            "vc-1", issuer, requester.did,
            {"age": 25, "university": "TU Delft", "club": "chess"},
            date(2022, 3, 1),
        )
        vp = present([vc], requester, requester.fingerprint)
        before = client.lookup_counter()["resolve"]
        bags = verify_presentation(vp, requester.fingerprint, client, TrustedIssuerList(), own=host)
        assert len(bags) == 1
        assert bags[0].claims == {"age": 25, "university": "TU Delft", "club": "chess"}
        assert bags[0].metadata == {"issuer": issuer.did, "issuanceDate": date(2022, 3, 1)}
        # One holder resolution plus one issuer resolution.
        assert client.lookup_counter()["resolve"] - before == 2

    def test_holder_proof_invalid(self, registry_env, requester, host):
        _, client, issuer = registry_env
        vc = issue_credential("vc-1", issuer, requester.did, {"age": 25}, date(2022, 3, 1))
        vp = present([vc], requester, requester.fingerprint)
        flipped = bytearray(vp.proof)
        flipped[0] ^= 0x40
        with pytest.raises(HolderProofInvalid):
            verify_presentation(
                replace(vp, proof=bytes(flipped)),
                requester.fingerprint, client, TrustedIssuerList(), own=host,
            )

    def test_wrong_challenge_rejected(self, registry_env, requester, host):
        _, client, issuer = registry_env
        vc = issue_credential("vc-1", issuer, requester.did, {"age": 25}, date(2022, 3, 1))
        vp = present([vc], requester, requester.fingerprint)
        with pytest.raises(HolderProofInvalid):
            verify_presentation(vp, host.fingerprint, client, TrustedIssuerList(), own=host)

    def test_one_corrupted_credential_excluded(self, registry_env, requester, host):
        _, client, issuer = registry_env
        good = issue_credential("vc-good", issuer, requester.did, {"age": 25}, date(2022, 3, 1))
        bad = issue_credential("vc-bad", issuer, requester.did, {"club": "chess"}, date(2022, 3, 1))
        corrupted = bytearray(bad.proof)
        corrupted[3] ^= 1
        bad = replace(bad, proof=bytes(corrupted))
        vp = present([good, bad], requester, requester.fingerprint)
        bags = verify_presentation(vp, requester.fingerprint, client, TrustedIssuerList(), own=host)
        assert [b.credential_id for b in bags] == ["vc-good"]

    def test_unaccredited_issuer_excluded(self, registry_env, requester, host):
        store, client, _ = registry_env
        rogue = NodeIdentity.generate()
        store.register_did(rogue.did_document())  # resolvable but not accredited
        vc = issue_credential("vc-rogue", rogue, requester.did, {"age": 99}, date(2022, 3, 1))
        vp = present([vc], requester, requester.fingerprint)
        with pytest.raises(EmptyAfterFiltering):
            verify_presentation(vp, requester.fingerprint, client, TrustedIssuerList(), own=host)

    def test_locally_granted_issuer_accepted(self, registry_env, requester, host):
        store, client, _ = registry_env
        personal = NodeIdentity.generate()
        store.register_did(personal.did_document())
        vc = issue_credential("vc-p", personal, requester.did, {"club": "chess"}, date(2022, 3, 1))
        vp = present([vc], requester, requester.fingerprint)
        trusted = TrustedIssuerList().grant(personal.did)
        bags = verify_presentation(vp, requester.fingerprint, client, trusted, own=host)
        assert len(bags) == 1

    def test_registry_down(self, registry_env, requester, host):
        _, client, issuer = registry_env
        vc = issue_credential("vc-1", issuer, requester.did, {"age": 25}, date(2022, 3, 1))
        vp = present([vc], requester, requester.fingerprint)
        client.available = False
        with pytest.raises(RegistryUnavailable):
            verify_presentation(vp, requester.fingerprint, client, TrustedIssuerList(), own=host)

    def test_subject_must_match_holder(self, registry_env, requester):
        _, _, issuer = registry_env
        other = NodeIdentity.generate()
        vc = issue_credential("vc-1", issuer, other.did, {"age": 25}, date(2022, 3, 1))
        with pytest.raises(Exception):
            VerifiablePresentation(credentials=(vc,), holder_did=requester.did, challenge="x")

    def test_wire_round_trip(self, registry_env, requester):
        _, _, issuer = registry_env
        vc = issue_credential("vc-1", issuer, requester.did, {"joined": date(2020, 1, 2)}, date(2022, 3, 1))
        vp = present([vc], requester, requester.fingerprint)
        assert VerifiablePresentation.from_dict(vp.to_dict()) == vp


class TestSelfIssued:
    def test_present_back_to_issuer_without_registry(self, host, requester):
        # No DIDs registered anywhere: verification must still pass.
        client = InProcessRegistryClient(RegistryStore(), cache_ttl=0)
        sic = issue_sic(requester.did, requester.did_key.public_bytes(),
                        {"met_on_holiday": "Italy 2022"}, host)
        vp = present([sic], requester, requester.fingerprint)
        before = client.lookup_counter()["resolve"]
        bags = verify_presentation(vp, requester.fingerprint, client, TrustedIssuerList(), own=host)
        assert client.lookup_counter()["resolve"] == before
        assert len(bags) == 1
        assert bags[0].metadata["issuer"] == host.did
        # Satisfies an (issuer, eq, me) leaf on the issuing node.
        rule = AttributeRule("issuer", Operator.EQ, "me")
        assert evaluate_leaf(rule, bags, me=host.did)

    def test_presented_to_third_node_excluded(self, host, requester):
        third = NodeIdentity.generate()
        store = RegistryStore()
        store.register_did(requester.did_document())
        client = InProcessRegistryClient(store, cache_ttl=0)
        sic = issue_sic(requester.did, requester.did_key.public_bytes(),
                        {"met_on_holiday": "Italy 2022"}, host)
        vp = present([sic], requester, requester.fingerprint)
        # The third node resolves the holder but cannot trust the issuer.
        with pytest.raises(EmptyAfterFiltering):
            verify_presentation(vp, requester.fingerprint, client, TrustedIssuerList(), own=third)

    def test_empty_claims_rejected(self, host, requester):
        with pytest.raises(EmptyClaims):
            issue_sic(requester.did, requester.did_key.public_bytes(), {}, host)


class TestFingerprintBinding:
    def test_any_binding_mismatch_fails(self, attestor, host, requester):
        # For credential material bound to f1, verification against f2 != f1
        # never succeeds, across both token families.
        f1 = requester.fingerprint
        f2 = NodeIdentity.generate().fingerprint
        att = issue_attestation("a", 1, f1, attestor)
        trusted = TrustedIssuerList().grant(att.attestor_id)
        with pytest.raises(HolderMismatch):
            verify_attestation(att, f2, trusted)
        sic = issue_sic(requester.did, requester.did_key.public_bytes(), {"a": 1}, host)
        vp = present([sic], requester, f1)
        client = InProcessRegistryClient(RegistryStore(), cache_ttl=0)
        with pytest.raises(HolderProofInvalid):
            verify_presentation(vp, f2, client, TrustedIssuerList(), own=host)
