from __future__ import annotations

import pytest

from peervault.identity import NodeIdentity
from peervault.keys import SigningKey, verify_signature
from peervault.registry import (
    DIDDocument,
    HttpRegistryClient,
    InProcessRegistryClient,
    IssuerRecord,
    MalformedDocument,
    NotFound,
    RegistryService,
    RegistryStore,
    UnresolvableDID,
)


@pytest.fixture
def service():
    svc = RegistryService()
    svc.start()
    yield svc
    svc.stop()


def make_doc(did="did:pv:abc", keys=None):
    keys = keys or (("key-1", SigningKey.generate().public_bytes()),)
    return DIDDocument(did=did, public_keys=tuple(keys))


class TestStore:
    def test_register_then_resolve(self):
        store = RegistryStore()
        doc = make_doc()
        store.register_did(doc)
        assert store.resolve_did(doc.did) == doc

    def test_resolve_unknown(self):
        with pytest.raises(NotFound):
            RegistryStore().resolve_did("did:pv:none")

    def test_accredit_requires_resolvable_did(self):
        store = RegistryStore()
        with pytest.raises(UnresolvableDID):
            store.accredit_issuer(IssuerRecord(did="did:pv:ghost"))

    def test_accredit_then_check(self):
        store = RegistryStore()
        doc = make_doc()
        store.register_did(doc)
        store.accredit_issuer(IssuerRecord(did=doc.did))
        assert store.is_trusted_issuer(doc.did)
        assert not store.is_trusted_issuer("did:pv:other")

    def test_duplicate_key_ids_rejected(self):
        key = SigningKey.generate().public_bytes()
        with pytest.raises(MalformedDocument):
            make_doc(keys=(("k", key), ("k", key)))

    def test_update_replaces_document(self):
        store = RegistryStore()
        doc = make_doc()
        store.register_did(doc)
        k1, k2 = SigningKey.generate(), SigningKey.generate()
        updated = DIDDocument(
            did=doc.did,
            public_keys=(("key-1", k1.public_bytes()), ("key-2", k2.public_bytes())),
            updated_at=1.0,
        )
        store.register_did(updated)
        resolved = store.resolve_did(doc.did)
        assert len(resolved.public_keys) == 2
        # Either registered key can authenticate a signature.
        for signer in (k1, k2):
            sig = signer.sign(b"hello")
            assert any(verify_signature(k, sig, b"hello") for k in resolved.key_bytes())


class TestHttpService:
    def test_register_resolve_accredit_over_http(self, service):
        client = HttpRegistryClient(service.url, cache_ttl=0)
        identity = NodeIdentity.generate()
        doc = identity.did_document()
        client.register_did(doc)
        assert client.resolve_did(doc.did) == doc
        client.accredit_issuer(IssuerRecord(did=doc.did))
        assert client.is_trusted_issuer(doc.did)

    def test_resolve_unknown_over_http(self, service):
        client = HttpRegistryClient(service.url, cache_ttl=0)
        with pytest.raises(NotFound):
            client.resolve_did("did:pv:nope")

    def test_accredit_unresolvable_over_http(self, service):
        client = HttpRegistryClient(service.url, cache_ttl=0)
        with pytest.raises(UnresolvableDID):
            client.accredit_issuer(IssuerRecord(did="did:pv:ghost"))


class TestLookupCounter:
    def test_resolution_counted(self):
        store = RegistryStore()
        doc = make_doc()
        store.register_did(doc)
        client = InProcessRegistryClient(store, cache_ttl=0)
        client.resolve_did(doc.did)
        client.resolve_did(doc.did)
        assert client.lookup_counter()["resolve"] == 2

    def test_cache_suppresses_repeat_lookups(self):
        store = RegistryStore()
        doc = make_doc()
        store.register_did(doc)
        client = InProcessRegistryClient(store, cache_ttl=60)
        client.resolve_did(doc.did)
        client.resolve_did(doc.did)
        assert client.lookup_counter()["resolve"] == 1

    def test_tir_checks_counted_separately(self):
        store = RegistryStore()
        doc = make_doc()
        store.register_did(doc)
        client = InProcessRegistryClient(store, cache_ttl=0)
        client.is_trusted_issuer(doc.did)
        counts = client.lookup_counter()
        assert counts == {"resolve": 0, "tir": 1}
