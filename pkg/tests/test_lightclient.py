#!/usr/bin/env python3
"""
Light client tests: bundle provisioning, verification and peer data ingestion.
"""

from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import World, confirms, revokes
from trustledger.crypto import sha256
from trustledger.ledger import TxType
from trustledger.lightclient import (
    Bundle,
    HeaderChain,
    load_bundle,
    make_bundle,
    provision_txs,
    save_bundle,
    verify_bundle,
)
from trustledger.selection import ViewSpec, build_view


def _genesis_hash(world):
    return world.chain.header_at(0).header_hash


def _tx_ids(world, tx_type, sender=None, subject=None):
    """Committed tx ids of a type, optionally filtered by sender name / subject name."""
    found = []
    for block in world.chain.blocks:
        for tx in block.body:
            if tx.tx_type != tx_type:
                continue
            if sender is not None and tx.sender != world.id(sender):
                continue
            if subject is not None and tx.payload.subject != world.id(subject):
                continue
            found.append(tx.tx_id)
    return found


@pytest.fixture
def revoked_world(world_factory):
    """A -2-> B -1-> C, then B revokes C."""
    return world_factory("ABC", [confirms(("A", "B", 2), ("B", "C", 1)), revokes(("B", "C"))])


@pytest.fixture(scope="module")
def encoded_bundle():
    w = World("ABCDE", [confirms(("A", "B", 4), ("B", "C", 3), ("C", "D", 2), ("D", "E", 1))])
    return w.bundle("C", 2, 2).encode(), w.chain.header_at(0).header_hash


class TestProvisioning:
    def test_verified_view_matches_full_graph(self, chain_world):
        """What the node rebuilds is exactly the ground station's view."""
        w = chain_world
        for name, k_out, k_in in [("A", 2, 0), ("E", 0, 2), ("C", 1, 1), ("B", 3, 1)]:
            spec = ViewSpec(w.id(name), k_out, k_in)
            expected = build_view(w.graph(), spec)
            view = verify_bundle(w.bundle(name, k_out, k_in), _genesis_hash(w))
            assert dict(view.nodes) == dict(expected.nodes)
            assert dict(view.edges) == dict(expected.edges)
            assert view.as_of_height == w.chain.height

    def test_depth_zero_holds_own_registration(self, chain_world):
        bundle = chain_world.bundle("C")
        assert len(bundle.txs) == 1
        assert bundle.txs[0].tx.tx_type == TxType.REGISTER_ENTITY

    def test_evidence_covers_every_tx(self, chain_world):
        bundle = chain_world.bundle("A", 2, 0)
        view = verify_bundle(bundle)
        assert set(view.evidence) == {ptx.tx.tx_id for ptx in bundle.txs}

    def test_unregistered_owner(self, chain_world):
        from trustledger.errors import UnknownNode

        w = chain_world
        with pytest.raises(UnknownNode):
            make_bundle(w.chain, w.graph(), ViewSpec(sha256(b"stranger")))

    def test_revocation_carried_as_tombstone(self, revoked_world):
        """The revoked pair is absent from edges but recorded in revoked."""
        w = revoked_world
        view = verify_bundle(w.bundle("A", 2, 0))
        pair = (w.id("B"), w.id("C"))
        assert pair not in view.edges
        assert view.revoked[pair] == 3
        assert set(view.nodes) == {w.id("A"), w.id("B")}

    def test_file_round_trip(self, chain_world, tmp_workspace):
        bundle = chain_world.bundle("A", 2, 0)
        path = tmp_workspace / "a.bundle"
        size = save_bundle(bundle, str(path))
        assert size == path.stat().st_size
        loaded = load_bundle(str(path))
        assert loaded.seal() == bundle.seal()
        assert dict(verify_bundle(loaded).edges) == dict(verify_bundle(bundle).edges)


class TestRejection:
    def test_header_gap(self, chain_world):
        from trustledger.errors import BrokenHeaderChain

        bundle = chain_world.bundle("A", 1, 0)
        headers = bundle.headers.headers
        gapped = replace(bundle, headers=HeaderChain(headers[:1] + headers[2:]))
        with pytest.raises(BrokenHeaderChain):
            verify_bundle(gapped)

    def test_empty_headers(self, chain_world):
        from trustledger.errors import BrokenHeaderChain

        bundle = replace(chain_world.bundle("A"), headers=HeaderChain(()))
        with pytest.raises(BrokenHeaderChain):
            verify_bundle(bundle)

    def test_pinned_genesis_mismatch(self, chain_world):
        from trustledger.errors import BrokenHeaderChain

        with pytest.raises(BrokenHeaderChain):
            verify_bundle(chain_world.bundle("A", 1, 0), sha256(b"another network"))

    def test_tx_moved_to_other_block(self, chain_world):
        """A proof checked against the wrong block's Merkle root fails."""
        from trustledger.errors import BadInclusionProof

        bundle = chain_world.bundle("A")
        moved = replace(bundle.txs[0], block_height=bundle.txs[0].block_height + 1)
        with pytest.raises(BadInclusionProof):
            verify_bundle(replace(bundle, txs=(moved,)))

    def test_tx_beyond_tip(self, chain_world):
        from trustledger.errors import BadInclusionProof

        bundle = chain_world.bundle("A")
        moved = replace(bundle.txs[0], block_height=99)
        with pytest.raises(BadInclusionProof):
            verify_bundle(replace(bundle, txs=(moved,)))

    def test_broken_seal(self, chain_world):
        from trustledger.errors import EncodingError

        data = bytearray(chain_world.bundle("A", 1, 0).encode())
        data[-1] ^= 0x01
        with pytest.raises(EncodingError):
            Bundle.decode(bytes(data))

    def test_bad_magic(self, chain_world):
        from trustledger.errors import EncodingError

        data = chain_world.bundle("A").encode()
        with pytest.raises(EncodingError):
            Bundle.decode(b"XXXXXXXX" + data[8:])

    def test_untouched_bundle_verifies(self, encoded_bundle):
        data, genesis_hash = encoded_bundle
        view = verify_bundle(Bundle.decode(data), genesis_hash=genesis_hash)
        assert len(view.nodes) == 5

    @settings(max_examples=1000, deadline=None)
    @given(st.data())
    def test_flipped_byte_never_verifies(self, encoded_bundle, data):
        from trustledger.errors import TrustLedgerError

        raw, genesis_hash = encoded_bundle
        position = data.draw(st.integers(min_value=0, max_value=len(raw) - 1))
        mask = data.draw(st.integers(min_value=1, max_value=255))
        tampered = bytearray(raw)
        tampered[position] ^= mask
        with pytest.raises(TrustLedgerError):
            verify_bundle(Bundle.decode(bytes(tampered)), genesis_hash=genesis_hash)

    def test_declared_spec_narrower_than_content(self, chain_world):
        """Content reaching beyond the declared depth is rejected."""
        from trustledger.errors import InconsistentView

        w = chain_world
        bundle = w.bundle("A", 2, 0)
        narrowed = replace(bundle, view_spec=ViewSpec(w.id("A"), 1, 0))
        with pytest.raises(InconsistentView):
            verify_bundle(narrowed)

    def test_missing_owner_registration(self, chain_world):
        from trustledger.errors import InconsistentView

        w = chain_world
        bundle = w.bundle("A", 1, 0)
        own = _tx_ids(w, TxType.REGISTER_ENTITY, "A")
        txs = tuple(p for p in bundle.txs if p.tx.tx_id not in own)
        with pytest.raises(InconsistentView):
            verify_bundle(replace(bundle, txs=txs))


class TestPeerIngestion:
    def test_peer_extends_local_view(self, world_factory):
        """A -1-> B locally; a peer proves C -1-> D, and the session graph holds both."""
        w = world_factory("ABCD", [confirms(("A", "B", 1), ("C", "D", 1))])
        client = w.client("A", 1, 0)
        peer = provision_txs(
            w.chain,
            _tx_ids(w, TxType.REGISTER_ENTITY, "C")
            + _tx_ids(w, TxType.REGISTER_ENTITY, "D")
            + _tx_ids(w, TxType.CONFIRM, "C", "D"),
        )
        graph = client.ingest(peer)
        assert (w.id("A"), w.id("B")) in graph.edges
        assert (w.id("C"), w.id("D")) in graph.edges
        assert graph.as_of_height == w.chain.height

    def test_replayed_confirmation_loses_to_tombstone(self, revoked_world):
        """A peer replaying the pre-revocation confirmation cannot revive the edge."""
        w = revoked_world
        client = w.client("A", 2, 0)
        peer = provision_txs(
            w.chain,
            _tx_ids(w, TxType.REGISTER_ENTITY, "C") + _tx_ids(w, TxType.CONFIRM, "B", "C"),
        )
        graph = client.ingest(peer)
        assert w.id("C") in graph.nodes
        assert (w.id("B"), w.id("C")) not in graph.edges

    def test_peer_data_beyond_local_tip(self, world_factory):
        """A client provisioned at height 2 cannot check a revocation mined at height 3."""
        from trustledger.errors import UnknownHeight

        w = world_factory("AB", [confirms(("A", "B", 1)), revokes(("A", "B"))])
        stale = world_factory("AB", [confirms(("A", "B", 1))])
        client = stale.client("A", 1, 0)
        assert (stale.id("A"), stale.id("B")) in client.view.edges
        with pytest.raises(UnknownHeight):
            client.ingest(provision_txs(w.chain, _tx_ids(w, TxType.REVOKE, "A", "B")))

    def test_edge_without_registration_dropped(self, world_factory):
        w = world_factory("ABCD", [confirms(("A", "B", 1), ("C", "D", 1))])
        client = w.client("A", 1, 0)
        graph = client.ingest(provision_txs(w.chain, _tx_ids(w, TxType.CONFIRM, "C", "D")))
        assert (w.id("C"), w.id("D")) not in graph.edges

    def test_forged_peer_proof(self, world_factory):
        from trustledger.errors import BadInclusionProof

        w = world_factory("ABCD", [confirms(("A", "B", 1), ("C", "D", 1))])
        client = w.client("A", 1, 0)
        ptx = provision_txs(w.chain, _tx_ids(w, TxType.CONFIRM, "C", "D"))[0]
        forged = replace(ptx, block_height=1)
        with pytest.raises(BadInclusionProof):
            client.ingest([forged])


class TestLightClient:
    def test_properties(self, chain_world):
        w = chain_world
        client = w.client("E", 0, 2)
        assert client.owner == w.id("E")
        assert client.as_of_height == w.chain.height
        assert client.bundle_size == len(w.bundle("E", 0, 2).encode())
        assert client.headers.tip_height == w.chain.height
