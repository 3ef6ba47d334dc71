"""
Verified storage for nodes that do not run the ledger.

A ground station provisions a node with a Bundle: the full header chain, the
registration / confirmation / revocation transactions inducing the node's view,
each with a Merkle inclusion proof, and the view spec. The node keeps only what
verify_bundle accepts.

Bundle file layout (see spec/chain-file-v1.yaml):
    magic "TLBUNDL1"
    record: header count + header encodings
    record: tx count + (tx encoding, block height, Merkle proof)
    record: view spec (owner, k_out, k_in) and m
    record: seal = SHA-256 over the three records above

The seal detects corruption of the file, not forgery: authenticity of the
content comes from the header chain and the inclusion proofs.
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .crypto import AccountId, Hash256, sha256
from .encoding import Reader, Writer, read_records, write_records
from .errors import (
    BadInclusionProof,
    BrokenHeaderChain,
    EncodingError,
    InconsistentView,
    UnknownHeight,
    UnknownNode,
)
from .ledger import BlockHeader, Chain, Pair, Transaction, TxType
from .merkle import MerkleProof, merkle_verify
from .selection import PartialGraphView, ViewSpec, build_view
from .trustgraph import EntityRecord, TrustEdge, TrustGraph

logger = logging.getLogger(__name__)

BUNDLE_MAGIC = b"TLBUNDL1"

_VIEW_TX_TYPES = (TxType.REGISTER_ENTITY, TxType.CONFIRM, TxType.REVOKE)


@dataclass(frozen=True)
class HeaderChain:
    headers: Tuple[BlockHeader, ...]

    @property
    def tip_height(self) -> int:
        return self.headers[-1].height if self.headers else -1

    def header_at(self, height: int) -> Optional[BlockHeader]:
        if 0 <= height < len(self.headers):
            return self.headers[height]
        return None

    def validate(self, genesis_hash: Optional[Hash256] = None):
        """Heights run 0..tip without gaps and every parent link matches."""
        if not self.headers:
            raise BrokenHeaderChain("Header chain is empty")
        for expected_height, header in enumerate(self.headers):
            if header.height != expected_height:
                raise BrokenHeaderChain(
                    f"Header at position {expected_height} claims height {header.height}"
                )
            parent = self.headers[expected_height - 1] if expected_height else None
            if parent is not None and header.parent_hash != parent.header_hash:
                raise BrokenHeaderChain(f"Header {expected_height} does not link to its parent")
        if genesis_hash is not None and self.headers[0].header_hash != genesis_hash:
            raise BrokenHeaderChain("Genesis header does not match the pinned genesis hash")

    def encode(self) -> bytes:
        w = Writer().u32(len(self.headers))
        for header in self.headers:
            w.blob(header.canonical_bytes())
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "HeaderChain":
        r = Reader(data)
        headers = tuple(BlockHeader.decode(r.blob()) for _ in range(r.u32()))
        r.expect_end()
        return cls(headers)


@dataclass(frozen=True)
class ProvisionedTx:
    tx: Transaction
    block_height: int
    proof: MerkleProof

    @property
    def leaf_index(self) -> int:
        return self.proof.leaf_index

    def verifies_under(self, header: BlockHeader) -> bool:
        return header.height == self.block_height and merkle_verify(
            header.merkle_root, self.tx.tx_id, self.proof
        )

    def encode(self, w: Writer) -> Writer:
        w.blob(self.tx.canonical_bytes()).u64(self.block_height)
        return self.proof.encode(w)

    @classmethod
    def decode(cls, r: Reader) -> "ProvisionedTx":
        tx = Transaction.decode(r.blob())
        return cls(tx, r.u64(), MerkleProof.decode(r))


def encode_provisioned(txs: Sequence[ProvisionedTx]) -> bytes:
    w = Writer().u32(len(txs))
    for ptx in txs:
        ptx.encode(w)
    return w.getvalue()


def decode_provisioned(data: bytes) -> Tuple[ProvisionedTx, ...]:
    r = Reader(data)
    txs = tuple(ProvisionedTx.decode(r) for _ in range(r.u32()))
    r.expect_end()
    return txs


@dataclass(frozen=True)
class Bundle:
    headers: HeaderChain
    txs: Tuple[ProvisionedTx, ...]
    view_spec: ViewSpec
    m: int

    def _records(self) -> List[bytes]:
        spec = (
            Writer()
            .hash(self.view_spec.owner)
            .u8(self.view_spec.k_out)
            .u8(self.view_spec.k_in)
            .u8(self.m)
            .getvalue()
        )
        return [self.headers.encode(), encode_provisioned(self.txs), spec]

    def seal(self) -> Hash256:
        return sha256(write_records(self._records()))

    def encode(self) -> bytes:
        records = self._records()
        records.append(sha256(write_records(records)).digest)
        return BUNDLE_MAGIC + write_records(records)

    @classmethod
    def decode(cls, data: bytes) -> "Bundle":
        if not data.startswith(BUNDLE_MAGIC):
            raise EncodingError("Not a bundle file (bad magic)")
        records = read_records(Reader(data[len(BUNDLE_MAGIC):]))
        if len(records) != 4:
            raise EncodingError(f"Bundle holds {len(records)} records, expected 4")
        if sha256(write_records(records[:3])).digest != records[3]:
            raise EncodingError(
                "Bundle seal broken (integrity violation).\n"
                "REASON: file content does not hash to the recorded seal."
            )
        r = Reader(records[2])
        owner, k_out, k_in, m = r.hash(), r.u8(), r.u8(), r.u8()
        r.expect_end()
        return cls(
            headers=HeaderChain.decode(records[0]),
            txs=decode_provisioned(records[1]),
            view_spec=ViewSpec(owner, k_out, k_in),
            m=m,
        )


def save_bundle(bundle: Bundle, path: str) -> int:
    data = bundle.encode()
    Path(path).write_bytes(data)
    return len(data)


def load_bundle(path: str) -> Bundle:
    return Bundle.decode(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Provisioning (ground station side)
# ---------------------------------------------------------------------------

def provision_txs(chain: Chain, tx_ids) -> List[ProvisionedTx]:
    """ProvisionedTx records for committed tx_ids, ordered by (height, index)."""
    located = sorted((chain.locate(tx_id), tx_id) for tx_id in set(tx_ids))
    out = []
    for (height, index), tx_id in located:
        block = chain.block_at(height)
        out.append(ProvisionedTx(block.body[index], height, block.proof_for(index)))
    return out


def make_bundle(chain: Chain, graph: TrustGraph, spec: ViewSpec) -> Bundle:
    """
    Bundle inducing build_view(graph, spec).

    Includes, besides registrations and active confirmations, the latest
    revocation of every revoked pair touching a view node, so that the holder
    can overrule stale confirmations replayed by peers.
    """
    if spec.owner not in chain.state.accounts:
        raise UnknownNode(f"View owner {spec.owner.short()} is not registered on chain")
    view = build_view(graph, spec)

    tx_ids = [record.registration_tx for record in view.nodes.values()]
    tx_ids.extend(edge.tx_id for edge in view.edges.values())
    for (issuer, subject), event in chain.pair_events().items():
        if event.tx_type == TxType.REVOKE and (issuer in view.nodes or subject in view.nodes):
            tx_ids.append(event.tx_id)

    bundle = Bundle(
        headers=HeaderChain(tuple(chain.headers)),
        txs=tuple(provision_txs(chain, tx_ids)),
        view_spec=spec,
        m=chain.params.m,
    )
    logger.info(
        "Provisioned %s: %d nodes, %d edges, %d txs at height %d",
        spec.owner.short(),
        len(view.nodes),
        len(view.edges),
        len(bundle.txs),
        chain.height,
    )
    return bundle


# ---------------------------------------------------------------------------
# Verification (node side)
# ---------------------------------------------------------------------------

def _entity(ptx: ProvisionedTx) -> EntityRecord:
    payload = ptx.tx.payload
    return EntityRecord(
        account_id=ptx.tx.sender,
        name=payload.name,
        public_key=payload.public_key,
        properties=tuple(payload.properties),
        registration_tx=ptx.tx.tx_id,
        registered_at=ptx.block_height,
    )


def _check_inclusion(ptx: ProvisionedTx, headers: HeaderChain):
    header = headers.header_at(ptx.block_height)
    if header is None:
        raise UnknownHeight(
            f"Transaction {ptx.tx.tx_id.short()} cites height {ptx.block_height}, "
            f"local headers end at {headers.tip_height}"
        )
    if not ptx.verifies_under(header):
        raise BadInclusionProof(
            f"Inclusion proof for {ptx.tx.tx_id.short()} does not match the Merkle root "
            f"of block {ptx.block_height}"
        )


@dataclass(frozen=True)
class _PairState:
    """
    Latest event seen for a pair, keyed by (height, leaf index).

    Local records have no leaf index (-1). At equal height, when one side
    lacks an index, a revocation wins.
    """

    key: Tuple[int, int]
    edge: Optional[TrustEdge]

    def offer(self, key: Tuple[int, int], edge: Optional[TrustEdge]) -> "_PairState":
        if key[0] != self.key[0]:
            return _PairState(key, edge) if key[0] > self.key[0] else self
        if key[1] >= 0 and self.key[1] >= 0:
            return _PairState(key, edge) if key[1] > self.key[1] else self
        if self.edge is not None and edge is None:
            return _PairState(key, edge)
        return self


def _fold_events(events: Dict[Pair, _PairState], ptx: ProvisionedTx):
    tx = ptx.tx
    pair = (tx.sender, tx.payload.subject)
    key = (ptx.block_height, ptx.leaf_index)
    if tx.tx_type == TxType.CONFIRM:
        edge = TrustEdge(
            tx.sender, tx.payload.subject, tx.payload.scope, ptx.block_height, tx.tx_id
        )
    else:
        edge = None
    current = events.get(pair)
    events[pair] = _PairState(key, edge) if current is None else current.offer(key, edge)


def verify_bundle(bundle: Bundle, genesis_hash: Optional[Hash256] = None) -> PartialGraphView:
    """
    Verify headers and every inclusion proof, then rebuild the declared view.

    Confirmations and revocations are folded per pair with the latest
    (height, index) winning.
    """
    bundle.headers.validate(genesis_hash)
    nodes: Dict[AccountId, EntityRecord] = {}
    events: Dict[Pair, _PairState] = {}
    for ptx in bundle.txs:
        try:
            _check_inclusion(ptx, bundle.headers)
        except UnknownHeight as e:
            raise BadInclusionProof(str(e)) from e
        if ptx.tx.tx_type not in _VIEW_TX_TYPES:
            raise InconsistentView(f"Bundle carries a {ptx.tx.tx_type.name} transaction")
        if ptx.tx.tx_type == TxType.REGISTER_ENTITY:
            nodes[ptx.tx.sender] = _entity(ptx)
        else:
            _fold_events(events, ptx)

    edges = {pair: st.edge for pair, st in events.items() if st.edge is not None}
    revoked = {pair: st.key[0] for pair, st in events.items() if st.edge is None}

    owner = bundle.view_spec.owner
    if owner not in nodes:
        raise InconsistentView("Bundle does not register the view owner")
    for issuer, subject in edges:
        if issuer not in nodes or subject not in nodes:
            raise InconsistentView(
                f"Edge {issuer.short()} -> {subject.short()} lacks an endpoint registration"
            )

    fragment = TrustGraph(nodes, edges, bundle.m, bundle.headers.tip_height)
    view = build_view(fragment, bundle.view_spec, revoked)
    if dict(view.nodes) != nodes or dict(view.edges) != edges:
        raise InconsistentView(
            "Bundle content does not match its declared view spec.\n"
            "REASON: every node and edge must lie within k_out / k_in hops of the owner."
        )
    return replace(view, evidence={ptx.tx.tx_id: ptx for ptx in bundle.txs})


def ingest_peer_data(
    local_view: PartialGraphView,
    peer_txs: Sequence[ProvisionedTx],
    trusted_headers: HeaderChain,
) -> TrustGraph:
    """
    Session-only fragment: local view plus peer transactions verified against
    the locally held headers.

    Raises UnknownHeight for peer data beyond the local tip and
    BadInclusionProof for any proof that does not check out. Edges whose
    endpoints have no verified registration are left out.
    """
    nodes: Dict[AccountId, EntityRecord] = dict(local_view.nodes)
    events: Dict[Pair, _PairState] = {}
    for pair, edge in local_view.edges.items():
        events[pair] = _PairState((edge.since_height, -1), edge)
    for pair, height in local_view.revoked.items():
        current = events.get(pair)
        tombstone = _PairState((height, -1), None)
        events[pair] = tombstone if current is None else current.offer(tombstone.key, None)

    for ptx in peer_txs:
        _check_inclusion(ptx, trusted_headers)
        tx = ptx.tx
        if tx.tx_type == TxType.REGISTER_ENTITY:
            nodes.setdefault(tx.sender, _entity(ptx))
        elif tx.tx_type in (TxType.CONFIRM, TxType.REVOKE):
            _fold_events(events, ptx)
        else:
            logger.debug("Ignoring peer %s transaction", tx.tx_type.name)

    edges = {}
    for pair, st in events.items():
        if st.edge is None:
            continue
        if pair[0] in nodes and pair[1] in nodes:
            edges[pair] = st.edge
        else:
            logger.debug(
                "Dropping edge %s -> %s without registrations", pair[0].short(), pair[1].short()
            )
    as_of = max(local_view.as_of_height, trusted_headers.tip_height)
    return TrustGraph(nodes, edges, local_view.m, as_of)


class LightClient:
    """A node's verified provisioning: header chain plus its partial view."""

    def __init__(self, bundle: Bundle, genesis_hash: Optional[Hash256] = None):
        self.view = verify_bundle(bundle, genesis_hash)
        self.headers = bundle.headers
        self.bundle_size = len(bundle.encode())

    @property
    def owner(self) -> AccountId:
        return self.view.owner

    @property
    def as_of_height(self) -> int:
        return self.view.as_of_height

    def ingest(self, peer_txs: Sequence[ProvisionedTx]) -> TrustGraph:
        return ingest_peer_data(self.view, peer_txs, self.headers)
