"""
Partial trust-graph views for resource-limited nodes.

A node stores the nodes and edges within k_out hops along outgoing edges and
k_in hops along incoming edges. Two parties that pool an outgoing k-view and
an incoming k-view can reconstruct every path of length up to 2k between them.

Views hold breadth-first edge sets rather than path lists and are not
filtered by scope validity; scope checks happen at path validation time.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, FrozenSet, Mapping, Optional, Union

import networkx as nx

from .crypto import AccountId, Hash256
from .errors import MergeConflict, StaleViewError, ViewError
from .ledger import Pair
from .trustgraph import EntityRecord, TrustEdge, TrustGraph

if TYPE_CHECKING:
    from .lightclient import ProvisionedTx

logger = logging.getLogger(__name__)


class Direction(Enum):
    OUTGOING = "outgoing"
    INCOMING = "incoming"


@dataclass(frozen=True)
class ViewSpec:
    owner: AccountId
    k_out: int = 0
    k_in: int = 0

    def __post_init__(self):
        if self.k_out < 0 or self.k_in < 0:
            raise ValueError("View depths must be >= 0")


@dataclass(frozen=True)
class PartialGraphView:
    """
    A node's stored slice of the trust graph.

    out_nodes / in_nodes record which side of the owner each node was reached
    from; revoked maps (issuer, subject) to the height of the latest known
    revocation of that pair (tombstones used by later merges). evidence holds
    the proved transactions a verified view was rebuilt from, by tx_id; views
    cut from a full graph carry none.
    """

    spec: ViewSpec
    nodes: Mapping[AccountId, EntityRecord]
    edges: Mapping[Pair, TrustEdge]
    as_of_height: int
    m: int
    out_nodes: FrozenSet[AccountId] = frozenset()
    in_nodes: FrozenSet[AccountId] = frozenset()
    revoked: Mapping[Pair, int] = field(default_factory=dict)
    evidence: Mapping[Hash256, "ProvisionedTx"] = field(default_factory=dict)

    @property
    def owner(self) -> AccountId:
        return self.spec.owner

    def as_graph(self) -> TrustGraph:
        return TrustGraph(dict(self.nodes), dict(self.edges), self.m, self.as_of_height)

    def owner_record(self) -> EntityRecord:
        return self.nodes[self.spec.owner]


@dataclass(frozen=True)
class StorageEstimate:
    avg_degree: float
    depth: int
    estimated_items: float

    @property
    def reconstructable_length(self) -> int:
        """Path length two such views cover when merged."""
        return 2 * self.depth


def _bfs(graph: TrustGraph, owner: AccountId, k: int, direction: Direction):
    if direction is Direction.OUTGOING:
        g = graph.digraph
    else:
        g = graph.digraph.reverse(copy=False)
    depth = nx.single_source_shortest_path_length(g, owner, cutoff=k)
    edges: Dict[Pair, TrustEdge] = {}
    for u, d in depth.items():
        if d >= k:
            continue
        for v in g.successors(u):
            pair = (u, v) if direction is Direction.OUTGOING else (v, u)
            edges[pair] = graph.edges[pair]
    return frozenset(depth), edges


def k_neighborhood(
    graph: TrustGraph, owner: AccountId, k: int, direction: Direction
) -> PartialGraphView:
    """Nodes and edges within k directed hops from (outgoing) or to (incoming) owner."""
    graph.require(owner)
    if k < 0:
        raise ValueError("k must be >= 0")
    reached, edges = _bfs(graph, owner, k, direction)
    if direction is Direction.OUTGOING:
        spec = ViewSpec(owner, k_out=k)
        out_nodes, in_nodes = reached, frozenset([owner])
    else:
        spec = ViewSpec(owner, k_in=k)
        out_nodes, in_nodes = frozenset([owner]), reached
    return PartialGraphView(
        spec=spec,
        nodes={n: graph.nodes[n] for n in reached},
        edges=edges,
        as_of_height=graph.as_of_height,
        m=graph.m,
        out_nodes=out_nodes,
        in_nodes=in_nodes,
    )


def build_view(
    graph: TrustGraph, spec: ViewSpec, revoked: Optional[Mapping[Pair, int]] = None
) -> PartialGraphView:
    """Union of the outgoing k_out- and incoming k_in-neighborhoods of spec.owner."""
    graph.require(spec.owner)
    if max(spec.k_out, spec.k_in) > graph.m:
        raise ViewError(f"View depth exceeds m={graph.m} (k_out={spec.k_out}, k_in={spec.k_in})")
    out_nodes, out_edges = _bfs(graph, spec.owner, spec.k_out, Direction.OUTGOING)
    in_nodes, in_edges = _bfs(graph, spec.owner, spec.k_in, Direction.INCOMING)
    nodes = out_nodes | in_nodes
    edges = dict(out_edges)
    edges.update(in_edges)
    view = PartialGraphView(
        spec=spec,
        nodes={n: graph.nodes[n] for n in nodes},
        edges=edges,
        as_of_height=graph.as_of_height,
        m=graph.m,
        out_nodes=out_nodes,
        in_nodes=in_nodes,
        revoked=dict(revoked or {}),
    )
    logger.debug(
        "View of %s (k_out=%d, k_in=%d): %d nodes, %d edges",
        spec.owner.short(),
        spec.k_out,
        spec.k_in,
        len(view.nodes),
        len(view.edges),
    )
    return view


def estimate_storage(avg_degree: float, k: int) -> StorageEstimate:
    """Items stored by a view of depth k in both directions: 2 * avg_degree^k."""
    if avg_degree < 0 or k < 0:
        raise ValueError("avg_degree and k must be >= 0")
    return StorageEstimate(avg_degree, k, 2 * avg_degree ** k)


def estimate_full_storage(avg_degree: float, m: int) -> float:
    """Items a node would store to reach every trusted node within distance m alone."""
    if avg_degree < 0 or m < 0:
        raise ValueError("avg_degree and m must be >= 0")
    return avg_degree ** m


Fragment = Union[PartialGraphView, TrustGraph]


def merge_views(view_a: Fragment, view_b: Fragment) -> TrustGraph:
    """
    Pool two views (or already merged fragments) into one graph fragment.

    Commutative, associative and idempotent on inputs sharing as_of_height.
    """
    if view_a.as_of_height != view_b.as_of_height:
        raise StaleViewError(
            f"Views built at heights {view_a.as_of_height} and {view_b.as_of_height}.\n"
            "REASON: merging views from different heights can resurrect revoked edges."
        )
    if view_a.m != view_b.m:
        raise MergeConflict(f"Views disagree on m ({view_a.m} vs {view_b.m})")

    nodes = dict(view_a.nodes)
    for node_id, record in view_b.nodes.items():
        if nodes.setdefault(node_id, record) != record:
            raise MergeConflict(f"Conflicting registration records for {node_id.short()}")

    edges = dict(view_a.edges)
    for pair, edge in view_b.edges.items():
        if edges.setdefault(pair, edge) != edge:
            raise MergeConflict(
                f"Conflicting edge records for {pair[0].short()} -> {pair[1].short()}.\n"
                "REASON: views were provisioned inconsistently."
            )
    return TrustGraph(nodes, edges, view_a.m, view_a.as_of_height)
