"""
Trust graph and the bounded-scope path rule.

An edge A -n-> B says A confirms B's key binding and accepts paths through B
of total remaining length at most n. A path v0..vL with edge scopes n1..nL is
valid iff n_i >= L - i + 1 for every edge i (1-based): the suffix starting at
edge i must fit within that edge's scope.

Two consequences the search relies on:
- every suffix of a valid path is valid
- cutting a cycle out of a valid walk leaves a valid path

so the shortest valid walk is a simple path and a backward breadth-first
search from the target finds it.
"""

import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

import networkx as nx

from .config import DEFAULT_MAX_SCOPE
from .crypto import AccountId, Hash256
from .errors import GraphError, UnknownNode
from .ledger import LedgerState, Pair, Properties

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EntityRecord:
    """Registration data of a trust-graph node."""

    account_id: AccountId
    name: str
    public_key: bytes
    properties: Properties
    registration_tx: Hash256
    registered_at: int


@dataclass(frozen=True)
class TrustEdge:
    issuer: AccountId
    subject: AccountId
    scope: int
    since_height: int
    tx_id: Optional[Hash256] = None

    @property
    def pair(self) -> Pair:
        return (self.issuer, self.subject)


@dataclass(frozen=True)
class TrustGraph:
    """Immutable snapshot of nodes and scope-numbered edges."""

    nodes: Mapping[AccountId, EntityRecord]
    edges: Mapping[Pair, TrustEdge]
    m: int = DEFAULT_MAX_SCOPE
    as_of_height: int = 0

    def __post_init__(self):
        for (issuer, subject), edge in self.edges.items():
            if (edge.issuer, edge.subject) != (issuer, subject):
                raise GraphError("Edge keyed under the wrong pair")
            if issuer == subject:
                raise GraphError(f"Self edge on {issuer.short()}")
            if issuer not in self.nodes or subject not in self.nodes:
                raise GraphError(
                    f"Edge {issuer.short()} -> {subject.short()} has an unregistered endpoint"
                )

    @cached_property
    def digraph(self) -> nx.DiGraph:
        """Directed view for traversal; edges carry scope and since_height."""
        g = nx.DiGraph()
        g.add_nodes_from(sorted(self.nodes))
        for (issuer, subject), edge in sorted(self.edges.items()):
            g.add_edge(issuer, subject, scope=edge.scope, since_height=edge.since_height)
        return g

    def successors(self, node: AccountId) -> List[AccountId]:
        return sorted(self.digraph.successors(node))

    def predecessors(self, node: AccountId) -> List[AccountId]:
        return sorted(self.digraph.predecessors(node))

    def scope(self, issuer: AccountId, subject: AccountId) -> Optional[int]:
        edge = self.edges.get((issuer, subject))
        return edge.scope if edge else None

    def require(self, node: AccountId):
        if node not in self.nodes:
            raise UnknownNode(f"Node {node.short()} is not in the trust graph")

    def find_by_name(self, name: str) -> List[AccountId]:
        return sorted(aid for aid, rec in self.nodes.items() if rec.name == name)


@dataclass(frozen=True)
class TrustPath:
    vertices: Tuple[AccountId, ...]
    scopes: Tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.scopes)

    @property
    def edges(self) -> List[Pair]:
        return list(zip(self.vertices, self.vertices[1:]))

    def describe(self, names: Mapping[AccountId, str]) -> str:
        """Render as 'A -(3)-> B -(1)-> C'."""
        parts = [names.get(self.vertices[0], self.vertices[0].short())]
        for scope, vertex in zip(self.scopes, self.vertices[1:]):
            parts.append(f"-({scope})-> {names.get(vertex, vertex.short())}")
        return " ".join(parts)


def build_trust_graph(state: LedgerState, m: int = DEFAULT_MAX_SCOPE) -> TrustGraph:
    """One node per registered entity, one edge per active confirmation."""
    nodes = {
        aid: EntityRecord(
            account_id=aid,
            name=rec.name,
            public_key=rec.public_key,
            properties=rec.properties,
            registration_tx=rec.registration_tx,
            registered_at=rec.registered_at,
        )
        for aid, rec in state.accounts.items()
    }
    edges = {
        (issuer, subject): TrustEdge(issuer, subject, conf.scope, conf.since_height, conf.tx_id)
        for (issuer, subject), conf in state.confirmations.items()
    }
    return TrustGraph(nodes, edges, m, state.height)


def satisfies_scope_rule(scopes: Sequence[int]) -> bool:
    """n_i >= L - i + 1 for every edge i (1-based)."""
    length = len(scopes)
    return length >= 1 and all(n >= length - i for i, n in enumerate(scopes))


def is_valid_path(graph: TrustGraph, path: TrustPath) -> bool:
    """True iff path is a simple path of graph edges that satisfies the scope rule."""
    if path.length < 1 or len(path.vertices) != path.length + 1:
        return False
    if len(set(path.vertices)) != len(path.vertices):
        return False
    for (issuer, subject), claimed in zip(path.edges, path.scopes):
        if graph.scope(issuer, subject) != claimed:
            return False
    return satisfies_scope_rule(path.scopes)


def _valid_suffix_lengths(graph: TrustGraph, target: AccountId) -> Dict[AccountId, int]:
    """Length of the shortest valid path from each node to target (target maps to 0)."""
    dist = {target: 0}
    queue = deque([target])
    while queue:
        v = queue.popleft()
        remaining = dist[v] + 1
        for u, data in graph.digraph.pred[v].items():
            if u in dist:
                continue
            if data["scope"] >= remaining:
                dist[u] = remaining
                queue.append(u)
    return dist


def find_valid_path(
    graph: TrustGraph, source: AccountId, target: AccountId
) -> Optional[TrustPath]:
    """
    Shortest valid path from source to target.

    Ties are broken by the lexicographically smallest vertex-id sequence.
    Returns None when no valid path exists or source == target.
    """
    graph.require(source)
    graph.require(target)
    if source == target:
        return None

    dist = _valid_suffix_lengths(graph, target)
    if source not in dist:
        return None

    vertices = [source]
    scopes = []
    current = source
    remaining = dist[source]
    while current != target:
        step = next(
            v
            for v in graph.successors(current)
            if dist.get(v) == remaining - 1 and graph.edges[(current, v)].scope >= remaining
        )
        scopes.append(graph.edges[(current, step)].scope)
        vertices.append(step)
        current = step
        remaining -= 1
    path = TrustPath(tuple(vertices), tuple(scopes))
    logger.debug(
        "Valid path of length %d from %s to %s", path.length, source.short(), target.short()
    )
    return path


def valid_target_set(graph: TrustGraph, source: AccountId, max_len: int) -> FrozenSet[AccountId]:
    """All nodes reachable from source by at least one valid path of length <= max_len."""
    graph.require(source)
    # budget[v]: the largest number of further edges any valid prefix ending at v allows.
    budget: Dict[AccountId, int] = {source: max_len}
    reached: Set[AccountId] = set()
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v, data in graph.digraph.succ[u].items():
            allowed = min(budget[u], data["scope"]) - 1
            if allowed < 0:
                continue
            if v != source:
                reached.add(v)
            if allowed > budget.get(v, -1):
                budget[v] = allowed
                queue.append(v)
    return frozenset(reached)
