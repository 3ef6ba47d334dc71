#!/usr/bin/env python3
"""
Partial view tests: k-neighborhoods, storage estimates, and 2k path
reconstruction from merged views.
"""

from dataclasses import replace

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from test_trustgraph import NODE_IDS, make_graph, small_graphs
from trustledger.selection import (
    Direction,
    ViewSpec,
    build_view,
    estimate_full_storage,
    estimate_storage,
    k_neighborhood,
    merge_views,
)


def _digraph(n, edges):
    g = nx.DiGraph()
    g.add_nodes_from(range(n))
    g.add_edges_from(edges)
    return g


def _distances(n, edges, source):
    return nx.single_source_shortest_path_length(_digraph(n, edges), source)


def _walk_edges(n, edges, owner, k, reverse=False):
    """Edges on some directed walk of length <= k leaving (or, reversed, entering) owner."""
    if k == 0:
        return set()
    g = _digraph(n, edges)
    if reverse:
        g = g.reverse(copy=False)
    near = nx.single_source_shortest_path_length(g, owner, cutoff=k - 1)
    return {(v, u) if reverse else (u, v) for u in near for v in g.successors(u)}


class TestNeighborhood:
    def test_chain_outgoing(self):
        """A->B->C->D, owner A, k=2 outgoing: {A,B,C}, {(A,B),(B,C)}."""
        graph = make_graph(4, {(0, 1): 1, (1, 2): 1, (2, 3): 1})
        view = k_neighborhood(graph, NODE_IDS[0], 2, Direction.OUTGOING)
        assert set(view.nodes) == set(NODE_IDS[:3])
        assert set(view.edges) == {(NODE_IDS[0], NODE_IDS[1]), (NODE_IDS[1], NODE_IDS[2])}

    def test_star(self):
        """A confirms three others; k=1 outgoing sees all of them."""
        graph = make_graph(4, {(0, 1): 1, (0, 2): 1, (0, 3): 1})
        view = k_neighborhood(graph, NODE_IDS[0], 1, Direction.OUTGOING)
        assert len(view.nodes) == 4 and len(view.edges) == 3

    def test_depth_zero(self):
        graph = make_graph(3, {(0, 1): 1, (1, 2): 1})
        view = k_neighborhood(graph, NODE_IDS[1], 0, Direction.INCOMING)
        assert set(view.nodes) == {NODE_IDS[1]} and not view.edges

    def test_unknown_owner(self):
        from trustledger.errors import UnknownNode

        graph = make_graph(2, {})
        with pytest.raises(UnknownNode):
            k_neighborhood(graph, NODE_IDS[7], 1, Direction.OUTGOING)


class TestBuildView:
    def test_only_owner(self):
        graph = make_graph(3, {(0, 1): 1, (1, 2): 1})
        view = build_view(graph, ViewSpec(NODE_IDS[1]))
        assert set(view.nodes) == {NODE_IDS[1]} and not view.edges
        assert view.owner_record().account_id == NODE_IDS[1]

    def test_both_directions(self, scope_chain_world):
        """A -3-> B -1-> C -2-> D, owner B, k_out = k_in = 1."""
        w = scope_chain_world
        view = build_view(w.graph(), ViewSpec(w.id("B"), 1, 1))
        assert set(view.nodes) == {w.id("A"), w.id("B"), w.id("C")}
        assert set(view.edges) == {(w.id("A"), w.id("B")), (w.id("B"), w.id("C"))}
        assert view.out_nodes == {w.id("B"), w.id("C")}
        assert view.in_nodes == {w.id("A"), w.id("B")}
        assert view.as_of_height == w.chain.height

    def test_depth_bounded_by_m(self):
        from trustledger.errors import ViewError

        graph = make_graph(2, {(0, 1): 1}, m=2)
        with pytest.raises(ViewError):
            build_view(graph, ViewSpec(NODE_IDS[0], k_out=3))

    def test_negative_depth(self):
        with pytest.raises(ValueError):
            ViewSpec(NODE_IDS[0], k_out=-1)

    @settings(max_examples=300, deadline=None)
    @given(small_graphs(max_nodes=8, max_scope=3), st.integers(0, 3), st.integers(0, 3))
    def test_matches_walk_enumeration(self, drawn, k_out, k_in):
        """Views hold exactly the edges on short walks out of / into the owner."""
        n, scoped = drawn
        graph = make_graph(n, scoped)
        for owner in range(n):
            view = build_view(graph, ViewSpec(NODE_IDS[owner], k_out, k_in))
            expected = _walk_edges(n, scoped, owner, k_out) | _walk_edges(
                n, scoped, owner, k_in, reverse=True
            )
            assert set(view.edges) == {(NODE_IDS[i], NODE_IDS[j]) for i, j in expected}
            endpoints = {NODE_IDS[owner]} | {NODE_IDS[v] for e in expected for v in e}
            assert set(view.nodes) == endpoints

    @settings(max_examples=100, deadline=None)
    @given(small_graphs(max_nodes=8), st.integers(0, 2))
    def test_monotone_in_depth(self, drawn, k):
        n, scoped = drawn
        graph = make_graph(n, scoped)
        small = build_view(graph, ViewSpec(NODE_IDS[0], k, k))
        large = build_view(graph, ViewSpec(NODE_IDS[0], k + 1, k + 1))
        assert set(small.nodes) <= set(large.nodes)
        assert set(small.edges) <= set(large.edges)
        assert all(graph.edges[pair] == edge for pair, edge in large.edges.items())


class TestStorageEstimate:
    def test_formula(self):
        """2 * n^k."""
        assert estimate_storage(3, 2).estimated_items == 18
        assert estimate_storage(4, 3).estimated_items == 128
        assert estimate_storage(7, 0).estimated_items == 2

    def test_reconstructable_length(self):
        assert estimate_storage(3, 2).reconstructable_length == 4

    def test_full_coverage(self):
        """Reaching every node within distance m alone needs n^m items."""
        assert estimate_full_storage(3, 5) == 243

    def test_negative_input(self):
        with pytest.raises(ValueError):
            estimate_storage(-1, 2)


class TestMerge:
    def test_2k_chain(self, chain_world):
        """A's outgoing 2-view and E's incoming 2-view rebuild A..E."""
        from trustledger.trustgraph import find_valid_path

        w = chain_world
        graph = w.graph()
        merged = merge_views(
            k_neighborhood(graph, w.id("A"), 2, Direction.OUTGOING),
            k_neighborhood(graph, w.id("E"), 2, Direction.INCOMING),
        )
        path = find_valid_path(merged, w.id("A"), w.id("E"))
        assert path is not None
        assert path.vertices == tuple(w.id(x) for x in "ABCDE")

    def test_disjoint_views(self):
        from trustledger.trustgraph import find_valid_path

        graph = make_graph(4, {(0, 1): 2, (2, 3): 2})
        merged = merge_views(
            build_view(graph, ViewSpec(NODE_IDS[0], k_out=1)),
            build_view(graph, ViewSpec(NODE_IDS[3], k_in=1)),
        )
        assert find_valid_path(merged, NODE_IDS[0], NODE_IDS[3]) is None

    def test_idempotent_commutative_associative(self):
        graph = make_graph(5, {(0, 1): 2, (1, 2): 2, (2, 3): 1, (3, 4): 1, (4, 0): 3})
        a = build_view(graph, ViewSpec(NODE_IDS[0], 1, 1))
        b = build_view(graph, ViewSpec(NODE_IDS[2], 1, 0))
        c = build_view(graph, ViewSpec(NODE_IDS[4], 0, 2))
        assert merge_views(a, a) == a.as_graph()
        assert merge_views(a, b) == merge_views(b, a)
        assert merge_views(merge_views(a, b), c) == merge_views(a, merge_views(b, c))

    def test_stale_views(self):
        from trustledger.errors import StaleViewError

        graph = make_graph(2, {(0, 1): 1})
        a = build_view(graph, ViewSpec(NODE_IDS[0], 1, 0))
        with pytest.raises(StaleViewError):
            merge_views(a, replace(a, as_of_height=a.as_of_height + 1))

    def test_conflicting_edges(self):
        """Same pair, different scope: provisioning was inconsistent."""
        from trustledger.errors import MergeConflict

        a = build_view(make_graph(2, {(0, 1): 1}), ViewSpec(NODE_IDS[0], 1, 0))
        b = build_view(make_graph(2, {(0, 1): 2}), ViewSpec(NODE_IDS[1], 0, 1))
        with pytest.raises(MergeConflict):
            merge_views(a, b)

    @settings(max_examples=500, deadline=None)
    @given(small_graphs(max_nodes=10, max_scope=3), st.sampled_from([1, 2]))
    def test_2k_reconstruction(self, drawn, k):
        """Every pair at distance <= 2k stays connected within 2k hops in the merged views."""
        n, scoped = drawn
        graph = make_graph(n, scoped)
        out_views = {a: k_neighborhood(graph, NODE_IDS[a], k, Direction.OUTGOING) for a in range(n)}
        in_views = {b: k_neighborhood(graph, NODE_IDS[b], k, Direction.INCOMING) for b in range(n)}
        index = {node: i for i, node in enumerate(NODE_IDS[:n])}
        for a in range(n):
            dist = _distances(n, scoped, a)
            for b, d in dist.items():
                if b == a or d > 2 * k:
                    continue
                merged = merge_views(out_views[a], in_views[b])
                merged_edges = [(index[u], index[v]) for u, v in merged.edges]
                assert _distances(n, merged_edges, a).get(b, 2 * k + 1) <= 2 * k, (a, b)
