import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparse_gat import graph as G
from sparse_gat import layer as L
from sparse_gat.errors import ShapeError, ValidationError

from conftest import random_graph, random_params


def _bundle(graph, f=3, seed=0):
    rng = np.random.default_rng(seed)
    n = graph.num_nodes
    return G.GraphBundle(
        graph, rng.standard_normal((n, f)).astype(np.float32), rng.integers(0, 2, n), 2,
        np.ones(n, bool), np.zeros(n, bool), np.zeros(n, bool),
    )


class TestFromEdgeList:
    def test_singleton(self):
        g = G.from_edge_list(1, [], add_self_loops=True)
        np.testing.assert_array_equal(g.row_offsets, [0, 1])
        np.testing.assert_array_equal(g.col_indices, [0])

    def test_three_nodes(self):
        g = G.from_edge_list(3, [(0, 1)], symmetrize=True, add_self_loops=True)
        assert g.neighbors(0).tolist() == [0, 1]
        assert g.neighbors(1).tolist() == [0, 1]
        assert g.neighbors(2).tolist() == [2]

    def test_directed_edge_lands_in_destination_row(self):
        g = G.from_edge_list(2, [(0, 1)])
        assert g.neighbors(1).tolist() == [0]
        assert g.neighbors(0).tolist() == []

    def test_dedup_and_self_loop_idempotent(self):
        g = G.from_edge_list(2, [(0, 1), (0, 1), (1, 1)], symmetrize=True, add_self_loops=True)
        assert g.num_edges == 4

    def test_out_of_range(self):
        with pytest.raises(ValidationError):
            G.from_edge_list(2, [(0, 2)])

    @given(st.integers(1, 20), st.lists(st.tuples(st.integers(0, 19), st.integers(0, 19)), max_size=60))
    @settings(max_examples=100, deadline=None)
    def test_round_trip(self, n, pairs):
        pairs = [(s % n, d % n) for s, d in pairs]
        g = G.from_edge_list(n, pairs)
        assert set(map(tuple, g.edge_list().tolist())) == set(pairs)
        g.validate()


class TestCsrValidation:
    def test_unsorted_row_rejected(self):
        with pytest.raises(ValidationError):
            G.CsrGraph(2, [0, 2, 2], [1, 0])

    def test_duplicate_rejected(self):
        with pytest.raises(ValidationError):
            G.CsrGraph(2, [0, 2, 2], [1, 1])

    def test_bad_offsets(self):
        with pytest.raises(ValidationError):
            G.CsrGraph(2, [0, 1], [0])

    def test_immutable(self):
        g = G.from_edge_list(2, [(0, 1)])
        with pytest.raises(ValueError):
            g.col_indices[0] = 1


class TestEdgeListFile:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "edges.txt"
        p.write_text("# comment\n0\t1\n\n2\t0  # trailing\n")
        np.testing.assert_array_equal(G.read_edge_list(p), [[0, 1], [2, 0]])


class TestBundle:
    def test_overlapping_masks(self):
        g = G.from_edge_list(2, [], add_self_loops=True)
        m = np.array([True, False])
        with pytest.raises(ValidationError):
            G.GraphBundle(g, np.zeros((2, 1)), [0, 1], 2, m, m, ~m)


class TestDisjointUnion:
    def test_single(self):
        b = _bundle(G.from_edge_list(3, [(0, 1)], symmetrize=True, add_self_loops=True))
        u = G.disjoint_union([b])
        assert u.bundle is b
        assert u.graph_boundaries.tolist() == [0, 3]

    def test_two_triangles(self):
        tri = G.from_edge_list(3, [(0, 1), (1, 2), (2, 0)], symmetrize=True, add_self_loops=True)
        u = G.disjoint_union([_bundle(tri), _bundle(tri, seed=1)])
        assert u.graph_boundaries.tolist() == [0, 3, 6]
        e = u.bundle.graph.edge_list()
        assert np.all((e < 3).all(axis=1) | (e >= 3).all(axis=1))
        assert u.bundle.graph.num_edges == 2 * tri.num_edges

    def test_width_mismatch(self):
        g = G.from_edge_list(2, [], add_self_loops=True)
        with pytest.raises(ShapeError):
            G.disjoint_union([_bundle(g, f=3), _bundle(g, f=4)])

    def test_layer_on_union_matches_per_graph(self, rng):
        bundles = [_bundle(random_graph(rng, n), f=5, seed=n) for n in (7, 4, 9)]
        cfg = L.GatLayerConfig(5, 3, num_heads=2)
        p = random_params(cfg, rng)
        u = G.disjoint_union(bundles)
        joint, _ = L.forward(u.bundle.features.astype(np.float64), p, cfg, u.bundle.graph)
        for g, b in enumerate(bundles):
            alone, _ = L.forward(b.features.astype(np.float64), p, cfg, b.graph)
            assert np.max(np.abs(joint[u.slice(g)] - alone)) < 1e-6
