import networkx as nx
import numpy as np
import pytest

from tests.conftest import graph_from_edges, random_connected_graph
from utils.errors import EigenSolverError, GraphError
from utils.graph_core import (
    TopologyMask,
    WeightedGraph,
    adjacency_and_degrees,
    component_count,
    is_connected,
    jacobi_eigh,
    lambda2,
    laplacian,
    spectral_summary,
)


def bfs_connected(g):
    return nx.is_connected(g.to_networkx())


class TestTopologyMask:
    def test_pairs_are_deduplicated_and_sorted(self):
        mask = TopologyMask.from_edges(3, [(1, 0), (0, 1), (2, 1)])
        assert mask.edge_list == [(0, 1), (1, 2)]
        assert mask.n_edges == 2
        assert (1, 0) in mask

    def test_self_loop_rejected(self):
        with pytest.raises(GraphError):
            TopologyMask.from_edges(3, [(1, 1)])

    def test_out_of_range_rejected(self):
        with pytest.raises(GraphError):
            TopologyMask.from_edges(3, [(0, 3)])

    def test_dict_is_one_based(self):
        mask = TopologyMask.from_edges(2, [(0, 1)])
        assert mask.to_dict() == {"n": 2, "edges": [{"i": 1, "j": 2}]}
        assert TopologyMask.from_dict(mask.to_dict()) == mask


class TestWeightedGraph:
    def test_edge_outside_mask_rejected(self):
        mask = TopologyMask.from_edges(3, [(0, 1)])
        with pytest.raises(GraphError):
            WeightedGraph(mask, {(1, 2): 1.0})

    def test_negative_weight_rejected(self):
        mask = TopologyMask.from_edges(2, [(0, 1)])
        with pytest.raises(GraphError):
            WeightedGraph(mask, {(0, 1): -1.0})

    def test_zero_weights_are_removed(self):
        mask = TopologyMask.from_edges(3, [(0, 1), (1, 2)])
        g = WeightedGraph.from_vector(mask, [0.0, 2.0])
        assert g.edges == [(1, 2)]
        assert list(g.weight_vector()) == [0.0, 2.0]

    def test_pruned_keeps_mask(self):
        mask = TopologyMask.from_edges(3, [(0, 1), (1, 2)])
        g = WeightedGraph.from_vector(mask, [5e-5, 1.0]).pruned(1e-4)
        assert g.edges == [(1, 2)]
        assert g.mask == mask

    def test_json_round_trip_is_idempotent(self):
        data = {"n": 3, "edges": [{"i": 3, "j": 2, "w": 1.5}, {"i": 1, "j": 2}]}
        once = WeightedGraph.from_dict(data).to_dict()
        twice = WeightedGraph.from_dict(once).to_dict()
        assert once == twice
        assert once["edges"] == [{"i": 1, "j": 2}, {"i": 2, "j": 3, "w": 1.5}]

    def test_default_weight_fills_mask_only_edges(self):
        g = WeightedGraph.from_dict({"n": 2, "edges": [{"i": 1, "j": 2}]}, default_weight=0.5)
        assert g.weights == {(0, 1): 0.5}

    def test_malformed_json_rejected(self):
        with pytest.raises(GraphError):
            WeightedGraph.from_dict({"edges": []})
        with pytest.raises(GraphError):
            WeightedGraph.from_dict({"n": 2, "edges": [{"i": 1}]})


class TestLaplacian:
    def test_two_nodes(self):
        g = graph_from_edges(2, [(0, 1, 1.0)])
        assert np.array_equal(laplacian(g), np.array([[1.0, -1.0], [-1.0, 1.0]]))

    def test_empty_graph(self):
        g = WeightedGraph(TopologyMask(3))
        assert np.array_equal(laplacian(g), np.zeros((3, 3)))

    def test_path(self, path3):
        expected = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
        assert np.array_equal(laplacian(path3), expected)

    def test_adjacency_and_degrees(self):
        a, d = adjacency_and_degrees(graph_from_edges(2, [(0, 1, 2.0)]))
        assert np.array_equal(a, [[0.0, 2.0], [2.0, 0.0]])
        assert np.array_equal(d, [2.0, 2.0])
        _, d = adjacency_and_degrees(graph_from_edges(3, [(0, 1, 1.0), (1, 2, 3.0)]))
        assert np.array_equal(d, [1.0, 4.0, 3.0])

    def test_rows_sum_to_zero_and_reconstruct(self):
        rng = np.random.default_rng(3)
        for n in (2, 5, 9):
            g = random_connected_graph(rng, n)
            lap = laplacian(g)
            a, d = adjacency_and_degrees(g)
            assert np.allclose(lap.sum(axis=1), 0.0, atol=1e-12)
            assert np.allclose(lap, lap.T)
            assert np.allclose(lap, np.diag(d) - a, atol=1e-12)


class TestSpectrum:
    def test_jacobi_matches_numpy(self):
        rng = np.random.default_rng(0)
        for n in (1, 2, 4, 7, 12):
            b = rng.normal(size=(n, n))
            a = b + b.T
            values, vectors = jacobi_eigh(a)
            assert np.allclose(values, np.linalg.eigvalsh(a), atol=1e-10)
            assert np.allclose(a @ vectors, vectors * values, atol=1e-9)
            assert np.allclose(vectors.T @ vectors, np.eye(n), atol=1e-10)

    def test_jacobi_reports_non_convergence(self):
        a = np.array([[2.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]])
        with pytest.raises(EigenSolverError) as info:
            jacobi_eigh(a, max_sweeps=0)
        assert info.value.residual > 0

    @pytest.mark.filterwarnings("error")
    def test_jacobi_tiny_off_diagonal_entry(self):
        a = np.array([[1.0, 1e-170, 0.5], [1e-170, 2.0, 0.5], [0.5, 0.5, 3.0]])
        values, vectors = jacobi_eigh(a)
        assert np.allclose(values, np.linalg.eigvalsh(a), atol=1e-10)
        assert np.allclose(a @ vectors, vectors * values, atol=1e-9)

    def test_complete_graph(self):
        g = graph_from_edges(4, [(i, j, 1.0) for i in range(4) for j in range(i + 1, 4)])
        summary = spectral_summary(g)
        assert np.allclose(summary.eigenvalues, [0.0, 4.0, 4.0, 4.0], atol=1e-10)
        assert summary.degenerate_fiedler

    def test_path(self, path3):
        summary = spectral_summary(path3)
        assert np.allclose(summary.eigenvalues, [0.0, 1.0, 3.0], atol=1e-10)
        assert summary.lambda2 == pytest.approx(1.0, abs=1e-10)
        assert summary.lambda_max == pytest.approx(3.0, abs=1e-10)
        assert not summary.degenerate_fiedler

    def test_disconnected_graph_has_zero_lambda2(self):
        g = graph_from_edges(4, [(0, 1, 1.0), (2, 3, 2.0)])
        summary = spectral_summary(g)
        assert abs(summary.lambda2) < 1e-9
        assert abs(float(np.sum(summary.fiedler_vector))) < 1e-9

    def test_fiedler_vector_properties_and_residuals(self):
        rng = np.random.default_rng(5)
        for n in (3, 6, 10):
            g = random_connected_graph(rng, n)
            lap = laplacian(g)
            summary = spectral_summary(g)
            assert np.all(np.diff(summary.eigenvalues) >= -1e-12)
            assert abs(summary.eigenvalues[0]) < 1e-9
            assert np.linalg.norm(summary.fiedler_vector) == pytest.approx(1.0, abs=1e-12)
            assert abs(float(np.sum(summary.fiedler_vector))) < 1e-9
            tol = 1e-8 * max(1.0, summary.lambda_max)
            for k in range(n):
                v = summary.eigenvectors[:, k]
                assert np.linalg.norm(lap @ v - summary.eigenvalues[k] * v) <= tol
            assert summary.lambda2 == pytest.approx(np.linalg.eigvalsh(lap)[1], abs=1e-9)

    def test_single_agent_rejected(self):
        with pytest.raises(GraphError):
            spectral_summary(WeightedGraph(TopologyMask(1)))


class TestConnectivity:
    def test_small_cases(self, path3):
        assert is_connected(path3, 1e-9)
        assert not is_connected(WeightedGraph(TopologyMask.from_edges(2, [(0, 1)])), 1e-9)

    def test_ten_node_stand_in(self, ten_node_graph):
        assert is_connected(ten_node_graph)
        assert bfs_connected(ten_node_graph)
        assert component_count(ten_node_graph) == 1
        _, degrees = adjacency_and_degrees(ten_node_graph)
        assert degrees.max() == 4.0
        assert ten_node_graph.mask.n_edges == 18

    def test_spectral_and_combinatorial_checks_agree(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            n = int(rng.integers(2, 9))
            edges = [(i, j, float(rng.uniform(0.1, 3.0)))
                     for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3]
            g = graph_from_edges(n, edges) if edges else WeightedGraph(TopologyMask(n))
            connected = bfs_connected(g)
            assert is_connected(g) == connected
            assert (lambda2(g) > 1e-9) == connected
            assert lambda2(g) >= -1e-9

    def test_tolerance_must_be_positive(self, path3):
        with pytest.raises(GraphError):
            is_connected(path3, 0.0)
