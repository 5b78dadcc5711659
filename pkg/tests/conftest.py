import os

import numpy as np
import pytest

from utils.exporters import read_graph
from utils.formation_sim import FormationSpec
from utils.graph_core import TopologyMask, WeightedGraph
from utils.perf_analysis import NetworkScenario
from utils.privacy_mech import NoiseModel

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")

TEN_NODE_EPS_MAX = [0.4, 0.9, 0.55, 0.35, 0.8, 0.45, 0.7, 0.5, 0.52, 0.58]


def graph_from_edges(n, weighted_edges):
    """Zero-based (i, j, w) triples to a WeightedGraph over exactly those edges."""
    mask = TopologyMask.from_edges(n, [(i, j) for i, j, _ in weighted_edges])
    return WeightedGraph(mask, {(i, j): w for i, j, w in weighted_edges})


def make_scenario(g, gamma, privacy_sigmas, process_sigmas, d=1):
    noise = NoiseModel.uncalibrated(privacy_sigmas, process_sigmas)
    return NetworkScenario(g, FormationSpec.at_origin(g.n_agents, d), gamma, noise, d)


def random_connected_graph(rng, n):
    """Random spanning tree plus random extra edges, weights in [0.5, 2]."""
    order = rng.permutation(n)
    edges = {}
    for k in range(1, n):
        i, j = int(order[k]), int(order[rng.integers(0, k)])
        edges[(min(i, j), max(i, j))] = float(rng.uniform(0.5, 2.0))
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < 0.3:
                edges[(i, j)] = float(rng.uniform(0.5, 2.0))
    return graph_from_edges(n, [(i, j, w) for (i, j), w in edges.items()])


def random_scenario(rng, n, gamma_factor=0.9, d=1):
    g = random_connected_graph(rng, n)
    degrees = np.array([sum(w for (i, j), w in g.weights.items() if k in (i, j)) for k in range(n)])
    gamma = gamma_factor / degrees.max()
    return make_scenario(g, gamma, rng.uniform(0.0, 3.0, n), rng.uniform(0.0, 1.0, n), d)


@pytest.fixture
def two_node_graph():
    return graph_from_edges(2, [(0, 1, 1.0)])


@pytest.fixture
def two_node_scenario(two_node_graph):
    """N=2, w=1, gamma=1/4, sigma^2=1, s=0: exact e_ss is 1/24."""
    return make_scenario(two_node_graph, 0.25, [1.0, 1.0], [0.0, 0.0])


@pytest.fixture
def path3():
    return graph_from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])


@pytest.fixture
def ten_node_graph():
    return read_graph(os.path.join(DATA_DIR, "ten_node.json"), default_weight=1.0)


@pytest.fixture
def ten_node_mask(ten_node_graph):
    return ten_node_graph.mask
