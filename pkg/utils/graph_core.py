"""Weighted undirected graphs and the Laplacian spectral quantities built on them.

Agents are indexed from zero internally. Edges are unordered pairs stored as
``(i, j)`` with ``i < j``; every dense matrix is materialized on demand.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

from utils.errors import EigenSolverError, GraphError

logger = logging.getLogger(__name__)

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
JACOBI_LARGE_THETA = 1e150
DEGENERACY_TOL = 1e-9


def _normalize_pair(i: int, j: int, n: int) -> tuple[int, int]:
    i, j = int(i), int(j)
    if i == j:
        raise GraphError(f"self-loop on agent {i + 1} is not allowed")
    if not (0 <= i < n and 0 <= j < n):
        raise GraphError(f"edge ({i + 1}, {j + 1}) references an agent outside 1..{n}")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class TopologyMask:
    """The unweighted input graph: which pairs may communicate."""

    n_agents: int
    allowed_edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if int(self.n_agents) < 1:
            raise GraphError("a topology needs at least one agent")
        object.__setattr__(self, "n_agents", int(self.n_agents))
        pairs = frozenset(_normalize_pair(i, j, self.n_agents) for i, j in self.allowed_edges)
        object.__setattr__(self, "allowed_edges", pairs)

    @classmethod
    def from_edges(cls, n_agents: int, edges: Iterable[tuple[int, int]]) -> "TopologyMask":
        return cls(n_agents, frozenset(tuple(e) for e in edges))

    @property
    def edge_list(self) -> list[tuple[int, int]]:
        """Edges in sorted order; this order indexes every edge-weight vector."""
        return sorted(self.allowed_edges)

    @property
    def n_edges(self) -> int:
        return len(self.allowed_edges)

    def __contains__(self, pair) -> bool:
        i, j = pair
        return (min(i, j), max(i, j)) in self.allowed_edges

    def to_dict(self) -> dict:
        return {"n": self.n_agents, "edges": [{"i": i + 1, "j": j + 1} for i, j in self.edge_list]}

    @classmethod
    def from_dict(cls, data: Mapping) -> "TopologyMask":
        n, entries = _parse_graph_dict(data)
        return cls.from_edges(n, [(i, j) for i, j, _ in entries])


@dataclass(frozen=True)
class WeightedGraph:
    """Positively weighted edges on a subset of a mask."""

    mask: TopologyMask
    weights: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        n = self.mask.n_agents
        clean = {}
        for (i, j), w in self.weights.items():
            pair = _normalize_pair(i, j, n)
            if pair not in self.mask.allowed_edges:
                raise GraphError(f"edge ({pair[0] + 1}, {pair[1] + 1}) is not in the topology mask")
            w = float(w)
            if not math.isfinite(w) or w < 0:
                raise GraphError(f"edge ({pair[0] + 1}, {pair[1] + 1}) has invalid weight {w}")
            if pair in clean:
                raise GraphError(f"edge ({pair[0] + 1}, {pair[1] + 1}) is listed twice")
            if w > 0:
                clean[pair] = w
        object.__setattr__(self, "weights", dict(sorted(clean.items())))

    @classmethod
    def uniform(cls, mask: TopologyMask, weight: float = 1.0) -> "WeightedGraph":
        return cls(mask, {e: weight for e in mask.edge_list})

    @classmethod
    def from_vector(cls, mask: TopologyMask, vector) -> "WeightedGraph":
        """Build from one weight per mask edge (sorted edge order); zeros are dropped."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (mask.n_edges,):
            raise GraphError(f"expected {mask.n_edges} edge weights, got shape {vector.shape}")
        return cls(mask, {e: w for e, w in zip(mask.edge_list, vector) if w > 0})

    @property
    def n_agents(self) -> int:
        return self.mask.n_agents

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(self.weights)

    def weight_vector(self) -> np.ndarray:
        return np.array([self.weights.get(e, 0.0) for e in self.mask.edge_list])

    def total_weight(self) -> float:
        return float(sum(self.weights.values()))

    def pruned(self, threshold: float) -> "WeightedGraph":
        """Drop edges lighter than ``threshold``; they stay in the mask."""
        return WeightedGraph(self.mask, {e: w for e, w in self.weights.items() if w >= threshold})

    def relabeled(self, permutation) -> "WeightedGraph":
        """Agent ``i`` becomes agent ``permutation[i]``."""
        perm = [int(p) for p in permutation]
        mask = TopologyMask.from_edges(self.n_agents, [(perm[i], perm[j]) for i, j in self.mask.edge_list])
        return WeightedGraph(mask, {(perm[i], perm[j]): w for (i, j), w in self.weights.items()})

    def to_dict(self) -> dict:
        """Graph JSON: one-based indices; mask-only edges carry no ``w``."""
        edges = []
        for i, j in self.mask.edge_list:
            entry = {"i": i + 1, "j": j + 1}
            if (i, j) in self.weights:
                entry["w"] = self.weights[(i, j)]
            edges.append(entry)
        return {"n": self.n_agents, "edges": edges}

    @classmethod
    def from_dict(cls, data: Mapping, default_weight: float | None = None) -> "WeightedGraph":
        n, entries = _parse_graph_dict(data)
        mask = TopologyMask.from_edges(n, [(i, j) for i, j, _ in entries])
        weights = {}
        for i, j, w in entries:
            if w is None:
                w = default_weight
            if w is not None:
                weights[(i, j)] = w
        return cls(mask, weights)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_agents))
        graph.add_weighted_edges_from((i, j, w) for (i, j), w in self.weights.items())
        return graph


@dataclass(frozen=True)
class SpectralSummary:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    fiedler_vector: np.ndarray
    lambda2: float
    lambda_max: float
    degenerate_fiedler: bool = False

    @property
    def max_vector(self) -> np.ndarray:
        return self.eigenvectors[:, -1]


def adjacency_and_degrees(g: WeightedGraph) -> tuple[np.ndarray, np.ndarray]:
    n = g.n_agents
    adjacency = np.zeros((n, n))
    for (i, j), w in g.weights.items():
        adjacency[i, j] = w
        adjacency[j, i] = w
    return adjacency, adjacency.sum(axis=1)


def laplacian(g: WeightedGraph) -> np.ndarray:
    adjacency, degrees = adjacency_and_degrees(g)
    return np.diag(degrees) - adjacency


def mask_laplacian(mask: TopologyMask) -> np.ndarray:
    return laplacian(WeightedGraph.uniform(mask))


def _off_diagonal_norm(a: np.ndarray) -> float:
    return math.sqrt(2.0 * float(np.sum(np.tril(a, -1) ** 2)))


def jacobi_eigh(matrix, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigensolver for a real symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors as columns. Raises ``EigenSolverError`` when the off-diagonal
    Frobenius norm is still above ``tol * max(1, ||A||_F)`` after
    ``max_sweeps`` sweeps.
    """
    a = np.array(matrix, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise GraphError(f"jacobi_eigh needs a square matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    threshold = tol * max(1.0, float(np.linalg.norm(a)))

    for _ in range(max_sweeps):
        if _off_diagonal_norm(a) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > JACOBI_LARGE_THETA:
                    # theta**2 would overflow; t ~ 1/(2 theta)
                    t = 1.0 / (2.0 * abs(theta))
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        residual = _off_diagonal_norm(a)
        if residual > threshold:
            raise EigenSolverError(
                f"Jacobi eigensolver did not converge in {max_sweeps} sweeps (off-diagonal norm {residual:.3e})",
                residual=residual,
            )

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def _fix_sign(vector: np.ndarray) -> np.ndarray:
    nonzero = np.flatnonzero(np.abs(vector) > 1e-12)
    if nonzero.size and vector[nonzero[0]] < 0:
        return -vector
    return vector


def spectral_summary(g: WeightedGraph) -> SpectralSummary:
    n = g.n_agents
    if n < 2:
        raise GraphError("spectral quantities need at least two agents")
    eigenvalues, vectors = jacobi_eigh(laplacian(g))
    scale = max(1.0, float(eigenvalues[-1]))

    # The kernel always contains the consensus direction; pin it as the first
    # column so the remaining kernel vectors (disconnected graphs) are orthogonal to 1.
    n_zero = max(1, int(np.sum(eigenvalues < DEGENERACY_TOL * scale)))
    vectors = vectors.copy()
    if n_zero > 1:
        kernel = vectors[:, :n_zero] - vectors[:, :n_zero].mean(axis=0)
        u, _, _ = np.linalg.svd(kernel, full_matrices=False)
        vectors[:, 1:n_zero] = u[:, : n_zero - 1]
    vectors[:, 0] = 1.0 / math.sqrt(n)

    for k in range(n):
        vectors[:, k] = _fix_sign(vectors[:, k] / np.linalg.norm(vectors[:, k]))

    degenerate = n >= 3 and abs(eigenvalues[2] - eigenvalues[1]) < DEGENERACY_TOL
    return SpectralSummary(
        eigenvalues=eigenvalues,
        eigenvectors=vectors,
        fiedler_vector=vectors[:, 1].copy(),
        lambda2=float(eigenvalues[1]),
        lambda_max=float(eigenvalues[-1]),
        degenerate_fiedler=bool(degenerate),
    )


def lambda2(g: WeightedGraph) -> float:
    return spectral_summary(g).lambda2


def component_count(g: WeightedGraph) -> int:
    return nx.number_connected_components(g.to_networkx())


def is_connected(g: WeightedGraph, tol: float = 1e-9) -> bool:
    if tol <= 0:
        raise GraphError("connectivity tolerance must be positive")
    if g.n_agents == 1:
        return True
    return spectral_summary(g).lambda2 > tol


def _parse_graph_dict(data: Mapping) -> tuple[int, list[tuple[int, int, float | None]]]:
    """Validate graph JSON and convert to zero-based ``(i, j, w)`` triples."""
    try:
        n = int(data["n"])
        raw_edges = list(data.get("edges", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"graph must look like {{'n': int, 'edges': [...]}}: {exc}") from exc
    entries = []
    seen = set()
    for entry in raw_edges:
        try:
            i, j = int(entry["i"]) - 1, int(entry["j"]) - 1
            w = entry.get("w")
            w = None if w is None else float(w)
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"malformed edge entry {entry!r}: {exc}") from exc
        pair = _normalize_pair(i, j, n)
        if pair in seen:
            raise GraphError(f"edge ({pair[0] + 1}, {pair[1] + 1}) is listed twice")
        seen.add(pair)
        entries.append((pair[0], pair[1], w))
    return n, entries
