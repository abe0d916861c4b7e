"""Graphs, random-walk transition matrices and power-series diffusion of features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Graph:
    """A single graph with node features and optional node labels.

    ``edges`` holds arcs ``(source, target)`` with matching ``weights``.  For an
    undirected graph every non-loop arc appears in both directions; build
    graphs with :meth:`from_edges` to get that canonical form.  A negative
    node label marks an unlabeled node.
    """

    num_nodes: int
    edges: np.ndarray
    weights: np.ndarray
    features: np.ndarray
    node_labels: np.ndarray | None = None
    directed: bool = False

    def __post_init__(self):
        n = int(self.num_nodes)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != n:
            raise ValueError(
                f"feature matrix must have {n} rows, got shape {features.shape}"
            )
        if weights.shape[0] != edges.shape[0]:
            raise ValueError("one weight per edge required")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError(f"edge endpoint outside [0, {n})")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("edge weights must be finite and nonnegative")
        labels = self.node_labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != n:
                raise ValueError(f"expected {n} node labels, got {labels.shape[0]}")
            labels = _frozen(labels)
        object.__setattr__(self, "num_nodes", n)
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "node_labels", labels)
        if not self.directed and not _is_symmetric(edges, weights, n):
            raise ValueError("undirected graph needs a symmetric arc list")

    @classmethod
    def from_edges(cls, num_nodes, edges=(), weights=None, features=None,
                   node_labels=None, directed=False) -> Graph:
        """Build a graph from a raw edge list.

        Duplicate edges collapse with summed weights.  For undirected graphs
        ``(u, v)`` and ``(v, u)`` name the same edge, and the stored arc list
        is symmetrized.  Self-loops are kept.  ``features=None`` gives a
        featureless graph (zero columns).
        """
        n = int(num_nodes)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(len(edges))
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if weights.shape[0] != edges.shape[0]:
            raise ValueError("one weight per edge required")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError(f"edge endpoint outside [0, {n})")
        if features is None:
            features = np.zeros((n, 0))
        if not directed:
            edges = np.sort(edges, axis=1)
        edges, weights = _collapse(edges, weights, n)
        if not directed:
            off = edges[:, 0] != edges[:, 1]
            edges = np.concatenate([edges, edges[off][:, ::-1]])
            weights = np.concatenate([weights, weights[off]])
            edges, weights = _collapse(edges, weights, n)
        return cls(n, edges, weights, features, node_labels, directed)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_arcs(self) -> int:
        return self.edges.shape[0]

    def edge_pairs(self, include_loops=False):
        """Distinct edges (one row per undirected edge) and their weights."""
        e, w = self.edges, self.weights
        if not self.directed:
            keep = e[:, 0] <= e[:, 1]
            e, w = e[keep], w[keep]
        if not include_loops:
            keep = e[:, 0] != e[:, 1]
            e, w = e[keep], w[keep]
        return e, w

    @property
    def num_edges(self) -> int:
        """Number of distinct non-loop edges (rows of the incidence matrix)."""
        return self.edge_pairs()[0].shape[0]

    def adjacency(self) -> sp.csr_matrix:
        n = self.num_nodes
        a = sp.csr_matrix(
            (self.weights, (self.edges[:, 0], self.edges[:, 1])), shape=(n, n)
        )
        a.sort_indices()
        return a

    def with_features(self, features) -> Graph:
        return Graph(self.num_nodes, self.edges, self.weights, features,
                     self.node_labels, self.directed)

    def with_labels(self, node_labels) -> Graph:
        return Graph(self.num_nodes, self.edges, self.weights, self.features,
                     node_labels, self.directed)

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented
        if (self.num_nodes, self.directed) != (other.num_nodes, other.directed):
            return False
        if (self.node_labels is None) != (other.node_labels is None):
            return False
        return (
            np.array_equal(self.edges, other.edges)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.features, other.features)
            and (self.node_labels is None
                 or np.array_equal(self.node_labels, other.node_labels))
        )

    __hash__ = None


def _collapse(edges, weights, n):
    """Sort arcs lexicographically and merge duplicates by summing weights."""
    if edges.shape[0] == 0:
        return edges.reshape(0, 2), weights
    keys = edges[:, 0] * n + edges[:, 1]
    uniq, inv = np.unique(keys, return_inverse=True)
    summed = np.bincount(inv.ravel(), weights=weights, minlength=len(uniq))
    return np.stack([uniq // n, uniq % n], axis=1), summed


def _is_symmetric(edges, weights, n):
    if edges.shape[0] == 0:
        return True
    a = sp.csr_matrix((weights, (edges[:, 0], edges[:, 1])), shape=(n, n))
    return abs(a - a.T).sum() == 0


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Sparse row-stochastic matrix; rows of isolated nodes are all zero."""

    matrix: sp.csr_matrix

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def toarray(self):
        return self.matrix.toarray()


def build_transition(graph: Graph) -> TransitionMatrix:
    a = graph.adjacency().astype(np.float64)
    degree = np.asarray(a.sum(axis=1)).ravel()
    row_of = np.repeat(np.arange(graph.num_nodes), np.diff(a.indptr))
    d = degree[row_of]
    a.data = np.divide(a.data, d, out=np.zeros_like(a.data), where=d > 0)
    return TransitionMatrix(a)


@dataclass(frozen=True, eq=False)
class DiffusedFeatures:
    """``values[i, j, k]`` is feature ``k`` of node ``i`` after ``j`` diffusion hops."""

    values: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def num_hops(self) -> int:
        return self.values.shape[1] - 1

    @property
    def num_features(self) -> int:
        return self.values.shape[2]

    def hop(self, j):
        return self.values[:, j, :]

    def flat(self):
        """Per-node rows of length ``(H + 1) * F`` (a view)."""
        return self.values.reshape(self.num_nodes, -1)


def diffuse_features(P, X, hops: int, backend=None) -> DiffusedFeatures:
    """Stack ``P^j X`` for ``j = 0..hops`` by repeated sparse products.

    ``P^j`` itself is never formed; memory is ``O(N * (hops + 1) * F)``.
    """
    if hops < 0:
        raise ValueError("hop count must be nonnegative")
    mat = P.matrix if isinstance(P, TransitionMatrix) else sp.csr_matrix(P)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = mat.shape[0]
    if mat.shape[1] != n or X.shape[0] != n:
        raise ValueError(
            f"dimension mismatch: transition {mat.shape}, features {X.shape}"
        )
    out = np.empty((n, hops + 1, X.shape[1]))
    out[:, 0, :] = X
    for j in range(1, hops + 1):
        kernels.spmm_csr(mat.indptr, mat.indices, mat.data,
                         out[:, j - 1, :], out[:, j, :], backend=backend)
    out.setflags(write=False)
    return DiffusedFeatures(out)


def diffuse(graph: Graph, hops: int, backend=None) -> DiffusedFeatures:
    return diffuse_features(build_transition(graph), graph.features, hops, backend)


def incidence_matrix(graph: Graph) -> sp.csr_matrix:
    """Edge-by-node 0/1 matrix with ones at both endpoints of each edge."""
    pairs, _ = graph.edge_pairs()
    m = pairs.shape[0]
    rows = np.repeat(np.arange(m), 2)
    return sp.csr_matrix(
        (np.ones(2 * m), (rows, pairs.ravel())), shape=(m, graph.num_nodes)
    )


def augment_with_edges(graph: Graph, edge_features=None, edge_labels=None) -> Graph:
    """Turn every edge into a node linked to its two endpoints.

    The result has ``N + M`` nodes and adjacency ``[[A, B^T], [B, 0]]`` where
    ``B`` is the incidence matrix.  Edge-node features come from
    ``edge_features`` (``M x F``) or default to 1.0 in every column.  With
    ``edge_labels`` the edge nodes carry those labels; original nodes keep
    their labels, or are marked unlabeled (-1).
    """
    pairs, _ = graph.edge_pairs()
    n, m, f = graph.num_nodes, pairs.shape[0], graph.num_features
    if edge_features is None:
        edge_features = np.ones((m, f))
    edge_features = np.asarray(edge_features, dtype=np.float64)
    if edge_features.ndim == 1:
        edge_features = edge_features[:, None]
    if edge_features.shape[0] != m:
        raise ValueError(f"edge_features needs {m} rows, got {edge_features.shape[0]}")
    if edge_features.shape[1] != f:
        raise ValueError(f"edge_features needs {f} columns, got {edge_features.shape[1]}")
    edge_nodes = n + np.arange(m)
    links = np.concatenate([
        np.stack([pairs[:, 0], edge_nodes], axis=1),
        np.stack([pairs[:, 1], edge_nodes], axis=1),
    ])
    if graph.directed:
        arcs = np.concatenate([graph.edges, links, links[:, ::-1]])
        weights = np.concatenate([graph.weights, np.ones(4 * m)])
    else:
        base, base_w = graph.edge_pairs(include_loops=True)
        arcs = np.concatenate([base, links])
        weights = np.concatenate([base_w, np.ones(2 * m)])
    labels = None
    if edge_labels is not None:
        edge_labels = np.asarray(edge_labels, dtype=np.int64).reshape(-1)
        if edge_labels.shape[0] != m:
            raise ValueError(f"expected {m} edge labels, got {edge_labels.shape[0]}")
        node_part = graph.node_labels if graph.node_labels is not None \
            else np.full(n, -1)
        labels = np.concatenate([node_part, edge_labels])
    elif graph.node_labels is not None:
        labels = np.concatenate([graph.node_labels, np.full(m, -1)])
    return Graph.from_edges(
        n + m, arcs, weights,
        np.vstack([graph.features, edge_features]),
        labels, directed=graph.directed,
    )


def add_bias_feature(graph: Graph) -> Graph:
    ones = np.ones((graph.num_nodes, 1))
    return graph.with_features(np.hstack([ones, graph.features]))


def permute_graph(graph: Graph, perm) -> Graph:
    """Relabel nodes so that node ``i`` of the result is node ``perm[i]`` of ``graph``."""
    perm = np.asarray(perm, dtype=np.int64).reshape(-1)
    n = graph.num_nodes
    if perm.shape[0] != n or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValueError("perm must be a bijection on the node indices")
    inverse = np.empty(n, dtype=np.int64)
    inverse[perm] = np.arange(n)
    arcs, weights = _collapse(inverse[graph.edges], graph.weights, n) \
        if graph.num_arcs else (graph.edges, graph.weights)
    labels = None if graph.node_labels is None else graph.node_labels[perm]
    return Graph(n, arcs, weights, graph.features[perm], labels, graph.directed)
