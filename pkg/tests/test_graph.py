import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dcnn.graph import (DiffusedFeatures, Graph, add_bias_feature, augment_with_edges,
                        build_transition, diffuse, diffuse_features, incidence_matrix,
                        permute_graph)

from .conftest import graphs, random_graph


def dense_transition(graph):
    """Independent oracle: dense adjacency divided by row sums."""
    A = np.zeros((graph.num_nodes, graph.num_nodes))
    for (u, v), w in zip(graph.edges, graph.weights):
        A[u, v] += w
    deg = A.sum(axis=1, keepdims=True)
    return np.divide(A, deg, out=np.zeros_like(A), where=deg > 0)


# -- construction -----------------------------------------------------------

def test_from_edges_symmetrizes_and_collapses():
    g = Graph.from_edges(3, [(0, 1), (1, 0), (1, 2)], weights=[1.0, 2.0, 1.0])
    A = g.adjacency().toarray()
    assert np.array_equal(A, [[0, 3, 0], [3, 0, 1], [0, 1, 0]])
    assert g.num_edges == 2 and g.num_arcs == 4


def test_self_loops_kept_and_count_in_degree():
    g = Graph.from_edges(2, [(0, 0), (0, 1)])
    P = build_transition(g).toarray()
    assert np.allclose(P[0], [0.5, 0.5])
    assert g.num_edges == 1


@pytest.mark.parametrize("kwargs", [
    dict(num_nodes=2, edges=[(0, 2)]),
    dict(num_nodes=2, edges=[(-1, 0)]),
    dict(num_nodes=2, edges=[(0, 1)], weights=[1.0, 2.0]),
    dict(num_nodes=2, edges=[(0, 1)], weights=[-1.0]),
    dict(num_nodes=2, edges=[(0, 1)], features=np.ones((3, 1))),
    dict(num_nodes=2, edges=[(0, 1)], node_labels=[0]),
])
def test_from_edges_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        Graph.from_edges(**kwargs)


def test_direct_constructor_requires_symmetric_arcs():
    with pytest.raises(ValueError, match="symmetric"):
        Graph(2, [(0, 1)], [1.0], np.ones((2, 1)))
    Graph(2, [(0, 1)], [1.0], np.ones((2, 1)), directed=True)


def test_graph_arrays_are_read_only(path3):
    with pytest.raises(ValueError):
        path3.features[0, 0] = 5.0


# -- transition matrix ------------------------------------------------------

def test_transition_path(path3):
    P = build_transition(path3).toarray()
    assert np.array_equal(P, [[0, 1, 0], [0.5, 0, 0.5], [0, 1, 0]])


def test_transition_edgeless_is_zero():
    P = build_transition(Graph.from_edges(2, [])).toarray()
    assert np.array_equal(P, np.zeros((2, 2)))


def test_transition_weighted_directed():
    g = Graph.from_edges(3, [(0, 1), (0, 2)], weights=[3.0, 1.0], directed=True)
    assert np.array_equal(build_transition(g).toarray()[0], [0, 0.75, 0.25])


@given(graphs())
def test_row_stochastic(g):
    P = build_transition(g)
    sums = P.row_sums()
    assert np.all(P.matrix.data >= 0)
    ok = (np.abs(sums - 1.0) <= 1e-12) | (sums == 0.0)
    assert ok.all()
    assert np.allclose(P.toarray(), dense_transition(g), atol=1e-15)


# -- diffusion --------------------------------------------------------------

def test_diffuse_path(path3):
    D = diffuse(path3, 2)
    assert D.values.shape == (3, 3, 1)
    assert np.array_equal(D.hop(0), [[1], [2], [3]])
    assert np.array_equal(D.hop(1), [[2], [2], [2]])
    assert np.array_equal(D.hop(2), [[2], [2], [2]])


def test_diffuse_zero_hops_is_identity(rng):
    g = random_graph(rng, 8, 0.4, 3)
    D = diffuse(g, 0)
    assert D.num_hops == 0
    assert np.array_equal(D.hop(0), g.features)


def test_diffuse_edgeless_dies_after_hop_zero(rng):
    X = rng.normal(size=(4, 2))
    D = diffuse(Graph.from_edges(4, [], features=X), 2)
    assert np.array_equal(D.hop(0), X)
    assert not D.hop(1).any() and not D.hop(2).any()


def test_diffuse_rejects_negative_hops(path3):
    with pytest.raises(ValueError):
        diffuse(path3, -1)


def test_diffuse_rejects_mismatched_features(path3):
    with pytest.raises(ValueError, match="mismatch"):
        diffuse_features(build_transition(path3), np.ones((4, 1)), 1)


def test_diffused_output_read_only(path3):
    D = diffuse(path3, 1)
    with pytest.raises(ValueError):
        D.values[0, 0, 0] = 1.0


@given(graphs(), st.integers(0, 4))
def test_diffusion_recurrence(g, hops):
    D = diffuse(g, hops)
    P = dense_transition(g)
    assert np.array_equal(D.hop(0), g.features)
    for j in range(1, hops + 1):
        assert np.abs(D.hop(j) - P @ D.hop(j - 1)).max(initial=0.0) <= 1e-12


@given(st.integers(2, 15), st.integers(0, 2 ** 32 - 1), st.integers(0, 5))
def test_mass_conservation_on_connected_graphs(n, seed, hops):
    rng = np.random.default_rng(seed)
    # a random spanning tree plus random extra edges keeps the graph connected
    tree = [(int(rng.integers(0, i)), i) for i in range(1, n)]
    extra = [tuple(e) for e in rng.integers(0, n, size=(n, 2)) if e[0] != e[1]]
    g = Graph.from_edges(n, tree + extra, features=np.ones((n, 1)))
    D = diffuse(g, hops)
    assert np.abs(D.values - 1.0).max() <= 1e-12


@given(graphs(), st.integers(0, 3), st.data())
def test_permutation_equivariance(g, hops, data):
    perm = np.asarray(data.draw(st.permutations(range(g.num_nodes))))
    a = diffuse(permute_graph(g, perm), hops).values
    b = diffuse(g, hops).values[perm]
    assert np.abs(a - b).max(initial=0.0) <= 1e-12


def test_permutation_equivariance_exact_for_integer_features(rng):
    g = Graph.from_edges(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)],
                         features=rng.integers(0, 5, size=(6, 2)).astype(float))
    perm = rng.permutation(6)
    a = diffuse(permute_graph(g, perm), 3).values
    assert np.array_equal(a, diffuse(g, 3).values[perm])


# -- incidence / augmentation ----------------------------------------------

def test_incidence_rows_have_two_ones(rng):
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 2), (3, 0)])
    B = incidence_matrix(g).toarray()
    assert B.shape == (3, 4)
    assert np.array_equal(B.sum(axis=1), [2, 2, 2])
    assert set(np.unique(B)) <= {0.0, 1.0}


def test_augment_single_edge_is_triangle():
    aug = augment_with_edges(Graph.from_edges(2, [(0, 1)], features=np.ones((2, 1))))
    assert np.array_equal(aug.adjacency().toarray(),
                          [[0, 1, 1], [1, 0, 1], [1, 1, 0]])


def test_augment_path_edge_nodes(path3):
    aug = augment_with_edges(path3)
    A = aug.adjacency().toarray()
    assert aug.num_nodes == 5
    assert set(np.nonzero(A[3])[0]) == {0, 1}
    assert set(np.nonzero(A[4])[0]) == {1, 2}
    assert np.array_equal(aug.features[3:], np.ones((2, 1)))


def test_augment_without_edges_is_unchanged(rng):
    X = rng.normal(size=(3, 2))
    g = Graph.from_edges(3, [], features=X)
    aug = augment_with_edges(g)
    assert aug.num_nodes == 3
    assert np.array_equal(aug.features, X)
    assert aug.num_arcs == 0


def test_augment_labels_and_features(path3):
    aug = augment_with_edges(path3, edge_features=[5.0, 6.0], edge_labels=[1, 0])
    assert np.array_equal(aug.node_labels, [-1, -1, -1, 1, 0])
    assert np.array_equal(aug.features[3:, 0], [5.0, 6.0])
    with pytest.raises(ValueError):
        augment_with_edges(path3, edge_labels=[1])
    with pytest.raises(ValueError):
        augment_with_edges(path3, edge_features=np.ones((2, 2)))


@given(graphs(directed=False))
def test_augmentation_size_law(g):
    aug = augment_with_edges(g)
    m = g.num_edges
    assert aug.num_nodes == g.num_nodes + m
    A = aug.adjacency()
    edge_rows = A[g.num_nodes:]
    assert np.array_equal(np.diff(edge_rows.indptr), np.full(m, 2))
    # the original block is untouched
    assert np.allclose(A[:g.num_nodes, :g.num_nodes].toarray(),
                       g.adjacency().toarray())


# -- bias / permutation -----------------------------------------------------

def test_bias_on_featureless_graph():
    g = add_bias_feature(Graph.from_edges(4, [(0, 1)]))
    assert np.array_equal(g.features, np.ones((4, 1)))


def test_bias_prepends_column(rng):
    X = rng.normal(size=(3, 3))
    g = add_bias_feature(Graph.from_edges(3, [], features=X))
    assert g.num_features == 4
    assert np.array_equal(g.features[:, 0], np.ones(3))
    assert np.array_equal(g.features[:, 1:], X)
    assert add_bias_feature(g).num_features == 5


def test_identity_permutation(rng):
    g = random_graph(rng, 7, 0.4, 2, labels=rng.integers(0, 2, 7))
    assert permute_graph(g, np.arange(7)) == g


def test_swap_ends_of_path(path3):
    h = permute_graph(path3, [2, 1, 0])
    assert np.array_equal(h.adjacency().toarray(), path3.adjacency().toarray())
    assert np.array_equal(h.features, [[3], [2], [1]])


@pytest.mark.parametrize("perm", [[0, 0, 1], [0, 1], [0, 1, 3]])
def test_permutation_must_be_bijection(path3, perm):
    with pytest.raises(ValueError):
        permute_graph(path3, perm)


def test_diffused_features_accessors():
    D = DiffusedFeatures(np.arange(12.0).reshape(2, 3, 2))
    assert (D.num_nodes, D.num_hops, D.num_features) == (2, 2, 2)
    assert np.array_equal(D.flat()[1], np.arange(6.0, 12.0))
