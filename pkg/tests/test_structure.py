import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_graph
from reviewnet.structure import (
    BOX_SIZES,
    NormalizationError,
    as_adjacency,
    bipartite_clustering,
    box_counting_dimension,
    box_counts,
    combine_self_similarity,
    compute_profiles,
    consistency_from_dimensions,
    degree_centrality,
    distance_matrix,
    diversity_weights,
    ego_nodes,
    entropy,
    laplacian_eigenvalues,
    multiscale_consistency,
    neighbor_diversity,
    pagerank,
    pagerank_entropy,
    self_similarity,
    spectral_exponent,
)


def star(leaves):
    return as_adjacency(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


def path(n):
    return as_adjacency(n, [(i, i + 1) for i in range(n - 1)])


def cycle(n):
    return as_adjacency(n, [(i, (i + 1) % n) for i in range(n)])


def random_graph(data, max_n=14):
    n = data.draw(st.integers(2, max_n))
    pairs = data.draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=3 * n))
    return as_adjacency(n, [(u, v) for u, v in pairs if u != v])


# ------------------------------------------------------------------ entropy
@pytest.mark.parametrize("p, expected", [([1.0], 0.0), ([0.5, 0.5], math.log(2)), ([0.25] * 4, math.log(4))])
def test_entropy_values(p, expected):
    assert entropy(p) == pytest.approx(expected)


def test_entropy_rejects_non_distribution():
    with pytest.raises(NormalizationError):
        entropy([0.5, 0.6])


@given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_uniform_maximizes_entropy(w):
    w = np.asarray(w)
    if w.sum() <= 0:
        return
    p = w / w.sum()
    assert entropy(np.full(len(p), 1 / len(p))) >= entropy(p) - 1e-12


# --------------------------------------------------------------- centrality
def test_degree_centrality_examples():
    c = degree_centrality(star(3))
    assert c[0] == pytest.approx(1.0)
    assert c[1] == pytest.approx(1 / 3)
    assert degree_centrality(path(3), 1) == pytest.approx(1.0)


def test_pagerank_triangle_and_isolated():
    assert np.allclose(pagerank(cycle(3)), 1.0)
    assert pagerank(sp.csr_matrix((1, 1)))[0] == pytest.approx(0.15)


def test_pagerank_star_closed_form():
    d, leaves = 0.85, 4
    centre = (1 - d) * (1 + d * leaves) / (1 - d * d)
    leaf = (1 - d) + d * centre / leaves
    pr = pagerank(star(leaves), d)
    assert pr[0] == pytest.approx(centre, abs=1e-6)
    assert pr[1:] == pytest.approx([leaf] * leaves, abs=1e-6)
    assert pr[0] == pytest.approx(2.3784, abs=1e-4)
    assert pr[1] == pytest.approx(0.6554, abs=1e-4)


@given(st.data())
@settings(max_examples=40, deadline=None)
def test_pagerank_fixed_point_residual(data):
    adj = random_graph(data)
    d = 0.85
    pr = pagerank(adj, d, tol=1e-12, max_iter=2000)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    resid = np.abs((1 - d) + d * (adj @ (pr * inv)) - pr).max()
    assert resid < 1e-7


@pytest.mark.parametrize("adj", [cycle(7), cycle(12), as_adjacency(5, [(i, j) for i in range(5) for j in range(i + 1, 5)])])
def test_pagerank_vertex_transitive(adj):
    assert np.allclose(pagerank(adj), 1.0, atol=1e-6)


# ---------------------------------------------------------------- diversity
def test_diversity_single_category():
    adj = star(3)
    cats = np.array([1, 0, 0, 0])
    h = pagerank_entropy(adj, cats, pagerank(adj))
    assert h[0] == 0.0
    assert neighbor_diversity(adj, cats, pagerank(adj))[0] == 0.0


def test_diversity_two_balanced_categories():
    adj = star(2)
    cats = np.array([0, 0, 1])
    h = pagerank_entropy(adj, cats, np.ones(3))
    w = diversity_weights([1, 1], [1.0, 1.0])
    assert w.tolist() == [0.25, 0.25]
    # equal split into two categories: the raw weights are (1/2)(1/2) each
    assert h[0] == pytest.approx(-2 * 0.25 * math.log(0.25))


def test_diversity_weights_unequal():
    w = diversity_weights([3, 1], [3.0, 1.0])
    assert w == pytest.approx([0.5625, 0.0625])
    adj = star(4)
    cats = np.array([0, 0, 0, 0, 1])
    pr = np.array([1.0, 1.0, 1.0, 1.0, 1.0])
    h = pagerank_entropy(adj, cats, pr)
    assert h[0] == pytest.approx(-(0.5625 * math.log(0.5625) + 0.0625 * math.log(0.0625)))


@given(st.permutations(list(range(1, 7))), st.lists(st.integers(0, 3), min_size=7, max_size=7))
@settings(max_examples=40, deadline=None)
def test_diversity_neighbour_order_invariant(order, cats):
    cats = np.asarray(cats)
    pr = np.linspace(0.5, 2.0, 7)
    base = pagerank_entropy(star(6), cats, pr)[0]
    shuffled = as_adjacency(7, [(0, i) for i in order])
    assert pagerank_entropy(shuffled, cats, pr)[0] == pytest.approx(base, abs=1e-12)


def test_bipartite_clustering_complete_bipartite_is_one():
    g = build_graph([(r, p, 0) for r in "ab" for p in "xy"])
    assert np.allclose(bipartite_clustering(g.adjacency()), 1.0)


# ------------------------------------------------------------ box counting
def _greedy_path_boxes(n, radius):
    """Independent covering of a path by consecutive segments of 2r+1 nodes."""
    return math.ceil(n / (2 * radius + 1)) if radius else n


def test_path_box_dimension_near_one():
    sizes = np.asarray(BOX_SIZES, float)
    counts = [_greedy_path_boxes(100, int(s) // 2) for s in sizes]
    oracle = np.polyfit(np.log(1 / sizes), np.log(counts), 1)[0]
    assert 0.85 <= oracle <= 1.15
    fit = box_counting_dimension(path(100))
    assert fit.valid
    assert 0.85 <= fit.exponent <= 1.15
    assert fit.exponent == pytest.approx(oracle, abs=0.05)


def test_box_dimension_degenerate_graphs():
    fit = box_counting_dimension(star(10))
    assert not fit.valid and fit.r_squared == 0
    assert not box_counting_dimension(path(2)).valid


@given(st.data())
@settings(max_examples=40, deadline=None)
def test_box_counts_non_increasing(data):
    adj = random_graph(data, 20)
    counts = box_counts(adj, (1, 2, 3, 4, 6, 8, 16))
    assert all(a >= b for a, b in zip(counts, counts[1:]))


@given(st.integers(2, 40))
def test_path_single_box_at_diameter_plus_one(n):
    adj = path(n)
    dist = distance_matrix(adj)
    assert box_counts(adj, [2 * (n - 1) + 2], dist) == [1]
    assert box_counts(adj, [n], dist) == [1]


# ----------------------------------------------------------------- spectrum
def test_spectral_two_nodes_invalid():
    assert not spectral_exponent(path(2)).valid


def test_spectral_cycle_fit():
    k = np.arange(64)
    oracle = np.sort(2 - 2 * np.cos(2 * np.pi * k / 64))
    assert np.allclose(laplacian_eigenvalues(cycle(64)), oracle, atol=1e-9)
    fit = spectral_exponent(cycle(64))
    assert fit.sample_points >= 3 and math.isfinite(fit.exponent)


@given(st.data())
@settings(max_examples=40, deadline=None)
def test_laplacian_spectrum(data):
    adj = random_graph(data)
    lam = laplacian_eigenvalues(adj)
    n_edges = adj.nnz / 2
    assert lam.min() >= -1e-9
    assert lam.sum() == pytest.approx(2 * n_edges, abs=1e-6 * max(n_edges, 1))


# -------------------------------------------------------------- consistency
def test_consistency_examples():
    assert consistency_from_dimensions([1.3, 1.3, 1.3]) == 1.0
    assert consistency_from_dimensions([1.1]) == 0.5
    assert consistency_from_dimensions([1.0, 1.2, 0.8]) == pytest.approx(math.exp(-np.std([1.0, 1.2, 0.8])))
    assert consistency_from_dimensions([1.0, 1.2, 0.8]) == pytest.approx(0.849, abs=1e-3)


def test_consistency_of_star_is_neutral():
    assert multiscale_consistency(star(5)) == 0.5


def test_self_similarity_combination():
    assert combine_self_similarity(0.6, 0.4, 1.0) == pytest.approx(0.5)
    assert combine_self_similarity(0.6, 0.4, 0.8) == pytest.approx(0.4)
    assert combine_self_similarity(0.9, 0.7, 0.0) == 0.0


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_self_similarity_monotone_in_consistency(sg, ss, m1, m2):
    lo, hi = sorted((m1, m2))
    assert combine_self_similarity(sg, ss, lo) <= combine_self_similarity(sg, ss, hi) + 1e-15


@given(st.data())
@settings(max_examples=30, deadline=None)
def test_self_similarity_in_unit_interval(data):
    adj = random_graph(data, 24)
    s, sg, ss, m = self_similarity(adj)
    for x in (s, sg, ss, m):
        assert 0.0 <= x <= 1.0


# ------------------------------------------------------------------- egos
def test_ego_budget_keeps_centre_and_connectivity():
    adj = star(40)
    nodes = ego_nodes(adj, 0, 2, budget=10, seed=3)
    assert len(nodes) == 10 and 0 in nodes
    assert ego_nodes(adj, 0, 2, budget=10, seed=3).tolist() == nodes.tolist()


def test_profiles_shape_and_ranges():
    g = build_graph([(f"r{i}", f"p{(i * j) % 5}", i + j) for i in range(8) for j in range(3)])
    prof = compute_profiles(g, budget=64)
    assert len(prof) == g.n_nodes
    assert np.all((prof.self_similarity >= 0) & (prof.self_similarity <= 1))
    assert np.all((prof.diversity >= 0) & (prof.diversity <= 1))
    assert prof[0].node == 0
