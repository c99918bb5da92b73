import numpy as np
import pytest

from reviewnet.embed import WalkSettings, context_pairs, deepwalk, random_walks
from reviewnet.structure import as_adjacency


def bridged_cliques():
    a = [(i, j) for i in range(6) for j in range(i + 1, 6)]
    b = [(i + 6, j + 6) for i, j in a]
    return as_adjacency(12, a + b + [(5, 6)])


def test_isolated_node_keeps_unit_init():
    adj = as_adjacency(3, [(0, 1)])
    z = deepwalk(adj, WalkSettings(dim=8), seed=1)
    assert np.linalg.norm(z, axis=1) == pytest.approx(np.ones(3))
    rng = np.random.default_rng(1)
    init = rng.uniform(-0.5, 0.5, size=(3, 8)) / 8
    assert np.allclose(z[2], init[2] / np.linalg.norm(init[2]))


def test_cliques_separate_in_embedding_space():
    z = deepwalk(bridged_cliques(), WalkSettings(walks_per_node=20, epochs=10, dim=8), seed=72)
    cos = z @ z.T
    same = np.equal.outer(np.arange(12) < 6, np.arange(12) < 6)
    off = ~np.eye(12, dtype=bool)
    assert cos[same & off].mean() > cos[~same].mean()


def test_same_seed_bit_identical():
    adj = bridged_cliques()
    assert np.array_equal(deepwalk(adj, seed=3), deepwalk(adj, seed=3))


def test_walks_follow_edges():
    adj = bridged_cliques()
    walks = random_walks(adj, 8, 2, np.random.default_rng(0))
    dense = adj.toarray()
    assert len(walks) == 24
    for w in walks:
        assert all(dense[a, b] for a, b in zip(w, w[1:]))
    pairs = context_pairs(walks, 2)
    assert pairs.shape[1] == 2
