"""DeepWalk global embeddings: uniform random walks + skip-gram with negative sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass
class WalkSettings:
    walk_len: int = 10
    walks_per_node: int = 5
    window: int = 2
    dim: int = 16
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    batch: int = 512


def random_walks(adj: sp.csr_matrix, walk_len: int, walks_per_node: int, rng) -> list[np.ndarray]:
    """Uniform walks; every node starts ``walks_per_node`` walks in shuffled rounds."""
    adj = sp.csr_matrix(adj)
    indptr, indices = adj.indptr, adj.indices
    n = adj.shape[0]
    walks = []
    for _ in range(walks_per_node):
        for start in rng.permutation(n):
            walk = [int(start)]
            cur = int(start)
            for _ in range(walk_len - 1):
                lo, hi = indptr[cur], indptr[cur + 1]
                if hi == lo:
                    break
                cur = int(indices[lo + rng.integers(hi - lo)])
                walk.append(cur)
            walks.append(np.asarray(walk, dtype=np.int64))
    return walks


def context_pairs(walks: list[np.ndarray], window: int) -> np.ndarray:
    pairs = []
    for w in walks:
        for off in range(1, window + 1):
            if len(w) > off:
                pairs.append(np.column_stack([w[:-off], w[off:]]))
                pairs.append(np.column_stack([w[off:], w[:-off]]))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(pairs)


def _scatter_add(target: np.ndarray, idx: np.ndarray, vals: np.ndarray) -> None:
    """In-place ``target[idx] += vals`` with repeated indices (faster than np.add.at)."""
    d = target.shape[1]
    flat = (idx.reshape(-1, 1) * d + np.arange(d)).ravel()
    target += np.bincount(flat, vals.reshape(-1), minlength=target.size).reshape(target.shape)


def _sigmoid(x):
    return 0.5 * (1 + np.tanh(0.5 * x))


def deepwalk(adj: sp.spmatrix, settings: WalkSettings | None = None, seed: int = 72) -> np.ndarray:
    """Unit-norm node embeddings (n x dim); deterministic for a given seed.

    Nodes that never appear in a context pair keep their random unit-norm
    initialization.
    """
    st = settings or WalkSettings()
    rng = np.random.default_rng(seed)
    adj = sp.csr_matrix(adj)
    n = adj.shape[0]
    w_in = rng.uniform(-0.5, 0.5, size=(n, st.dim)) / st.dim
    w_out = np.zeros((n, st.dim))
    walks = random_walks(adj, st.walk_len, st.walks_per_node, rng)
    pairs = context_pairs(walks, st.window)

    if len(pairs):
        freq = np.bincount(np.concatenate(walks), minlength=n).astype(float) ** 0.75
        cdf = np.cumsum(freq / freq.sum())
        cdf[-1] = 1.0
        total_steps = st.epochs * int(np.ceil(len(pairs) / st.batch))
        step = 0
        for _ in range(st.epochs):
            order = rng.permutation(len(pairs))
            negatives = np.searchsorted(cdf, rng.random((len(pairs), st.negatives)), side="right")
            for lo in range(0, len(order), st.batch):
                batch = pairs[order[lo:lo + st.batch]]
                lr = st.lr * max(1e-4, 1 - step / total_steps)
                step += 1
                c, o = batch[:, 0], batch[:, 1]
                neg = negatives[lo:lo + st.batch]
                u = w_in[c]
                v = w_out[o]
                nv = w_out[neg]
                g_pos = _sigmoid((u * v).sum(1)) - 1.0
                g_neg = _sigmoid(np.einsum("bd,bkd->bk", u, nv))
                du = g_pos[:, None] * v + np.einsum("bk,bkd->bd", g_neg, nv)
                _scatter_add(w_out, o, -lr * g_pos[:, None] * u)
                _scatter_add(w_out, neg, -lr * g_neg[:, :, None] * u[:, None, :])
                _scatter_add(w_in, c, -lr * du)

    norms = np.linalg.norm(w_in, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return w_in / norms
