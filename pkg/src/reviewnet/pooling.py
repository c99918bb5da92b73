"""Time-windowed graph pooling: node importance, sampling, edge importance,
label-propagation clustering and importance-weighted cluster pooling."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import IO, Callable, Sequence

import numpy as np

from .graph import TemporalBipartiteGraph, TimeWindowing

log = logging.getLogger(__name__)


@dataclass
class ImportanceWeights:
    alpha1: float = 0.5  # NFS score
    alpha2: float = 0.3  # relative degree
    alpha3: float = 0.2  # clustering coefficient
    beta1: float = 0.5  # original edge weight
    beta2: float = 0.5  # cosine similarity
    theta: float | None = None  # None: per-window quantile of I_v
    theta_quantile: float = 0.2
    delta: float = 0.3
    theta_by_type: bool = False  # adaptive theta computed separately for reviewers and products

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if min(self.alpha1, self.alpha2, self.alpha3, self.beta1, self.beta2) < 0:
            raise ValueError("importance coefficients must be non-negative")
        if abs(self.alpha1 + self.alpha2 + self.alpha3 - 1) > 1e-9:
            raise ValueError("alpha1 + alpha2 + alpha3 must equal 1")
        if abs(self.beta1 + self.beta2 - 1) > 1e-9:
            raise ValueError("beta1 + beta2 must equal 1")
        if self.theta is not None and not 0 <= self.theta <= 1:
            raise ValueError("theta must lie in [0, 1]")
        if not 0 <= self.delta <= 1 or not 0 <= self.theta_quantile <= 1:
            raise ValueError("delta and theta_quantile must lie in [0, 1]")

    def without_nfs(self) -> "ImportanceWeights":
        """Same weights with the NFS term removed and the rest renormalized."""
        rest = self.alpha2 + self.alpha3
        a2, a3 = (self.alpha2 / rest, self.alpha3 / rest) if rest > 0 else (0.5, 0.5)
        return replace(self, alpha1=0.0, alpha2=a2, alpha3=a3)


@dataclass
class PooledGraph:
    """Cluster-level graph G' with provenance back to the original nodes."""

    features: np.ndarray  # K x d pooled representations h_C
    times: np.ndarray  # K importance-weighted mean timestamps
    nfs: np.ndarray  # K pooled NFS scores
    reviewer_share: np.ndarray  # K fraction of reviewer importance mass
    members: list[np.ndarray]  # original unified node ids per supernode
    member_importance: list[np.ndarray]
    window: np.ndarray  # K window index
    src: np.ndarray  # superedges, src < dst within a window
    dst: np.ndarray
    weight: np.ndarray
    ids: list[str] = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return len(self.features)

    @property
    def n_edges(self) -> int:
        return len(self.src)

    def provenance(self) -> dict[tuple[int, int], int]:
        """(window, original node) -> supernode index."""
        out = {}
        for k, (mem, w) in enumerate(zip(self.members, self.window)):
            for v in mem:
                key = (int(w), int(v))
                if key in out:
                    raise ValueError(f"node {v} appears twice in window {w}")
                out[key] = k
        return out

    def node_supernodes(self, n_original: int) -> list[list[int]]:
        """Supernodes each original node belongs to, across windows."""
        out: list[list[int]] = [[] for _ in range(n_original)]
        for k, mem in enumerate(self.members):
            for v in mem:
                out[int(v)].append(k)
        return out

    def adjacency(self):
        import scipy.sparse as sp

        n = self.n_nodes
        a = sp.csr_matrix(
            (np.ones(2 * self.n_edges), (np.r_[self.src, self.dst], np.r_[self.dst, self.src])),
            shape=(n, n),
        )
        a.data[:] = 1.0
        return a

    def write_csv(self, nodes_fh: IO, edges_fh: IO) -> None:
        w = csv.writer(nodes_fh, lineterminator="\n")
        d = self.features.shape[1]
        w.writerow(["supernode", "window", "time", "nfs", "members"] + [f"h{i}" for i in range(d)])
        for k in range(self.n_nodes):
            w.writerow(
                [self.ids[k], int(self.window[k]), f"{self.times[k]:.6f}", f"{self.nfs[k]:.10g}",
                 " ".join(str(int(v)) for v in self.members[k])]
                + [f"{x:.10g}" for x in self.features[k]]
            )
        w = csv.writer(edges_fh, lineterminator="\n")
        w.writerow(["src", "dst", "weight"])
        for s, t, x in zip(self.src, self.dst, self.weight):
            w.writerow([self.ids[s], self.ids[t], f"{x:.10g}"])


# -------------------------------------------------------------- importance
def node_importance(s_norm, degree, max_degree, clustering, weights: ImportanceWeights):
    """I_v = a1 * S_norm + a2 * d_v / max d + a3 * C_v (vectorized)."""
    s_norm = np.asarray(s_norm, dtype=float)
    degree = np.asarray(degree, dtype=float)
    rel = degree / max_degree if max_degree > 0 else np.zeros_like(degree)
    out = weights.alpha1 * s_norm + weights.alpha2 * rel + weights.alpha3 * np.asarray(clustering, float)
    return float(out) if out.ndim == 0 else out


def sample_nodes(nodes, importances, theta, max_sample: int = 1000) -> np.ndarray:
    """Nodes with I_v >= theta, capped at the top ``max_sample``.

    ``theta`` is a scalar or one threshold per node.
    Ties in importance are broken by node id. If no node passes, the single
    most important node is kept.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    imp = np.asarray(importances, dtype=float)
    if len(nodes) == 0:
        return nodes
    theta = np.broadcast_to(np.asarray(theta, dtype=float), imp.shape)
    order = np.lexsort((nodes, -imp))
    passing = order[imp[order] >= theta[order]]
    if len(passing) == 0:
        passing = order[:1]
    return np.sort(nodes[passing[:max_sample]])


def induce_edges(edge_u, edge_v, sampled) -> np.ndarray:
    """Mask of window edges whose endpoints were both sampled."""
    s = np.asarray(sampled)
    return np.isin(edge_u, s) & np.isin(edge_v, s)


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cosine similarity; 0 where either vector is zero."""
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    dot = (a * b).sum(axis=1)
    den = na * nb
    return np.divide(dot, den, out=np.zeros_like(dot), where=den > 0)


def edge_importance(w_uv, h_u, h_v, weights: ImportanceWeights):
    """I_e = b1 * W_uv + b2 * cos(h_u, h_v)."""
    cos = cosine_rows(h_u, h_v)
    out = weights.beta1 * np.asarray(w_uv, float) + weights.beta2 * cos
    return float(out[0]) if np.ndim(w_uv) == 0 else out


# -------------------------------------------------------------- clustering
def label_propagation(n: int, src, dst, weight, max_sweeps: int = 20) -> np.ndarray:
    """Weighted asynchronous label propagation in fixed node order.

    Ties go to the smallest label; isolated nodes stay singletons.
    Returns compact cluster ids ordered by first member.
    """
    nbrs: list[dict[int, float]] = [{} for _ in range(n)]
    for u, v, w in zip(np.asarray(src).tolist(), np.asarray(dst).tolist(), np.asarray(weight).tolist()):
        if u == v:
            continue
        nbrs[u][v] = nbrs[u].get(v, 0.0) + w
        nbrs[v][u] = nbrs[v].get(u, 0.0) + w
    labels = list(range(n))
    for _ in range(max_sweeps):
        changed = False
        for v in range(n):
            if not nbrs[v]:
                continue
            votes: dict[int, float] = {}
            for u, w in nbrs[v].items():
                votes[labels[u]] = votes.get(labels[u], 0.0) + w
            top = max(votes.values())
            best = min(lab for lab, s in votes.items() if s >= top - 1e-12)
            if best != labels[v]:
                labels[v] = best
                changed = True
        if not changed:
            break
    _, compact = np.unique(labels, return_inverse=True)
    return _renumber(compact)


def _renumber(assign: np.ndarray) -> np.ndarray:
    """Relabel clusters 0..K-1 in order of their lowest member."""
    mapping: dict[int, int] = {}
    out = np.empty(len(assign), dtype=np.int64)
    for i, c in enumerate(assign.tolist()):
        out[i] = mapping.setdefault(c, len(mapping))
    return out


def cap_clusters(assign: np.ndarray, src, dst, weight, k: int) -> np.ndarray:
    """Merge smallest connected clusters into their strongest neighbour until <= k remain."""
    assign = np.asarray(assign, dtype=np.int64).copy()
    size = np.bincount(assign).astype(float)
    links: dict[int, dict[int, float]] = {c: {} for c in range(len(size))}
    for u, v, w in zip(np.asarray(src).tolist(), np.asarray(dst).tolist(), np.asarray(weight).tolist()):
        a, b = int(assign[u]), int(assign[v])
        if a != b:
            links[a][b] = links[a].get(b, 0.0) + w
            links[b][a] = links[b].get(a, 0.0) + w
    alive = set(range(len(size)))
    parent = list(range(len(size)))
    while len(alive) > k:
        cand = [c for c in alive if links[c]]
        if not cand:
            break
        c = min(cand, key=lambda x: (size[x], x))
        target = max(links[c].items(), key=lambda kv: (kv[1], -kv[0]))[0]
        for other, w in links.pop(c).items():
            links[other].pop(c, None)
            if other != target:
                links[target][other] = links[target].get(other, 0.0) + w
                links[other][target] = links[other].get(target, 0.0) + w
        size[target] += size[c]
        parent[c] = target
        alive.discard(c)

    def root(c):
        while parent[c] != c:
            c = parent[c]
        return c

    return _renumber(np.array([root(int(c)) for c in assign]))


def cluster_pool(
    nodes: np.ndarray,
    features: np.ndarray,
    times: np.ndarray,
    nfs: np.ndarray,
    is_reviewer: np.ndarray,
    importances: np.ndarray,
    src: np.ndarray,
    dst: np.ndarray,
    edge_imp: np.ndarray,
    k: int | None = None,
    window: int = 0,
    max_sweeps: int = 20,
) -> PooledGraph:
    """Cluster sampled nodes and pool them into one window-level graph.

    ``src``/``dst`` index into ``nodes`` (local positions). Supernode vectors
    are importance-weighted means; superedge weights sum the edge importances
    between two clusters.
    """
    n = len(nodes)
    if k is None:
        k = max(1, math.ceil(n / 8))
    if k < 1:
        raise ValueError("k must be >= 1")
    assign = label_propagation(n, src, dst, edge_imp, max_sweeps)
    if assign.max(initial=-1) + 1 > k:
        assign = cap_clusters(assign, src, dst, edge_imp, k)
    n_clusters = int(assign.max()) + 1 if n else 0

    imp = np.asarray(importances, float)
    # zero total importance would make the pooled mean undefined
    imp = np.where(imp > 0, imp, 1e-12)
    mass = np.bincount(assign, imp, minlength=n_clusters)
    pooled = np.zeros((n_clusters, features.shape[1]))
    np.add.at(pooled, assign, imp[:, None] * features)
    pooled /= mass[:, None]
    t = np.bincount(assign, imp * times, minlength=n_clusters) / mass
    s = np.bincount(assign, imp * nfs, minlength=n_clusters) / mass
    share = np.bincount(assign, imp * is_reviewer, minlength=n_clusters) / mass

    members = [nodes[assign == c] for c in range(n_clusters)]
    member_imp = [imp[assign == c] for c in range(n_clusters)]

    a, b = assign[np.asarray(src, dtype=np.int64)], assign[np.asarray(dst, dtype=np.int64)]
    cross = a != b
    lo, hi = np.minimum(a, b)[cross], np.maximum(a, b)[cross]
    w = np.asarray(edge_imp, float)[cross]
    if len(lo):
        key = lo * n_clusters + hi
        uniq, inv = np.unique(key, return_inverse=True)
        ew = np.bincount(inv, w)
        e_src, e_dst = uniq // n_clusters, uniq % n_clusters
    else:
        e_src = e_dst = np.zeros(0, dtype=np.int64)
        ew = np.zeros(0)

    return PooledGraph(
        features=pooled,
        times=t,
        nfs=s,
        reviewer_share=share,
        members=members,
        member_importance=member_imp,
        window=np.full(n_clusters, window, dtype=np.int64),
        src=e_src.astype(np.int64),
        dst=e_dst.astype(np.int64),
        weight=ew,
        ids=[f"w{window}:c{c}" for c in range(n_clusters)],
    )


def merge_windows(parts: Sequence[PooledGraph]) -> PooledGraph:
    """Disjoint union of window-level pooled graphs (no cross-window edges)."""
    if not parts:
        raise ValueError("need at least one window")
    offsets = np.cumsum([0] + [p.n_nodes for p in parts])
    return PooledGraph(
        features=np.concatenate([p.features for p in parts]),
        times=np.concatenate([p.times for p in parts]),
        nfs=np.concatenate([p.nfs for p in parts]),
        reviewer_share=np.concatenate([p.reviewer_share for p in parts]),
        members=[m for p in parts for m in p.members],
        member_importance=[m for p in parts for m in p.member_importance],
        window=np.concatenate([p.window for p in parts]),
        src=np.concatenate([p.src + o for p, o in zip(parts, offsets)]),
        dst=np.concatenate([p.dst + o for p, o in zip(parts, offsets)]),
        weight=np.concatenate([p.weight for p in parts]),
        ids=[i for p in parts for i in p.ids],
    )


@dataclass
class PoolStats:
    window: int
    active_nodes: int
    sampled_nodes: int
    window_edges: int
    kept_edges: int
    supernodes: int
    superedges: int
    theta: float


def pool_graph(
    g: TemporalBipartiteGraph,
    windowing: TimeWindowing,
    features: np.ndarray,
    s_norm: np.ndarray,
    clustering: np.ndarray,
    weights: ImportanceWeights | None = None,
    max_sample: int = 1000,
    cluster_ratio: float = 8.0,
    similarity_encoder: Callable[[np.ndarray], np.ndarray] | None = None,
) -> tuple[PooledGraph, list[PoolStats]]:
    """Pool every window of ``g`` and merge the results.

    ``features`` holds one row per unified node; ``similarity_encoder`` maps
    node times to extra columns appended only for the cosine similarity.
    """
    weights = weights or ImportanceWeights()
    win_of_edge = windowing.assign(g.edge_time)
    is_rev = np.r_[np.ones(g.M), np.zeros(g.N)]
    parts, stats = [], []
    for m in range(windowing.window_count):
        emask = win_of_edge == m
        if not emask.any():
            continue
        u = g.edge_reviewer[emask]
        p = g.edge_product[emask] + g.M
        t = g.edge_time[emask].astype(float)
        active = np.unique(np.r_[u, p])
        # distinct reviewer-product pairs; repeated reviews accumulate weight
        pair, inv = np.unique(u * g.n_nodes + p, return_inverse=True)
        w_uv = np.bincount(inv).astype(float)
        pu, pp = pair // g.n_nodes, pair % g.n_nodes
        deg = np.bincount(np.r_[pu, pp], minlength=g.n_nodes)[active]
        tsum = np.bincount(np.r_[u, p], np.r_[t, t], minlength=g.n_nodes)
        tcnt = np.bincount(np.r_[u, p], minlength=g.n_nodes)
        ntime = tsum[active] / tcnt[active]

        imp = node_importance(s_norm[active], deg, deg.max(), clustering[active], weights)
        if weights.theta is not None:
            theta = np.full(len(active), weights.theta)
        elif weights.theta_by_type:
            rev_mask = active < g.M
            theta = np.empty(len(active))
            for m_ in (rev_mask, ~rev_mask):
                if m_.any():
                    theta[m_] = np.quantile(imp[m_], weights.theta_quantile)
        else:
            theta = np.full(len(active), np.quantile(imp, weights.theta_quantile))
        sampled = sample_nodes(active, imp, theta, max_sample)
        pos = np.searchsorted(active, sampled)

        keep = induce_edges(pu, pp, sampled)
        eu, ev, ew = pu[keep], pp[keep], w_uv[keep]
        h = features[sampled]
        if similarity_encoder is not None:
            h = np.hstack([h, similarity_encoder(ntime[pos])])
        lu, lv = np.searchsorted(sampled, eu), np.searchsorted(sampled, ev)
        ie = edge_importance(ew, h[lu], h[lv], weights) if len(eu) else np.zeros(0)
        strong = ie >= weights.delta
        k = max(1, math.ceil(len(sampled) / cluster_ratio))
        part = cluster_pool(
            sampled, features[sampled], ntime[pos], s_norm[sampled], is_rev[sampled], imp[pos],
            lu[strong], lv[strong], ie[strong], k=k, window=m,
        )
        parts.append(part)
        stats.append(PoolStats(m, len(active), len(sampled), len(pair), int(strong.sum()),
                               part.n_nodes, part.n_edges, float(np.median(theta))))
    merged = merge_windows(parts)
    log.info("pooled %d nodes / %d edges into %d supernodes / %d superedges",
             g.n_nodes, len(g.edges), merged.n_nodes, merged.n_edges)
    return merged, stats
