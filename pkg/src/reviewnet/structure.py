"""Per-node structural metrics: PageRank-weighted neighbour diversity and
ego-network self-similarity (box-counting dimension, Laplacian spectrum,
multi-scale consistency).

Graphs here are plain symmetric ``scipy.sparse`` adjacency matrices so the
same code serves whole graphs and extracted ego-networks.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, fields
from typing import IO, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path

from .graph import TemporalBipartiteGraph, neighborhood

log = logging.getLogger(__name__)

BOX_SIZES = (1, 2, 4, 8, 16)
SPECTRAL_BINS = 10
EIGEN_BUDGET = 512
EGO_BUDGET = 256  # default per-node cap; single-core runtime budget
GEOMETRIC_SCALE = 2.0  # C_f / 2 -> [0, 1]
SPECTRAL_SCALE = 3.0  # beta / 3 -> [0, 1]
NEUTRAL_CONSISTENCY = 0.5


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    r_squared: float
    sample_points: int

    @property
    def valid(self) -> bool:
        return self.sample_points >= 3 and self.r_squared > 0

    @classmethod
    def invalid(cls, points: int = 0) -> "PowerLawFit":
        return cls(0.0, 0.0, points)


@dataclass(frozen=True)
class NodeStructureProfile:
    node: int
    degree_centrality: float
    pagerank: float
    diversity: float
    self_similarity: float
    geometric_score: float
    spectral_score: float
    consistency: float
    clustering_coeff: float


def as_adjacency(n: int, edges: Sequence[tuple[int, int]]) -> sp.csr_matrix:
    """Symmetric binary adjacency from an undirected edge list."""
    if len(edges):
        u, v = np.asarray(edges, dtype=np.int64).T
    else:
        u = v = np.zeros(0, dtype=np.int64)
    a = sp.csr_matrix((np.ones(2 * len(u)), (np.r_[u, v], np.r_[v, u])), shape=(n, n))
    a.data[:] = 1.0
    a.setdiag(0)
    a.eliminate_zeros()
    return a


# ------------------------------------------------------------------ entropy
def entropy(p) -> float:
    """Shannon entropy (natural log) of a probability vector, 0 ln 0 := 0."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise NormalizationError("input is not a probability vector")
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _plogp_sum(w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(w)
    m = w > 0
    out[m] = w[m] * np.log(w[m])
    return -out.sum(axis=-1)


# --------------------------------------------------------------- centrality
def degree_centrality(adj: sp.spmatrix, v: int | None = None):
    """deg(v) / (N - 1); all nodes when ``v`` is None."""
    adj = sp.csr_matrix(adj)
    n = adj.shape[0]
    deg = np.diff(adj.indptr).astype(float)
    c = deg / (n - 1) if n > 1 else np.zeros(n)
    return c if v is None else float(c[v])


def pagerank(
    adj: sp.spmatrix,
    damping: float = 0.85,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> np.ndarray:
    """Un-normalized PageRank, PR(v) = (1-d) + d * sum_u PR(u)/deg(u).

    Values average to roughly 1 per node rather than summing to 1.
    Zero-degree nodes contribute nothing to their (absent) neighbours.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    adj = sp.csr_matrix(adj)
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    pr = np.ones(adj.shape[0])
    for it in range(max_iter):
        nxt = (1 - damping) + damping * (adj @ (pr * inv))
        delta = np.abs(nxt - pr).max() if len(pr) else 0.0
        pr = nxt
        if delta < tol:
            break
    else:
        log.warning("pagerank did not converge in %d iterations (delta=%.2e)", max_iter, delta)
    return pr


def degree_quartiles(degrees: np.ndarray, groups: np.ndarray | None = None) -> np.ndarray:
    """Quartile bucket (0..3) of each degree, optionally within node groups."""
    degrees = np.asarray(degrees, dtype=float)
    cats = np.zeros(len(degrees), dtype=np.int64)
    if groups is None:
        groups = np.zeros(len(degrees), dtype=np.int64)
    for g in np.unique(groups):
        m = groups == g
        q = np.quantile(degrees[m], [0.25, 0.5, 0.75])
        cats[m] = np.digitize(degrees[m], q, right=True)
    return cats


def diversity_weights(counts, pr_mass) -> np.ndarray:
    """omega_k = p_k * PR_k / sum_j PR_j for one node's category tallies."""
    counts = np.asarray(counts, dtype=float)
    pr_mass = np.asarray(pr_mass, dtype=float)
    total = counts.sum()
    mass = pr_mass.sum()
    if total == 0 or mass == 0:
        return np.zeros_like(counts)
    return (counts / total) * (pr_mass / mass)


def pagerank_entropy(adj: sp.spmatrix, categories: np.ndarray, pr: np.ndarray) -> np.ndarray:
    """H_pageRank(v) over the raw (unrenormalized) diversity weights, per node."""
    adj = sp.csr_matrix(adj)
    categories = np.asarray(categories)
    k = int(categories.max()) + 1 if len(categories) else 1
    onehot = sp.csr_matrix(
        (np.ones(len(categories)), (np.arange(len(categories)), categories)),
        shape=(len(categories), k),
    )
    counts = np.asarray((adj @ onehot).todense())
    mass = np.asarray((adj @ onehot.multiply(pr[:, None])).todense())
    deg = counts.sum(axis=1, keepdims=True)
    tot = mass.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(deg > 0, counts / deg, 0.0) * np.where(tot > 0, mass / tot, 0.0)
    return _plogp_sum(w)


def neighbor_diversity(adj: sp.spmatrix, categories: np.ndarray, pr: np.ndarray) -> np.ndarray:
    """Diversity eta in [0, 1]: H_pageRank normalized by its maximum over the batch."""
    h = pagerank_entropy(adj, categories, pr)
    top = h.max() if len(h) else 0.0
    return h / top if top > 0 else np.zeros_like(h)


def bipartite_clustering(adj: sp.spmatrix) -> np.ndarray:
    """Latapy-style bipartite clustering: mean Jaccard overlap with 2-hop nodes."""
    adj = sp.csr_matrix(adj)
    deg = np.diff(adj.indptr).astype(float)
    common = (adj @ adj).tocoo()
    off = common.row != common.col
    r, c, shared = common.row[off], common.col[off], common.data[off]
    jac = shared / (deg[r] + deg[c] - shared)
    total = np.bincount(r, jac, minlength=adj.shape[0])
    cnt = np.bincount(r, minlength=adj.shape[0])
    return np.divide(total, cnt, out=np.zeros_like(total), where=cnt > 0)


# ------------------------------------------------------------ power-law fits
def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Slope and R^2 of an ordinary least squares line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx, dy = x - x.mean(), y - y.mean()
    sxx = (dx * dx).sum()
    if sxx == 0:
        return 0.0, 0.0
    slope = (dx * dy).sum() / sxx
    syy = (dy * dy).sum()
    if syy == 0:
        return float(slope), 1.0
    r2 = (dx * dy).sum() ** 2 / (sxx * syy)
    return float(slope), float(min(max(r2, 0.0), 1.0))


def distance_matrix(adj: sp.spmatrix) -> np.ndarray:
    return shortest_path(sp.csr_matrix(adj), method="D", unweighted=True, directed=False)


def box_cover(dist: np.ndarray, box_size: int) -> np.ndarray:
    """Greedy ball covering with radius ``box_size // 2``; returns box id per node.

    Each step picks the uncovered node whose ball holds the most uncovered
    nodes (lowest index on ties).
    """
    n = dist.shape[0]
    radius = box_size // 2
    assign = np.full(n, -1, dtype=np.int64)
    if radius == 0:
        return np.arange(n)
    ball = dist <= radius
    gain = ball.sum(axis=1).astype(np.int64)
    uncovered = np.ones(n, dtype=bool)
    box = 0
    while uncovered.any():
        pick = int(np.argmax(np.where(uncovered, gain, -1)))
        newly = ball[pick] & uncovered
        assign[newly] = box
        uncovered &= ~newly
        gain -= ball[:, newly].sum(axis=1)
        box += 1
    return assign


def box_counts(adj: sp.spmatrix, sizes: Sequence[int] = BOX_SIZES, dist: np.ndarray | None = None) -> list[int]:
    if dist is None:
        dist = distance_matrix(adj)
    return [int(box_cover(dist, s).max()) + 1 if dist.shape[0] else 0 for s in sizes]


def diameter(dist: np.ndarray) -> int:
    finite = dist[np.isfinite(dist)]
    return int(finite.max()) if finite.size else 0


def box_counting_dimension(
    adj: sp.spmatrix, sizes: Sequence[int] = BOX_SIZES, dist: np.ndarray | None = None
) -> PowerLawFit:
    """Fractal dimension C_f: slope of ln N(l) against ln(1/l).

    Only box sizes up to the graph diameter are used; fewer than three such
    sizes (diameter < 4) gives an invalid fit.
    """
    if dist is None:
        dist = distance_matrix(adj)
    diam = diameter(dist)
    usable = [s for s in sizes if s <= diam]
    if diam < 4 or len(usable) < 3:
        return PowerLawFit.invalid(len(usable))
    counts = box_counts(adj, usable, dist)
    slope, r2 = _ols(np.log(1.0 / np.asarray(usable, float)), np.log(counts))
    return PowerLawFit(slope, r2, len(usable))


def laplacian_eigenvalues(adj: sp.spmatrix) -> np.ndarray:
    a = sp.csr_matrix(adj).toarray()
    lap = np.diag(a.sum(axis=1)) - a
    return scipy.linalg.eigvalsh(lap)


def spectral_exponent(adj: sp.spmatrix, bins: int = SPECTRAL_BINS) -> PowerLawFit:
    """Exponent beta of P(lambda) ~ lambda^-beta over positive Laplacian eigenvalues."""
    lam = laplacian_eigenvalues(adj)
    lam = lam[lam > 1e-9]
    if len(lam) < 3 or lam.max() - lam.min() < 1e-9:
        return PowerLawFit.invalid(0)
    edges = np.geomspace(lam.min(), lam.max(), bins + 1)
    hist, _ = np.histogram(lam, bins=edges)
    keep = hist > 0
    if keep.sum() < 3:
        return PowerLawFit.invalid(int(keep.sum()))
    density = hist[keep] / (len(lam) * np.diff(edges)[keep])
    centers = np.sqrt(edges[:-1] * edges[1:])[keep]
    slope, r2 = _ols(np.log(centers), np.log(density))
    return PowerLawFit(-slope, r2, int(keep.sum()))


def coarse_grain(adj: sp.spmatrix, box_size: int = 2, dist: np.ndarray | None = None) -> sp.csr_matrix:
    """Merge each box of a ``box_size`` covering into one super-node."""
    adj = sp.csr_matrix(adj)
    if dist is None:
        dist = distance_matrix(adj)
    assign = box_cover(dist, box_size)
    k = int(assign.max()) + 1
    proj = sp.csr_matrix((np.ones(len(assign)), (np.arange(len(assign)), assign)), shape=(len(assign), k))
    coarse = (proj.T @ adj @ proj).tocsr()
    coarse.setdiag(0)
    coarse.eliminate_zeros()
    coarse.data[:] = 1.0
    return coarse


def consistency_from_dimensions(dims: Sequence[float]) -> float:
    """exp(-population std) of per-level dimensions; neutral 0.5 below two levels."""
    if len(dims) < 2:
        return NEUTRAL_CONSISTENCY
    return float(np.clip(math.exp(-float(np.std(dims))), 0.0, 1.0))


def multiscale_consistency(
    adj: sp.spmatrix, levels: int = 3, dist: np.ndarray | None = None
) -> float:
    """Stability of C_f under repeated box-merge coarse-graining."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    dims = []
    cur = sp.csr_matrix(adj)
    for level in range(levels):
        if dist is None:
            dist = distance_matrix(cur)
        fit = box_counting_dimension(cur, dist=dist)
        if fit.valid:
            dims.append(fit.exponent)
        # a level below diameter 4 can only coarsen into more invalid levels
        if level + 1 == levels or cur.shape[0] <= 1 or diameter(dist) < 4:
            break
        cur = coarse_grain(cur, dist=dist)
        dist = None
    return consistency_from_dimensions(dims)


def combine_self_similarity(s_g: float, s_s: float, m_v: float, alpha: float = 0.5) -> float:
    if not 0 <= alpha <= 1:
        raise ValueError("alpha must lie in [0, 1]")
    return float((alpha * s_g + (1 - alpha) * s_s) * m_v)


def _clip01(x: float) -> float:
    return float(min(max(x, 0.0), 1.0))


def self_similarity(
    adj: sp.spmatrix, alpha: float = 0.5, levels: int = 3
) -> tuple[float, float, float, float]:
    """(S_v, S_g, S_s, M_v) for one (ego-)network."""
    dist = distance_matrix(adj)
    geo = box_counting_dimension(adj, dist=dist)
    spec = spectral_exponent(adj)
    m_v = multiscale_consistency(adj, levels, dist=dist)
    if not geo.valid and not spec.valid:
        return 0.0, 0.0, 0.0, m_v
    s_g = _clip01(geo.exponent / GEOMETRIC_SCALE) * geo.r_squared
    s_s = _clip01(spec.exponent / SPECTRAL_SCALE) * spec.r_squared
    return combine_self_similarity(s_g, s_s, m_v, alpha), s_g, s_s, m_v


# ------------------------------------------------------------- ego sampling
def ego_nodes(
    adj: sp.csr_matrix, v: int, hops: int = 2, budget: int = EIGEN_BUDGET, seed: int = 0
) -> np.ndarray:
    """Ego-network node set, down-sampled ring by ring to ``budget`` nodes.

    The centre is always kept; inner rings take precedence, and an outer-ring
    node is only eligible if it still touches a kept inner node, so the sample
    stays connected.
    """
    dist = neighborhood(adj, v, hops)
    if len(dist) <= budget:
        return np.fromiter(sorted(dist), dtype=np.int64)
    rng = np.random.default_rng(seed + v)
    kept = [v]
    room = budget - 1
    inner = np.array([v])
    for ring in range(1, hops + 1):
        cand = np.array(sorted(u for u, d in dist.items() if d == ring), dtype=np.int64)
        if ring > 1:
            touch = np.asarray(adj[inner][:, cand].sum(axis=0)).ravel() > 0
            cand = cand[touch]
        if len(cand) > room:
            cand = np.sort(rng.choice(cand, size=room, replace=False))
        kept.extend(cand.tolist())
        room -= len(cand)
        inner = cand
        if room == 0:
            break
    return np.array(sorted(kept), dtype=np.int64)


@dataclass
class StructureProfiles:
    """Column-wise store of :class:`NodeStructureProfile` for a whole graph."""

    degree_centrality: np.ndarray
    pagerank: np.ndarray
    diversity: np.ndarray
    self_similarity: np.ndarray
    geometric_score: np.ndarray
    spectral_score: np.ndarray
    consistency: np.ndarray
    clustering_coeff: np.ndarray

    def __len__(self) -> int:
        return len(self.pagerank)

    def __getitem__(self, i: int) -> NodeStructureProfile:
        return NodeStructureProfile(node=i, **{f.name: float(getattr(self, f.name)[i]) for f in fields(self)})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name).tolist() for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "StructureProfiles":
        return cls(**{f.name: np.asarray(data[f.name], dtype=float) for f in fields(cls)})

    def write_csv(self, fh: IO, labels: Sequence[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "C", "PR", "eta", "S_v", "S_g", "S_s", "M_v", "C_clust"])
        for i, lab in enumerate(labels):
            w.writerow([
                lab,
                *(f"{x:.10g}" for x in (
                    self.degree_centrality[i], self.pagerank[i], self.diversity[i],
                    self.self_similarity[i], self.geometric_score[i], self.spectral_score[i],
                    self.consistency[i], self.clustering_coeff[i],
                )),
            ])


def _ego_scores(adj, nodes, alpha, hops, budget, levels, seed):
    out = []
    for v in nodes:
        sub_nodes = ego_nodes(adj, v, hops, budget, seed)
        sub = adj[sub_nodes][:, sub_nodes]
        out.append(self_similarity(sub, alpha, levels))
    return out


def compute_profiles(
    g: TemporalBipartiteGraph,
    damping: float = 0.85,
    alpha: float = 0.5,
    hops: int = 2,
    budget: int = EGO_BUDGET,
    levels: int = 3,
    seed: int = 0,
    n_jobs: int = 1,
) -> StructureProfiles:
    """Structure profile of every node of ``g``.

    Ego-network scores are independent per node; ``n_jobs > 1`` spreads them
    over worker processes and the results are reassembled in node order.
    """
    if not 2 <= budget <= EIGEN_BUDGET:
        raise ValueError(f"ego budget must lie in [2, {EIGEN_BUDGET}]")
    adj = g.adjacency()
    n = adj.shape[0]
    pr = pagerank(adj, damping)
    deg = np.diff(adj.indptr)
    types = np.r_[np.zeros(g.M, dtype=np.int64), np.ones(g.N, dtype=np.int64)]
    cats = degree_quartiles(deg, types)
    eta = neighbor_diversity(adj, cats, pr)

    if n_jobs == 1:
        scores = _ego_scores(adj, range(n), alpha, hops, budget, levels, seed)
    else:
        from joblib import Parallel, delayed

        chunks = np.array_split(np.arange(n), max(1, n_jobs * 4))
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_ego_scores)(adj, c, alpha, hops, budget, levels, seed) for c in chunks
        )
        scores = [s for part in parts for s in part]
    s = np.asarray(scores, dtype=float).reshape(n, 4)
    return StructureProfiles(
        degree_centrality=degree_centrality(adj),
        pagerank=pr,
        diversity=eta,
        self_similarity=s[:, 0],
        geometric_score=s[:, 1],
        spectral_score=s[:, 2],
        consistency=s[:, 3],
        clustering_coeff=bipartite_clustering(adj),
    )
