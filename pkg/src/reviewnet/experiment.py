"""End-to-end pipeline: structure profiles -> NFS -> pooling -> attention network -> evaluation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import dga, nfs, pooling
from .config import RunConfig
from .embed import deepwalk
from .graph import TemporalBipartiteGraph, TimeWindowing, make_windows, raw_features
from .metrics import Evaluation, evaluate
from .nfs import youden_threshold
from .structure import StructureProfiles, compute_profiles
from .synth import scale_of

log = logging.getLogger(__name__)

SPLITS = ("small", "medium", "large")


@dataclass
class Prepared:
    """A preprocessed labelled graph with everything that does not depend on the split."""

    graph: TemporalBipartiteGraph
    labels: np.ndarray  # per reviewer, 0 real / 1 fake
    profiles: StructureProfiles
    reviewer_feats: np.ndarray
    product_feats: np.ndarray
    scales: dict[str, np.ndarray]  # split name -> boolean mask over reviewers
    windowing: TimeWindowing


def windowing_for(g: TemporalBipartiteGraph, cfg: RunConfig) -> TimeWindowing:
    if cfg.window_length is not None:
        return make_windows(g, window_length=cfg.window_length)
    return make_windows(g, count=cfg.window_count)


def reviewer_scales(g: TemporalBipartiteGraph) -> dict[str, np.ndarray]:
    """Reviewer belongs to a scale split when it reviewed at least one product of that scale."""
    counts = np.bincount(g.edge_product, minlength=g.N)
    prod_scale = np.array([scale_of(int(c)) for c in counts])
    out = {}
    for s in SPLITS:
        hit = prod_scale[g.edge_product] == s
        out[s] = np.bincount(g.edge_reviewer[hit], minlength=g.M) > 0
    return out


def prepare(g: TemporalBipartiteGraph, labels, cfg: RunConfig, profiles: StructureProfiles | None = None) -> Prepared:
    """``g`` must already be preprocessed; ``labels`` is indexed like ``g.reviewers``."""
    t0 = time.perf_counter()
    if profiles is None:
        profiles = compute_profiles(g, cfg.damping, cfg.alpha_eq8, cfg.ego_hops, cfg.ego_budget,
                                    cfg.ms_levels, cfg.seed, cfg.n_jobs)
    rev, prod = raw_features(g)
    log.info("prepared %d nodes in %.1fs", g.n_nodes, time.perf_counter() - t0)
    return Prepared(g, np.asarray(labels, dtype=np.int64), profiles, rev, prod, reviewer_scales(g), windowing_for(g, cfg))


@dataclass
class ReviewerSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def split_reviewers(labels: np.ndarray, train_fraction: float, val_fraction: float, seed: int) -> ReviewerSplit:
    """Stratified train/validation/test split of reviewer indices; negative labels are left out."""
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[], [], []]
    for c in np.unique(labels[labels >= 0]):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_tr = int(round(train_fraction * len(idx)))
        n_va = int(round(val_fraction * len(idx)))
        for i, chunk in enumerate((idx[:n_tr], idx[n_tr:n_tr + n_va], idx[n_tr + n_va:])):
            parts[i].append(chunk)
    return ReviewerSplit(*(np.sort(np.concatenate(p)) for p in parts))


def fit_nfs(prep: Prepared, fit_on: np.ndarray, cfg: RunConfig) -> tuple[nfs.NfsModel, nfs.NfsScores]:
    """Fit the NFS scorer on the given reviewers and score every node."""
    feats = nfs.assemble_features(prep.profiles, cfg.dv_source)
    model = nfs.fit(feats[fit_on], prep.labels[fit_on], cfg.svm(), cfg.pca_kept, cfg.nfs_val_fraction, cfg.seed)
    model.config["run"] = cfg.to_dict()
    return model, nfs.score(model, feats)


def node_features(prep: Prepared, s_norm: np.ndarray, ablation: str) -> np.ndarray:
    """Unified-node input matrix [reviewer feats | product feats | type one-hot | S_norm].

    Type-agnostic mode overlays both feature kinds into shared columns and
    zeroes the type indicator; the NFS-free variants zero the S_norm column.
    """
    g = prep.graph
    r, p = prep.reviewer_feats, prep.product_feats
    if ablation == "C_type_agnostic":
        width = max(r.shape[1], p.shape[1])
        shared = np.zeros((g.n_nodes, width))
        shared[: g.M, : r.shape[1]] = r
        shared[g.M:, : p.shape[1]] = p
        typ = np.zeros((g.n_nodes, 2))
        body = shared
    else:
        body = np.zeros((g.n_nodes, r.shape[1] + p.shape[1]))
        body[: g.M, : r.shape[1]] = r
        body[g.M:, r.shape[1]:] = p
        typ = np.zeros((g.n_nodes, 2))
        typ[: g.M, 0] = 1
        typ[g.M:, 1] = 1
    s = np.zeros(g.n_nodes) if ablation in dga.NFS_FREE else np.asarray(s_norm, float)
    return np.column_stack([body, typ, s])


@dataclass
class VariantResult:
    variant: str
    seed: int
    scores: np.ndarray  # per reviewer
    threshold: float
    evaluations: dict[str, Evaluation]
    history: dga.TrainHistory | None = None
    pooled: pooling.PooledGraph | None = None
    model: dga.DgaModel | None = None
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def _reviewer_scores(probs: np.ndarray, node_of: list[list[int]], M: int) -> np.ndarray:
    """Mean fake probability over the supernodes holding each reviewer; 0 when never sampled."""
    out = np.zeros(M)
    for r in range(M):
        if node_of[r]:
            out[r] = probs[node_of[r]].mean()
    return out


@dataclass
class ModelInput:
    graph_input: dga.GraphInput
    node_of: list[list[int]]  # per reviewer, the model nodes holding it
    pooled: pooling.PooledGraph | None


def build_input(prep: Prepared, s_norm: np.ndarray, cfg: RunConfig, variant: str, seed: int) -> ModelInput:
    """Pool the graph the way ``variant`` sees it and wrap it for the network."""
    variant = dga.resolve_ablation(variant)
    g = prep.graph
    if variant == "D_nfs_only":
        s = np.asarray(s_norm[: g.M], dtype=float)
        gi = dga.GraphInput(s.reshape(-1, 1), np.zeros(g.M), s, np.ones(g.M),
                            np.zeros(0, np.int64), np.zeros(0, np.int64))
        return ModelInput(gi, [[r] for r in range(g.M)], None)

    weights = cfg.importance()
    if variant in dga.NFS_FREE:
        weights = weights.without_nfs()
    windowing = prep.windowing
    lo, hi = (float(x) for x in g.time_span())
    encoder = None
    if variant == "B_no_temporal":
        windowing = TimeWindowing(np.array([lo, max(hi, lo + 1)], dtype=float))
    else:
        freqs = dga.initial_frequencies(cfg.time_dim)

        def encoder(t):
            return np.sin(np.outer(dga.rescale_time(t, lo, hi), freqs))

    feats = node_features(prep, s_norm, variant)
    nfs_col = np.zeros(g.n_nodes) if variant in dga.NFS_FREE else np.asarray(s_norm, float)
    pooled, _ = pooling.pool_graph(g, windowing, feats, nfs_col, prep.profiles.clustering_coeff,
                                   weights, cfg.max_sample, cfg.cluster_ratio, encoder)
    emb = deepwalk(pooled.adjacency(), cfg.walks(), seed) if cfg.lam else None
    gi = dga.GraphInput.from_pooled(pooled, emb, (lo, hi))
    return ModelInput(gi, pooled.node_supernodes(g.n_nodes)[: g.M], pooled)


def reviewer_scores(model: dga.DgaModel, mi: ModelInput, n_reviewers: int) -> np.ndarray:
    return _reviewer_scores(model.forward(mi.graph_input)[:, 1], mi.node_of, n_reviewers)


def train_variant(prep: Prepared, s_norm: np.ndarray, split: ReviewerSplit, cfg: RunConfig,
                  variant: str, seed: int) -> VariantResult:
    t0 = time.perf_counter()
    variant = dga.resolve_ablation(variant)
    mi = build_input(prep, s_norm, cfg, variant, seed)
    gi = mi.graph_input
    y = prep.labels.astype(float)
    model = dga.DgaModel(cfg.dga(variant, seed), gi.features.shape[1])
    tr = dga.Targets.from_memberships(gi.n_nodes, mi.node_of, y, split.train)
    va = dga.Targets.from_memberships(gi.n_nodes, mi.node_of, y, split.val)
    hist = dga.train(model, gi, tr, va)
    scores = reviewer_scores(model, mi, prep.graph.M)
    threshold = youden_threshold(scores[split.val], prep.labels[split.val])
    evals = evaluate_splits(scores, prep, split.test, threshold)
    return VariantResult(variant, seed, scores, threshold, evals, hist, mi.pooled, model, time.perf_counter() - t0)


def evaluate_splits(scores: np.ndarray, prep: Prepared, test: np.ndarray, threshold: float) -> dict[str, Evaluation]:
    """Metrics on all test reviewers plus each product-scale subset that has both classes."""
    out = {"all": evaluate(scores[test], prep.labels[test], threshold)}
    for s in SPLITS:
        sub = test[prep.scales[s][test]]
        y = prep.labels[sub]
        if len(sub) and 0 < y.sum() < len(y):
            out[s] = evaluate(scores[sub], y, threshold)
    return out


@dataclass
class AblationRun:
    results: dict[str, list[VariantResult]]
    nfs_models: list[nfs.NfsModel]

    def mean_metric(self, variant: str, split: str = "all", metric: str = "auroc") -> float:
        vals = [getattr(r.evaluations[split], metric) for r in self.results[variant] if split in r.evaluations]
        return float(np.mean(vals)) if vals else float("nan")

    def rows(self) -> list[list]:
        rows = []
        for variant, runs in self.results.items():
            splits = [s for s in ("all",) + SPLITS if any(s in r.evaluations for r in runs)]
            for s in splits:
                rows.append([variant, s] + [self.mean_metric(variant, s, m)
                                            for m in ("accuracy", "recall", "f1_macro", "auroc")])
        return rows


def run_ablation(prep: Prepared, variants, cfg: RunConfig, seeds=None) -> AblationRun:
    """Train and evaluate each variant under identical splits; one split and NFS fit per seed."""
    seeds = list(seeds) if seeds is not None else [cfg.seed]
    variants = [dga.resolve_ablation(v) for v in variants]
    results: dict[str, list[VariantResult]] = {v: [] for v in variants}
    models = []
    for seed in seeds:
        split = split_reviewers(prep.labels, cfg.train_fraction, cfg.val_fraction, seed)
        fit_on = np.r_[split.train, split.val]
        model, scores = fit_nfs(prep, np.sort(fit_on), cfg)
        models.append(model)
        for v in variants:
            res = train_variant(prep, scores.normalized, split, cfg, v, seed)
            log.info("seed %d %-16s auroc=%.4f (%.1fs)", seed, v, res.evaluations["all"].auroc, res.seconds)
            results[v].append(res)
    return AblationRun(results, models)
