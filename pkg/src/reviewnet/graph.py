"""Dynamic reviewer-product graph: ingestion, preprocessing, snapshots and windows.

Nodes live in one index space: reviewers occupy ``0..M-1`` and products
``M..M+N-1``. Every structural routine downstream works on that unified
index, so the ordering established here must not change.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400

REVIEWER_FEATURES = (
    "degree",
    "mean_rating",
    "rating_std",
    "mean_gap",
    "burstiness",
    "mean_content_len",
)
PRODUCT_FEATURES = ("degree", "mean_rating", "rating_entropy", "reviews_per_day")


class IngestionError(ValueError):
    """Raised when no usable record survives ingestion."""


class EmptyGraphError(ValueError):
    """Raised when preprocessing removes every node."""


class BipartitenessError(AssertionError):
    pass


@dataclass(frozen=True, order=True)
class ReviewEvent:
    timestamp: int
    reviewer_id: str
    product_id: str
    rating: float = 3.0
    content_len: int = 0

    def __post_init__(self):
        if not self.reviewer_id or not self.product_id:
            raise ValueError("reviewer_id and product_id must be non-empty")
        if self.timestamp < 0:
            raise ValueError(f"negative timestamp {self.timestamp}")
        if not 1.0 <= self.rating <= 5.0:
            raise ValueError(f"rating {self.rating} outside [1, 5]")
        if self.content_len < 0:
            raise ValueError("content_len must be non-negative")

    def to_record(self) -> dict:
        return {
            "reviewer_id": self.reviewer_id,
            "product_id": self.product_id,
            "timestamp": self.timestamp,
            "rating": self.rating,
            "content_len": self.content_len,
        }


@dataclass
class IngestReport:
    records: int = 0
    accepted: int = 0
    skipped: int = 0
    duplicates: int = 0
    errors: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class Snapshot:
    at_time: float
    adjacency: sp.csr_matrix  # reviewers x products, binary


@dataclass(frozen=True)
class TimeWindowing:
    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b.ndim != 1 or len(b) < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("window boundaries must be strictly increasing with >= 2 entries")
        object.__setattr__(self, "boundaries", b)

    @property
    def window_count(self) -> int:
        return len(self.boundaries) - 1

    def lengths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    def assign(self, timestamps) -> np.ndarray:
        """Window index per timestamp; half-open windows, the last one closed."""
        ts = np.asarray(timestamps, dtype=float)
        idx = np.searchsorted(self.boundaries, ts, side="right") - 1
        last = self.window_count - 1
        idx[(ts == self.boundaries[-1])] = last
        if np.any(idx < 0) or np.any(idx > last):
            raise ValueError("timestamp outside the windowed range")
        return idx


class TemporalBipartiteGraph:
    """Immutable reviewer-product multigraph with timestamped review edges."""

    def __init__(
        self,
        reviewers: Sequence[str],
        products: Sequence[str],
        events: Sequence[ReviewEvent],
        center: int | None = None,
    ):
        self.reviewers: tuple[str, ...] = tuple(reviewers)
        self.products: tuple[str, ...] = tuple(products)
        self.edges: tuple[ReviewEvent, ...] = tuple(sorted(events))
        self.center = center
        self._rev_index = {r: i for i, r in enumerate(self.reviewers)}
        self._prod_index = {p: j for j, p in enumerate(self.products)}
        if len(self._rev_index) != len(self.reviewers) or len(self._prod_index) != len(self.products):
            raise ValueError("duplicate node identifiers")

        n = len(self.edges)
        self.edge_reviewer = np.empty(n, dtype=np.int64)
        self.edge_product = np.empty(n, dtype=np.int64)
        self.edge_time = np.empty(n, dtype=np.int64)
        self.edge_rating = np.empty(n, dtype=float)
        self.edge_content = np.empty(n, dtype=np.int64)
        for k, e in enumerate(self.edges):
            try:
                self.edge_reviewer[k] = self._rev_index[e.reviewer_id]
                self.edge_product[k] = self._prod_index[e.product_id]
            except KeyError as exc:
                raise BipartitenessError(f"edge endpoint {exc} missing from node sets") from None
            self.edge_time[k] = e.timestamp
            self.edge_rating[k] = e.rating
            self.edge_content[k] = e.content_len
        self._check_bipartite()
        self._adjacency: sp.csr_matrix | None = None
        self.reviewer_features: np.ndarray | None = None
        self.product_features: np.ndarray | None = None

    # ------------------------------------------------------------------ build
    @classmethod
    def from_events(cls, events: Iterable[ReviewEvent]) -> "TemporalBipartiteGraph":
        """Deduplicate, time-sort and index events; nodes ordered by first appearance."""
        unique = sorted(set(events))
        reviewers: dict[str, None] = {}
        products: dict[str, None] = {}
        for e in unique:
            reviewers.setdefault(e.reviewer_id)
            products.setdefault(e.product_id)
        return cls(list(reviewers), list(products), unique)

    def _check_bipartite(self) -> None:
        shared = set(self.reviewers) & set(self.products)
        # shared raw ids are fine as long as both sides are indexed separately,
        # but an edge must always join one reviewer and one product
        if len(self.edges) and (self.edge_reviewer.max() >= self.M or self.edge_product.max() >= self.N):
            raise BipartitenessError("edge index out of range")
        if shared:
            log.debug("%d identifiers used as both reviewer and product", len(shared))

    # ------------------------------------------------------------- accessors
    @property
    def M(self) -> int:
        return len(self.reviewers)

    @property
    def N(self) -> int:
        return len(self.products)

    @property
    def n_nodes(self) -> int:
        return self.M + self.N

    def node_index(self, node: str, kind: str | None = None) -> int:
        """Unified index of a node given as ``u:<id>``, ``p:<id>`` or a bare id."""
        if kind is None and node[:2] in ("u:", "p:"):
            kind, node = node[0], node[2:]
        if kind in (None, "u", "reviewer") and node in self._rev_index:
            return self._rev_index[node]
        if kind in (None, "p", "product") and node in self._prod_index:
            return self.M + self._prod_index[node]
        raise KeyError(f"unknown node {node!r}")

    def node_label(self, i: int) -> str:
        if i < self.M:
            return f"u:{self.reviewers[i]}"
        return f"p:{self.products[i - self.M]}"

    def node_labels(self) -> list[str]:
        return [self.node_label(i) for i in range(self.n_nodes)]

    def is_reviewer(self, i: int) -> bool:
        return i < self.M

    def incidence(self, mask: np.ndarray | None = None) -> sp.csr_matrix:
        """Binary M x N reviewer-product incidence over (optionally masked) edges."""
        r, p = self.edge_reviewer, self.edge_product
        if mask is not None:
            r, p = r[mask], p[mask]
        mat = sp.csr_matrix((np.ones(len(r)), (r, p)), shape=(self.M, self.N))
        mat.data[:] = 1.0
        return mat

    def adjacency(self) -> sp.csr_matrix:
        """Symmetric binary adjacency over the unified node index."""
        if self._adjacency is None:
            self._adjacency = bipartite_adjacency(self.incidence())
        return self._adjacency

    def review_counts(self) -> np.ndarray:
        """Number of review edges per unified node (multi-reviews counted)."""
        return np.concatenate([
            np.bincount(self.edge_reviewer, minlength=self.M),
            np.bincount(self.edge_product, minlength=self.N),
        ])

    def degrees(self) -> np.ndarray:
        """Distinct-neighbour degree per unified node."""
        return np.asarray(self.adjacency().sum(axis=1)).ravel().astype(np.int64)

    def time_span(self) -> tuple[int, int]:
        if not len(self.edges):
            raise ValueError("graph has no edges")
        return int(self.edge_time.min()), int(self.edge_time.max())

    def subgraph(self, nodes: Iterable[int], center: int | None = None) -> "TemporalBipartiteGraph":
        """Induced subgraph on unified node indices, preserving relative order."""
        keep = np.zeros(self.n_nodes, dtype=bool)
        keep[list(nodes)] = True
        rev = [r for i, r in enumerate(self.reviewers) if keep[i]]
        prod = [p for j, p in enumerate(self.products) if keep[self.M + j]]
        mask = keep[self.edge_reviewer] & keep[self.M + self.edge_product]
        events = [e for e, m in zip(self.edges, mask) if m]
        sub = TemporalBipartiteGraph(rev, prod, events)
        if center is not None:
            sub.center = sub.node_index(self.node_label(center))
        return sub

    def __repr__(self) -> str:
        return f"TemporalBipartiteGraph(M={self.M}, N={self.N}, edges={len(self.edges)})"

    # ---------------------------------------------------------- serialization
    def to_dict(self) -> dict:
        return {
            "reviewers": list(self.reviewers),
            "products": list(self.products),
            "edges": [e.to_record() for e in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TemporalBipartiteGraph":
        events = [ReviewEvent(**rec) for rec in data["edges"]]
        return cls(data["reviewers"], data["products"], events)


def bipartite_adjacency(incidence: sp.spmatrix) -> sp.csr_matrix:
    """Unified symmetric adjacency ``[[0, B], [B^T, 0]]`` from an incidence matrix."""
    b = sp.csr_matrix(incidence)
    adj = sp.bmat([[None, b], [b.T, None]], format="csr")
    if adj.shape[0] == 0:
        return sp.csr_matrix((0, 0))
    adj.data[:] = 1.0
    return adj


# ---------------------------------------------------------------- ingestion
def _parse_record(rec: dict, time_unit: str) -> ReviewEvent:
    for key in ("reviewer_id", "product_id", "timestamp"):
        if rec.get(key) in (None, ""):
            raise ValueError(f"missing {key}")
    ts = float(rec["timestamp"])
    if time_unit == "day":
        ts *= SECONDS_PER_DAY
    if not math.isfinite(ts) or ts != int(ts):
        raise ValueError(f"timestamp {rec['timestamp']!r} is not integral")
    rating = rec.get("rating")
    content = rec.get("content_len")
    return ReviewEvent(
        timestamp=int(ts),
        reviewer_id=str(rec["reviewer_id"]),
        product_id=str(rec["product_id"]),
        rating=3.0 if rating in (None, "") else float(rating),
        content_len=0 if content in (None, "") else int(float(content)),
    )


def ingest(
    source: IO | bytes | str,
    fmt: str = "jsonl",
    time_unit: str = "s",
) -> tuple[TemporalBipartiteGraph, IngestReport]:
    """Build a graph from JSONL or CSV review records.

    Malformed records are skipped and counted; exact duplicates are dropped.
    ``time_unit="day"`` rescales day-granularity timestamps to seconds.
    """
    if isinstance(source, bytes):
        source = io.StringIO(source.decode("utf-8"))
    elif isinstance(source, str):
        source = io.StringIO(source)
    elif isinstance(source, (io.BufferedIOBase, io.RawIOBase)):
        source = io.TextIOWrapper(source, encoding="utf-8")
    if fmt not in ("jsonl", "csv"):
        raise ValueError(f"unsupported format {fmt!r}")
    if time_unit not in ("s", "day"):
        raise ValueError(f"unsupported time unit {time_unit!r}")

    report = IngestReport()
    seen: set[ReviewEvent] = set()
    events: list[ReviewEvent] = []

    if fmt == "jsonl":
        rows: Iterable = (line for line in source if line.strip())
    else:
        rows = csv.DictReader(source)

    for lineno, row in enumerate(rows, start=1):
        report.records += 1
        try:
            rec = json.loads(row) if fmt == "jsonl" else row
            if not isinstance(rec, dict):
                raise ValueError("record is not an object")
            event = _parse_record(rec, time_unit)
        except (ValueError, TypeError) as exc:
            report.skipped += 1
            report.errors.append(f"record {lineno}: {exc}")
            continue
        if event in seen:
            report.duplicates += 1
            continue
        seen.add(event)
        events.append(event)
        report.accepted += 1

    if not events:
        raise IngestionError(f"no valid records ({report.skipped} skipped)")
    log.info(
        "ingested %d records: %d accepted, %d skipped, %d duplicates",
        report.records, report.accepted, report.skipped, report.duplicates,
    )
    return TemporalBipartiteGraph.from_events(events), report


# ------------------------------------------------------------ preprocessing
def preprocess(g: TemporalBipartiteGraph, min_reviews: int = 3) -> TemporalBipartiteGraph:
    """Drop reviewers and products with fewer than ``min_reviews`` reviews until stable."""
    if min_reviews < 1:
        raise ValueError("min_reviews must be >= 1")
    alive = np.ones(len(g.edges), dtype=bool)
    while True:
        r_cnt = np.bincount(g.edge_reviewer[alive], minlength=g.M)
        p_cnt = np.bincount(g.edge_product[alive], minlength=g.N)
        ok = alive & (r_cnt[g.edge_reviewer] >= min_reviews) & (p_cnt[g.edge_product] >= min_reviews)
        if ok.sum() == alive.sum():
            break
        alive = ok
    if not alive.any():
        raise EmptyGraphError(
            f"preprocessing with min_reviews={min_reviews} removed all {g.n_nodes} nodes"
        )
    rev_keep = np.bincount(g.edge_reviewer[alive], minlength=g.M) > 0
    prod_keep = np.bincount(g.edge_product[alive], minlength=g.N) > 0
    events = [e for e, a in zip(g.edges, alive) if a]
    return TemporalBipartiteGraph(
        [r for r, k in zip(g.reviewers, rev_keep) if k],
        [p for p, k in zip(g.products, prod_keep) if k],
        events,
    )


def snapshot(g: TemporalBipartiteGraph, t: float) -> Snapshot:
    """Reviewer-product incidence of all reviews strictly before ``t``."""
    return Snapshot(at_time=t, adjacency=g.incidence(g.edge_time < t))


def make_windows(
    g: TemporalBipartiteGraph,
    window_length: float | None = None,
    count: int | None = None,
) -> TimeWindowing:
    """Equal-width windows over the edge time range.

    Exactly one of ``window_length`` (seconds) or ``count`` must be given.
    With a length that does not divide the span, the last window is shorter.
    """
    if (window_length is None) == (count is None):
        raise ValueError("give exactly one of window_length or count")
    t0, t1 = g.time_span()
    if t0 == t1:
        return TimeWindowing(np.array([t0, t0 + 1.0]))
    if count is not None:
        if count < 1:
            raise ValueError("count must be >= 1")
        return TimeWindowing(np.linspace(t0, t1, count + 1))
    if window_length <= 0:
        raise ValueError("window_length must be > 0")
    k = math.ceil((t1 - t0) / window_length)
    bounds = t0 + window_length * np.arange(k + 1, dtype=float)
    bounds[-1] = t1
    return TimeWindowing(bounds)


# --------------------------------------------------------------- ego networks
def neighborhood(adj: sp.csr_matrix, v: int, hops: int) -> dict[int, int]:
    """BFS distances from ``v`` up to ``hops``."""
    dist = {v: 0}
    queue = deque([v])
    indptr, indices = adj.indptr, adj.indices
    while queue:
        u = queue.popleft()
        if dist[u] == hops:
            continue
        for w in indices[indptr[u]:indptr[u + 1]]:
            w = int(w)
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def ego_network(g: TemporalBipartiteGraph, v: int | str, hops: int = 2) -> TemporalBipartiteGraph:
    """Induced subgraph on nodes within ``hops`` of ``v``; ``v`` becomes ``center``."""
    if hops not in (1, 2):
        raise ValueError("hops must be 1 or 2")
    if isinstance(v, str):
        v = g.node_index(v)
    if not 0 <= v < g.n_nodes:
        raise KeyError(f"unknown node {v}")
    nodes = neighborhood(g.adjacency(), v, hops)
    return g.subgraph(nodes, center=v)


# ------------------------------------------------------------------ features
def burstiness(timestamps) -> float:
    """(sigma - mu) / (sigma + mu) of inter-arrival gaps; 0 when undefined."""
    ts = np.sort(np.asarray(timestamps, dtype=float))
    if len(ts) < 2:
        return 0.0
    gaps = np.diff(ts)
    mu, sigma = gaps.mean(), gaps.std()
    if mu + sigma == 0:
        return 0.0
    return float((sigma - mu) / (sigma + mu))


def rating_entropy(ratings) -> float:
    """Natural-log entropy of ratings rounded into the five integer bins."""
    r = np.clip(np.rint(np.asarray(ratings, dtype=float)), 1, 5).astype(int)
    if len(r) == 0:
        return 0.0
    p = np.bincount(r - 1, minlength=5) / len(r)
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def zscore(mat: np.ndarray) -> np.ndarray:
    mu = mat.mean(axis=0)
    sd = mat.std(axis=0)
    sd[sd == 0] = 1.0
    return (mat - mu) / sd


def raw_feature_table(g: TemporalBipartiteGraph) -> tuple[np.ndarray, np.ndarray]:
    """Unstandardized reviewer (M x 6) and product (N x 4) feature tables."""
    order_r = np.lexsort((g.edge_time, g.edge_reviewer))
    rev = np.zeros((g.M, len(REVIEWER_FEATURES)))
    splits = np.flatnonzero(np.diff(g.edge_reviewer[order_r])) + 1
    for chunk in np.split(order_r, splits):
        if not len(chunk):
            continue
        i = g.edge_reviewer[chunk[0]]
        ratings = g.edge_rating[chunk]
        ts = g.edge_time[chunk].astype(float)
        gaps = np.diff(ts)
        rev[i] = (
            len(chunk),
            ratings.mean(),
            ratings.std() if len(chunk) > 1 else 0.0,
            gaps.mean() / SECONDS_PER_DAY if len(gaps) else 0.0,
            burstiness(ts),
            g.edge_content[chunk].mean(),
        )

    order_p = np.lexsort((g.edge_time, g.edge_product))
    prod = np.zeros((g.N, len(PRODUCT_FEATURES)))
    splits = np.flatnonzero(np.diff(g.edge_product[order_p])) + 1
    for chunk in np.split(order_p, splits):
        if not len(chunk):
            continue
        j = g.edge_product[chunk[0]]
        ts = g.edge_time[chunk]
        lifespan_days = max((ts.max() - ts.min()) / SECONDS_PER_DAY, 1.0)
        prod[j] = (
            len(chunk),
            g.edge_rating[chunk].mean(),
            rating_entropy(g.edge_rating[chunk]),
            len(chunk) / lifespan_days,
        )
    return rev, prod


def raw_features(g: TemporalBipartiteGraph) -> tuple[np.ndarray, np.ndarray]:
    """Z-scored reviewer and product feature matrices; also cached on ``g``."""
    rev, prod = raw_feature_table(g)
    g.reviewer_features = zscore(rev)
    g.product_features = zscore(prod)
    return g.reviewer_features, g.product_features


def node_times(g: TemporalBipartiteGraph, mask: np.ndarray | None = None) -> np.ndarray:
    """Mean review timestamp per unified node over (masked) edges; NaN if inactive."""
    r, p, t = g.edge_reviewer, g.edge_product, g.edge_time.astype(float)
    if mask is not None:
        r, p, t = r[mask], p[mask], t[mask]
    sums = np.concatenate([np.bincount(r, t, g.M), np.bincount(p, t, g.N)])
    cnts = np.concatenate([np.bincount(r, minlength=g.M), np.bincount(p, minlength=g.N)])
    with np.errstate(invalid="ignore", divide="ignore"):
        return sums / cnts
