"""Classification metrics, data-dynamics indicators and suspicious-group extraction."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.stats import rankdata

from .graph import TemporalBipartiteGraph, TimeWindowing, burstiness

REPORT_COLUMNS = ("variant", "split", "accuracy", "recall", "f1_macro", "auroc")
MIN_SPAM = 0.6


class MetricError(ValueError):
    """Metric undefined for the given inputs (empty set, missing class)."""


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, predicted, labels) -> "ConfusionCounts":
        p = np.asarray(predicted).astype(bool)
        y = np.asarray(labels).astype(bool)
        return cls(int((p & y).sum()), int((~p & ~y).sum()), int((p & ~y).sum()), int((~p & y).sum()))


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise MetricError("accuracy of an empty evaluation set")
    return (c.tp + c.tn) / c.total


def recall(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0:
        raise MetricError("recall undefined without positives")
    return c.tp / (c.tp + c.fn)


def precision(c: ConfusionCounts) -> float:
    """tp / (tp + fp), or 0 when nothing is predicted positive."""
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def f1_macro(c: ConfusionCounts) -> float:
    """Unweighted mean of the positive-class and negative-class F1."""
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise MetricError("macro F1 needs both classes in the evaluation set")
    neg = ConfusionCounts(c.tn, c.tp, c.fn, c.fp)
    return 0.5 * (f1(precision(c), recall(c)) + f1(precision(neg), recall(neg)))


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks for ties."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs both classes")
    ranks = rankdata(s)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auroc_pairwise(scores, labels) -> float:
    """O(n^2) reference: P(score_pos > score_neg) + 0.5 P(tie)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    diff = s[y][:, None] - s[~y][None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)


@dataclass
class Evaluation:
    counts: ConfusionCounts
    accuracy: float
    recall: float
    f1_macro: float
    auroc: float

    def row(self) -> list[float]:
        return [self.accuracy, self.recall, self.f1_macro, self.auroc]


def evaluate(scores, labels, threshold: float) -> Evaluation:
    """All four metrics with ``score >= threshold`` counted as fake."""
    s = np.asarray(scores, dtype=float)
    c = ConfusionCounts.from_predictions(s >= threshold, labels)
    return Evaluation(c, accuracy(c), recall(c), f1_macro(c), auroc(s, labels))


# ----------------------------------------------------------------- dynamics
@dataclass
class DynamicsReport:
    arrival_rate: list[float]
    churn: list[float]  # first window has no predecessor: nan
    turnover: list[float]
    burstiness: list[float]  # nan where a window has <= 1 event
    averages: dict[str, float]
    normalized: dict[str, float]
    composite: float
    normalization: str = "single-dataset (0.5 placeholder)"

    def to_text(self) -> str:
        lines = [f"{'window':>6} {'r_t':>12} {'c_t':>8} {'u_t':>8} {'B_t':>8}"]
        for i, vals in enumerate(zip(self.arrival_rate, self.churn, self.turnover, self.burstiness)):
            lines.append(f"{i:>6} {vals[0]:>12.4f} {vals[1]:>8.4f} {vals[2]:>8.4f} {vals[3]:>8.4f}")
        lines.append("averages: " + ", ".join(f"{k}={v:.4f}" for k, v in self.averages.items()))
        lines.append("normalized: " + ", ".join(f"{k}={v:.4f}" for k, v in self.normalized.items()))
        lines.append(f"normalization: {self.normalization}")
        lines.append(f"D = {self.composite:.4f}")
        return "\n".join(lines)


COMPONENTS = ("arrival_rate", "churn", "turnover", "burstiness")


def composite_index(normalized) -> float:
    """D = mean of the four normalized components (mapping or sequence)."""
    vals = list(normalized.values()) if isinstance(normalized, dict) else list(normalized)
    if len(vals) != 4:
        raise ValueError("composite index needs exactly four components")
    arr = np.asarray(vals, dtype=float)
    if np.any((arr < 0) | (arr > 1)):
        raise ValueError("normalized components must lie in [0, 1]")
    return float(arr.mean())


def _jaccard_complement(a: set, b: set) -> float:
    union = a | b
    return 1.0 - len(a & b) / len(union) if union else 0.0


def window_dynamics(g: TemporalBipartiteGraph, windowing: TimeWindowing, seconds_per_unit: float = 86400.0):
    """Per-window (r_t, c_t, u_t, B_t); r_t counts reviews per time unit (days by default)."""
    win = windowing.assign(g.edge_time)
    lengths = windowing.lengths() / seconds_per_unit
    rates, churn, turnover, burst = [], [], [], []
    prev_r: set | None = None
    prev_e: set | None = None
    for m in range(windowing.window_count):
        mask = win == m
        rates.append(float(mask.sum() / lengths[m]) if lengths[m] > 0 else 0.0)
        revs = set(g.edge_reviewer[mask].tolist())
        edges = set(zip(g.edge_reviewer[mask].tolist(), g.edge_product[mask].tolist()))
        churn.append(_jaccard_complement(revs, prev_r) if prev_r is not None else float("nan"))
        turnover.append(_jaccard_complement(edges, prev_e) if prev_e is not None else float("nan"))
        prev_r, prev_e = revs, edges
        burst.append(burstiness(np.sort(g.edge_time[mask])) if mask.sum() > 1 else float("nan"))
    return rates, churn, turnover, burst


def _nanmean(x) -> float:
    arr = np.asarray(x, dtype=float)
    arr = arr[~np.isnan(arr)]
    return float(arr.mean()) if len(arr) else float("nan")


def minmax_across(values: list[float]) -> list[float]:
    """Min-max scale one component across datasets; one dataset (or no spread) gives 0.5."""
    arr = np.asarray(values, dtype=float)
    lo, hi = np.nanmin(arr), np.nanmax(arr)
    if len(arr) < 2 or hi <= lo:
        return [0.5] * len(arr)
    return list((arr - lo) / (hi - lo))


def dynamics_many(graphs: list[TemporalBipartiteGraph], windowings: list[TimeWindowing]) -> list[DynamicsReport]:
    """Dynamics reports with components normalized across the given datasets."""
    raw = [window_dynamics(g, w) for g, w in zip(graphs, windowings)]
    avgs = [dict(zip(COMPONENTS, (_nanmean(c) for c in r))) for r in raw]
    norm_cols = {k: minmax_across([a[k] for a in avgs]) for k in COMPONENTS}
    label = "min-max across datasets" if len(graphs) > 1 else "single-dataset (0.5 placeholder)"
    out = []
    for i, (r, a) in enumerate(zip(raw, avgs)):
        n = {k: float(norm_cols[k][i]) for k in COMPONENTS}
        out.append(DynamicsReport(*r, averages=a, normalized=n, composite=composite_index(n), normalization=label))
    return out


def dynamics(g: TemporalBipartiteGraph, windowing: TimeWindowing) -> DynamicsReport:
    return dynamics_many([g], [windowing])[0]


# ------------------------------------------------------------------- groups
@dataclass
class ReviewerGroup:
    members: list[int]
    mean_score: float
    flagged: bool
    products: list[int] = field(default_factory=list)


def extract_groups(g: TemporalBipartiteGraph, scores, suspicious, min_spam: float = MIN_SPAM) -> list[ReviewerGroup]:
    """Connected components (size >= 2) of the co-review projection among suspicious reviewers.

    ``scores`` and ``suspicious`` are indexed by reviewer. Groups are sorted
    by their smallest member.
    """
    if not 0 <= min_spam <= 1:
        raise ValueError("min_spam must lie in [0, 1]")
    scores = np.asarray(scores, dtype=float)
    sus = np.flatnonzero(np.asarray(suspicious, dtype=bool))
    if len(sus) < 2:
        return []
    inc = g.incidence()[sus].astype(bool).astype(float)
    co = (inc @ inc.T).tocsr()
    n_comp, comp = connected_components(co, directed=False)
    groups = []
    for c in range(n_comp):
        local = np.flatnonzero(comp == c)
        if len(local) < 2:
            continue
        members = sus[local]
        mean = float(scores[members].mean())
        products = np.flatnonzero(np.asarray(inc[local].sum(axis=0)).ravel() >= 2)
        groups.append(ReviewerGroup(members.tolist(), mean, mean >= min_spam, products.tolist()))
    groups.sort(key=lambda grp: grp.members[0])
    return groups


# ------------------------------------------------------------------ reports
def report_rows(results: dict[str, dict[str, Evaluation]]) -> list[list]:
    rows = []
    for variant, by_split in results.items():
        for split, ev in by_split.items():
            rows.append([variant, split] + ev.row())
    return rows


def write_report_csv(fh, rows: list[list]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in rows:
        w.writerow(r[:2] + [f"{x:.6f}" for x in r[2:]])


def report_text(rows: list[list]) -> str:
    buf = io.StringIO()
    buf.write(f"{'variant':<18}{'split':<8}{'accuracy':>10}{'recall':>10}{'f1_macro':>10}{'auroc':>10}\n")
    for r in rows:
        buf.write(f"{r[0]:<18}{r[1]:<8}" + "".join(f"{x:>10.4f}" for x in r[2:]) + "\n")
    return buf.getvalue()


def coreview_jaccard(g: TemporalBipartiteGraph, a: int, b: int) -> float:
    pa = set(g.edge_product[g.edge_reviewer == a].tolist())
    pb = set(g.edge_product[g.edge_reviewer == b].tolist())
    return 1.0 - _jaccard_complement(pa, pb)
