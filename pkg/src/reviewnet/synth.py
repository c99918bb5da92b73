"""Synthetic reviewer-product networks with planted fake reviewer groups."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np

from .graph import SECONDS_PER_DAY, ReviewEvent, TemporalBipartiteGraph

SMALL_MAX = 50  # products with fewer reviews are "small"
LARGE_MIN = 200  # products with more reviews are "large"
MODES = ("star_burst", "ring", "mixed")


class InfeasibleConfig(ValueError):
    pass


@dataclass
class SynthConfig:
    n_reviewers: int = 2000
    n_products: int = 400
    days: int = 60
    organic_rate: float = 0.1
    n_groups: int = 5
    group_size: int = 10
    targets_per_group: int = 3
    burst_window: int = 2 * SECONDS_PER_DAY
    mode: str = "mixed"
    camouflage: int = 2
    late_launch_fraction: float = 0.5
    seed: int = 72

    def validate(self) -> None:
        for name in ("n_reviewers", "n_products", "days", "group_size", "targets_per_group"):
            if getattr(self, name) < 1:
                raise InfeasibleConfig(f"{name} must be >= 1")
        if self.n_groups < 0 or self.camouflage < 0:
            raise InfeasibleConfig("n_groups and camouflage must be >= 0")
        if self.mode not in MODES:
            raise InfeasibleConfig(f"mode must be one of {MODES}")
        horizon = self.days * SECONDS_PER_DAY
        if not 0 < self.burst_window <= horizon:
            raise InfeasibleConfig("burst_window must lie in (0, horizon]")
        if self.n_groups * self.group_size > self.n_reviewers:
            raise InfeasibleConfig("planted groups need more reviewers than exist")
        if self.targets_per_group > self.n_products:
            raise InfeasibleConfig("more targets than products")
        if self.n_groups and self.mode != "star_burst" and self._ring_span() > horizon:
            raise InfeasibleConfig(
                f"ring schedule spans {self._ring_span()}s, longer than the {horizon}s horizon"
            )

    def _ring_span(self) -> int:
        return (self.group_size + self.targets_per_group) * self.burst_window


@dataclass
class LabeledDataset:
    graph: TemporalBipartiteGraph
    labels: dict[str, int]
    group_ids: dict[str, int]
    scale_split: dict[str, str]
    config: SynthConfig | None = None
    targets: dict[int, list[str]] = field(default_factory=dict)

    def label_vector(self, g: TemporalBipartiteGraph | None = None) -> np.ndarray:
        g = g or self.graph
        return np.array([self.labels[r] for r in g.reviewers], dtype=np.int64)

    def write_jsonl(self, fh: IO) -> None:
        for e in self.graph.edges:
            fh.write(json.dumps(e.to_record(), sort_keys=True) + "\n")

    def write_labels(self, fh: IO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["reviewer_id", "label", "group_id"])
        for r in self.graph.reviewers:
            gid = self.group_ids.get(r)
            w.writerow([r, self.labels[r], "" if gid is None else gid])

    def write_split(self, fh: IO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["product_id", "scale"])
        for p in self.graph.products:
            w.writerow([p, self.scale_split[p]])


def scale_of(review_count: int) -> str:
    if review_count < SMALL_MAX:
        return "small"
    if review_count <= LARGE_MIN:
        return "medium"
    return "large"


def scale_split(g: TemporalBipartiteGraph) -> dict[str, str]:
    counts = np.bincount(g.edge_product, minlength=g.N)
    return {p: scale_of(int(c)) for p, c in zip(g.products, counts)}


def _organic_rating(rng, mu):
    return float(np.clip(np.rint(rng.normal(mu, 1.0)), 1, 5))


def _content_len(rng):
    return int(rng.lognormal(5.0, 0.8))


def generate(config: SynthConfig | None = None) -> LabeledDataset:
    """Organic preferential-attachment background plus planted groups.

    ``star_burst`` groups hit each target with at least 80% of their members
    inside one burst window; ``ring`` groups review every target but with
    each member's visits staggered cyclically across consecutive windows.
    """
    cfg = config or SynthConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    horizon = cfg.days * SECONDS_PER_DAY
    n_fake = cfg.n_groups * cfg.group_size
    n_org = cfg.n_reviewers - n_fake

    products = [f"p{j:05d}" for j in range(cfg.n_products)]
    launch = np.zeros(cfg.n_products)
    late = rng.random(cfg.n_products) < cfg.late_launch_fraction
    launch[late] = rng.uniform(0, 0.7 * horizon, late.sum())
    mu = rng.uniform(2.5, 4.5, cfg.n_products)

    reviewers = [f"u{i:05d}" for i in range(cfg.n_reviewers)]
    fake_idx = rng.permutation(cfg.n_reviewers)[:n_fake]
    fake_set = set(int(i) for i in fake_idx)
    organic = [i for i in range(cfg.n_reviewers) if i not in fake_set]

    # organic arrivals: exponential gaps from a uniform start until the horizon
    arrivals: list[tuple[float, int]] = []
    rate = cfg.organic_rate / SECONDS_PER_DAY
    for i in organic:
        t = rng.uniform(0, horizon / 4)
        while t < horizon:
            arrivals.append((t, i))
            t += rng.exponential(1.0 / rate)
    # camouflage visits of fake accounts look organic
    for i in fake_idx:
        for t in rng.uniform(0, horizon, cfg.camouflage):
            arrivals.append((float(t), int(i)))
    arrivals.sort()

    counts = np.zeros(cfg.n_products)
    events: list[ReviewEvent] = []
    for t, i in arrivals:
        w = (counts + 1.0) * (launch <= t)
        if w.sum() == 0:
            continue
        j = int(rng.choice(cfg.n_products, p=w / w.sum()))
        counts[j] += 1
        events.append(ReviewEvent(int(t), reviewers[i], products[j], _organic_rating(rng, mu[j]), _content_len(rng)))

    group_ids: dict[str, int] = {}
    targets: dict[int, list[str]] = {}
    members_all = fake_idx.reshape(cfg.n_groups, cfg.group_size) if cfg.n_groups else np.zeros((0, 0), int)
    for gid, members in enumerate(members_all):
        mode = cfg.mode
        if mode == "mixed":
            mode = "star_burst" if gid % 2 == 0 else "ring"
        tgt = rng.choice(cfg.n_products, size=cfg.targets_per_group, replace=False)
        targets[gid] = [products[j] for j in tgt]
        for m in members:
            group_ids[reviewers[m]] = gid
        if mode == "star_burst":
            need = math.ceil(0.8 * cfg.group_size)
            for j in tgt:
                start = rng.uniform(launch[j], max(launch[j], horizon - cfg.burst_window))
                k = int(rng.integers(need, cfg.group_size + 1))
                for m in rng.choice(members, size=k, replace=False):
                    t = start + rng.uniform(0, cfg.burst_window)
                    events.append(ReviewEvent(int(t), reviewers[m], products[j], float(rng.integers(4, 6)), _content_len(rng)))
        else:
            span = cfg._ring_span()
            start = rng.uniform(launch[tgt].max(), max(launch[tgt].max(), horizon - span))
            for pos, m in enumerate(members):
                for k, j in enumerate(tgt):
                    slot = (pos + k) % cfg.group_size + k
                    t = start + slot * cfg.burst_window + rng.uniform(0, cfg.burst_window)
                    events.append(ReviewEvent(int(min(t, horizon)), reviewers[m], products[j], float(rng.integers(4, 6)), _content_len(rng)))

    g = TemporalBipartiteGraph.from_events(events)
    labels = {r: int(i in fake_set) for i, r in enumerate(reviewers) if r in set(g.reviewers)}
    return LabeledDataset(
        graph=g,
        labels=labels,
        group_ids=group_ids,
        scale_split=scale_split(g),
        config=cfg,
        targets=targets,
    )


def config_dict(cfg: SynthConfig) -> dict:
    return asdict(cfg)
