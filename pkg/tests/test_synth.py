import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewnet.graph import SECONDS_PER_DAY
from reviewnet.metrics import coreview_jaccard
from reviewnet.synth import InfeasibleConfig, SynthConfig, generate, scale_of


def small_cfg(**kw):
    base = dict(n_reviewers=500, n_products=100, days=30, seed=7)
    base.update(kw)
    return SynthConfig(**base)


def test_no_groups_means_no_fakes():
    ds = generate(small_cfg(n_groups=0))
    assert set(ds.labels.values()) == {0}


def test_star_burst_target_gets_burst():
    ds = generate(small_cfg(n_groups=1, group_size=10, targets_per_group=1, mode="star_burst"))
    g = ds.graph
    target = g.products.index(ds.targets[0][0])
    fake = np.array([ds.labels[r] for r in g.reviewers])
    hit = (g.edge_product == target) & (fake[g.edge_reviewer] == 1)
    times = np.sort(g.edge_time[hit])
    assert len(times) >= 8
    assert times[-1] - times[0] <= 2 * SECONDS_PER_DAY


def _mean_group_jaccard(ds):
    g = ds.graph
    idx = {r: i for i, r in enumerate(g.reviewers)}
    vals = []
    for gid in set(ds.group_ids.values()):
        members = [idx[r] for r, x in ds.group_ids.items() if x == gid and r in idx]
        vals += [coreview_jaccard(g, a, b) for a, b in itertools.combinations(members, 2)]
    return float(np.mean(vals))


@given(st.integers(0, 1000), st.sampled_from(["star_burst", "ring", "mixed"]))
@settings(max_examples=6, deadline=None)
def test_planted_groups_overlap_more_than_organic_pairs(seed, mode):
    ds = generate(small_cfg(seed=seed, mode=mode))
    g = ds.graph
    rng = np.random.default_rng(seed)
    organic = [i for i, r in enumerate(g.reviewers) if ds.labels[r] == 0]
    pairs = rng.choice(organic, size=(300, 2))
    organic_mean = np.mean([coreview_jaccard(g, a, b) for a, b in pairs if a != b])
    assert _mean_group_jaccard(ds) > organic_mean


def test_same_seed_same_bytes():
    out = []
    for _ in range(2):
        buf = io.StringIO()
        generate(small_cfg()).write_jsonl(buf)
        out.append(buf.getvalue())
    assert out[0] == out[1]


@pytest.mark.parametrize("kw", [
    dict(n_groups=60, group_size=10),
    dict(mode="bogus"),
    dict(days=1, group_size=20, targets_per_group=5, mode="ring"),
    dict(targets_per_group=1000),
])
def test_infeasible_configs(kw):
    with pytest.raises(InfeasibleConfig):
        generate(small_cfg(**kw))


def test_scale_boundaries_and_writers():
    assert [scale_of(c) for c in (49, 50, 200, 201)] == ["small", "medium", "medium", "large"]
    ds = generate(small_cfg())
    labels, split = io.StringIO(), io.StringIO()
    ds.write_labels(labels)
    ds.write_split(split)
    assert labels.getvalue().startswith("reviewer_id,label,group_id")
    assert split.getvalue().startswith("product_id,scale")
    assert ds.label_vector().sum() == 50
