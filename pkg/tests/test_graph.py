import io
import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_graph
from reviewnet.graph import (
    BipartitenessError,
    EmptyGraphError,
    IngestionError,
    ReviewEvent,
    TemporalBipartiteGraph,
    burstiness,
    ego_network,
    ingest,
    make_windows,
    preprocess,
    rating_entropy,
    raw_feature_table,
    snapshot,
)


def jsonl(*records):
    return "\n".join(json.dumps(r) for r in records) + "\n"


def rec(r, p, t, rating=4):
    return {"reviewer_id": r, "product_id": p, "timestamp": t, "rating": rating}


# ------------------------------------------------------------------ ingest
def test_ingest_three_lines_infers_node_sets():
    g, report = ingest(jsonl(rec("a", "x", 1), rec("b", "x", 2), rec("a", "y", 3)))
    assert len(g.edges) == 3
    assert (g.M, g.N) == (2, 2)
    assert report.accepted == 3 and report.skipped == 0


def test_ingest_skips_record_without_product():
    bad = {"reviewer_id": "a", "timestamp": 5}
    g, report = ingest(jsonl(rec("a", "x", 1), bad))
    assert report.skipped == 1
    assert len(g.edges) == 1


def test_ingest_drops_exact_duplicates():
    g, report = ingest(jsonl(rec("a", "x", 1), rec("a", "x", 1)))
    assert len(g.edges) == 1
    assert report.duplicates == 1


def test_ingest_csv_and_day_unit():
    text = "reviewer_id,product_id,timestamp,rating\na,x,2,5\n"
    g, _ = ingest(text, fmt="csv", time_unit="day")
    assert g.edge_time.tolist() == [2 * 86400]


def test_ingest_all_invalid_raises():
    with pytest.raises(IngestionError):
        ingest("not json\n")


def test_ingest_accepts_binary_stream():
    g, _ = ingest(io.BytesIO(jsonl(rec("a", "x", 1)).encode()))
    assert g.M == 1


def test_event_validation():
    with pytest.raises(ValueError):
        ReviewEvent(-1, "a", "x")
    with pytest.raises(ValueError):
        ReviewEvent(0, "a", "x", rating=6)


def test_edge_with_unknown_endpoint_is_rejected():
    with pytest.raises(BipartitenessError):
        TemporalBipartiteGraph(["a"], ["x"], [ReviewEvent(0, "a", "nope")])


# -------------------------------------------------------------- preprocess
def test_preprocess_removes_light_reviewer():
    triples = [(r, p, i) for i, (r, p) in enumerate(
        [(r, p) for r in "abc" for p in "xyz"])]
    triples += [("d", "x", 100), ("d", "y", 101)]
    g = preprocess(build_graph(triples), 3)
    assert "d" not in g.reviewers
    assert g.M == 3


def test_preprocess_fixpoint_unchanged():
    g = build_graph([(r, p, i) for i, (r, p) in enumerate((r, p) for r in "abc" for p in "xyz")])
    out = preprocess(g, 3)
    assert out.edges == g.edges


def _filter_once(triples, k):
    from collections import Counter

    rc = Counter(r for r, _, _ in triples)
    pc = Counter(p for _, p, _ in triples)
    return [t for t in triples if rc[t[0]] >= k and pc[t[1]] >= k]


def test_preprocess_chain_removal_matches_repeated_filter():
    # removing d (2 reviews) drops product w below 3, so w goes in a second pass
    triples = [(r, p, i) for i, (r, p) in enumerate((r, p) for r in "abc" for p in "xyz")]
    triples += [("a", "w", 20), ("b", "w", 21), ("d", "w", 22), ("d", "x", 23)]
    oracle = triples
    while True:
        nxt = _filter_once(oracle, 3)
        if nxt == oracle:
            break
        oracle = nxt
    g = preprocess(build_graph(triples), 3)
    got = sorted((e.reviewer_id, e.product_id, e.timestamp) for e in g.edges)
    assert got == sorted(oracle)
    assert "w" not in g.products and "d" not in g.reviewers


@given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(0, 50)), min_size=1, max_size=60),
       st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_preprocess_idempotent(raw, k):
    g = build_graph([(f"r{r}", f"p{p}", t) for r, p, t in raw])
    try:
        once = preprocess(g, k)
    except EmptyGraphError:
        return
    assert preprocess(once, k).edges == once.edges


# ----------------------------------------------------------------- snapshot
def test_snapshot_bounds_and_between():
    g = build_graph([("a", "x", 10), ("b", "y", 20)])
    assert snapshot(g, 5).adjacency.nnz == 0
    assert snapshot(g, 100).adjacency.nnz == 2
    mid = snapshot(g, 15).adjacency.toarray()
    assert mid[0, 0] == 1 and mid.sum() == 1


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 100)), min_size=1, max_size=40),
       st.integers(0, 110), st.integers(0, 110))
@settings(max_examples=60, deadline=None)
def test_snapshot_monotone(raw, t1, t2):
    t1, t2 = sorted((t1, t2))
    g = build_graph([(f"r{r}", f"p{p}", t) for r, p, t in raw])
    a1 = snapshot(g, t1).adjacency.toarray().astype(bool)
    a2 = snapshot(g, t2).adjacency.toarray().astype(bool)
    assert not np.any(a1 & ~a2)


# ------------------------------------------------------------------ windows
def test_windows_by_count():
    g = build_graph([("a", "x", 0), ("a", "y", 100)])
    w = make_windows(g, count=10)
    assert np.allclose(w.boundaries, np.arange(0, 101, 10))


def test_windows_by_length_shortens_last():
    g = build_graph([("a", "x", 0), ("a", "y", 95)])
    w = make_windows(g, window_length=10)
    assert w.window_count == 10
    assert w.boundaries[-1] == 95
    assert w.lengths()[-1] == pytest.approx(5)


def test_windows_constant_time_gives_one():
    g = build_graph([("a", "x", 7), ("b", "x", 7)])
    assert make_windows(g, count=10).window_count == 1


def test_window_assign_closes_last_window():
    g = build_graph([("a", "x", 0), ("a", "y", 100)])
    w = make_windows(g, count=4)
    assert w.assign([0, 24.9, 25, 100]).tolist() == [0, 0, 1, 3]


# --------------------------------------------------------------- ego network
def test_ego_isolated_and_star():
    g = build_graph([("c", "x", 0), ("c", "y", 1), ("c", "z", 2), ("q", "w", 3)])
    star = ego_network(g, "u:c", 1)
    assert (star.M, star.N) == (1, 3)
    g2 = TemporalBipartiteGraph(["lone"], ["x"], [])
    assert ego_network(g2, 0, 2).n_nodes == 1


def test_ego_two_hop_covers_two_stars():
    # two product-centred stars sharing reviewer b; 7 nodes in total
    g = build_graph([("a", "x", 0), ("b", "x", 1), ("c", "x", 2),
                     ("b", "y", 3), ("d", "y", 4), ("e", "y", 5)])
    leaf = g.node_index("u:a")
    ego = ego_network(g, leaf, 2)
    assert set(ego.reviewers) == {"a", "b", "c"}
    # the second star is reached from the leaf only at depth 4
    assert set(ego.products) == {"x"}
    centre = ego_network(g, g.node_index("u:b"), 2)
    assert centre.n_nodes == 7


def _bfs(adj, v, hops):
    seen = {v: 0}
    q = deque([v])
    while q:
        u = q.popleft()
        for w in np.flatnonzero(adj[u]):
            if int(w) not in seen and seen[u] < hops:
                seen[int(w)] = seen[u] + 1
                q.append(int(w))
    return set(seen)


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=40), st.data())
@settings(max_examples=50, deadline=None)
def test_ego_matches_bfs(pairs, data):
    g = build_graph([(f"r{r}", f"p{p}", i) for i, (r, p) in enumerate(pairs)])
    v = data.draw(st.integers(0, g.n_nodes - 1))
    ego = ego_network(g, v, 2)
    expected = {g.node_labels()[u] for u in _bfs(g.adjacency().toarray(), v, 2)}
    assert set(ego.node_labels()) == expected
    assert ego.node_label(ego.center) == g.node_label(v)


# ------------------------------------------------------------------ features
def test_rating_features():
    g = build_graph([("a", "x", 0), ("a", "y", 86400), ("a", "z", 2 * 86400)], rating=5.0)
    rev, prod = raw_feature_table(g)
    assert rev[0, 2] == 0.0  # rating std
    assert rev[0, 3] == pytest.approx(1.0)  # mean gap in days
    assert rating_entropy([1, 2, 3, 4, 5]) == pytest.approx(np.log(5))


def test_burstiness_constant_gaps():
    assert burstiness([0, 10, 20, 30]) == pytest.approx(-1.0)
    assert burstiness([5]) == 0.0


@given(st.lists(st.integers(0, 10_000), min_size=2, max_size=50))
def test_burstiness_bounded(ts):
    assert -1.0 <= burstiness(ts) <= 1.0


def test_unified_index_and_adjacency_bipartite():
    g = build_graph([("a", "x", 0), ("b", "x", 1), ("b", "y", 2)])
    a = g.adjacency().toarray()
    assert not a[: g.M, : g.M].any() and not a[g.M:, g.M:].any()
    assert g.node_index("p:y") == g.M + 1
    assert g.degrees().tolist() == [1, 2, 2, 1]


def test_graph_round_trips_through_dict():
    g = build_graph([("a", "x", 0), ("b", "x", 1)])
    h = TemporalBipartiteGraph.from_dict(json.loads(json.dumps(g.to_dict())))
    assert h.edges == g.edges and h.reviewers == g.reviewers
