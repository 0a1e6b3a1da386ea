import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paperdesk.corpus import TimeRange
from paperdesk.embedding import HashedNgramEmbedder
from paperdesk.errors import ValidationError
from paperdesk.featurepool import FeaturePool, day_epoch
from paperdesk.retrieval import (
    epoch_window,
    retrieve_chat_context,
    retrieve_topk,
    retrieve_trend_papers,
)


def brute_force_topk(query, pools, k, recency_window=None, id_filter=None):
    """Independent float64 reference: full sort, same tie rules."""
    q = np.asarray(query, dtype=np.float64)
    rows = []
    for pool in pools:
        for i in range(pool.rowcount):
            if recency_window is not None:
                lo, hi = recency_window
                if not (lo <= pool.recency[i] < hi):
                    continue
            if id_filter is not None and not id_filter(pool.ids[i]):
                continue
            score = float(pool.matrix[i].astype(np.float64) @ q)
            score = max(-1.0, min(1.0, score))
            rows.append((score, float(pool.recency[i]), pool.ids[i], pool.name))
    rows.sort(key=lambda t: (-t[0], -t[1], t[2]))
    return rows[:k]


def random_pool(rng, rows, dim=16, name="pool", prefix="r", with_ties=False):
    pool = FeaturePool(dim, name)
    if rows == 0:
        return pool
    raw = rng.normal(size=(rows, dim))
    if with_ties and rows >= 4:
        # Duplicate vectors exercise the recency/id tie rules.
        raw[1] = raw[0]
        raw[3] = raw[2]
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    recency = [float(rng.integers(0, 5)) * 86400.0 for _ in range(rows)]
    pool.append([f"{prefix}{i:04d}" for i in range(rows)], [r.astype(np.float32) for r in raw], recency)
    return pool


def unit_query(rng, dim=16):
    q = rng.normal(size=dim)
    return (q / np.linalg.norm(q)).astype(np.float32)


def test_matches_brute_force_on_random_pools():
    rng = np.random.default_rng(42)
    for trial in range(30):
        pools = [
            random_pool(rng, int(rng.integers(0, 60)), name="a", prefix="a", with_ties=True).snapshot(),
            random_pool(rng, int(rng.integers(0, 60)), name="b", prefix="b", with_ties=True).snapshot(),
        ]
        query = unit_query(rng)
        k = int(rng.integers(1, 12))
        got = retrieve_topk(query, pools, k)
        want = brute_force_topk(query, pools, k)
        assert [(h.id, h.source) for h in got] == [(w[2], w[3]) for w in want]
        for hit, w in zip(got, want):
            assert hit.score == pytest.approx(w[0], abs=1e-12)


def test_exact_ties_prefer_newer_then_smaller_id():
    pool = FeaturePool(4, "t")
    vec = np.array([1.0, 0.0, 0.0, 0.0], dtype=np.float32)
    pool.append(["zz", "aa", "mm"], [vec, vec, vec], [100.0, 100.0, 200.0])
    hits = retrieve_topk(vec, [pool.snapshot()], 3)
    assert [h.id for h in hits] == ["mm", "aa", "zz"]
    assert all(h.score == 1.0 for h in hits)


def test_k_larger_than_candidates_clamps():
    rng = np.random.default_rng(1)
    pool = random_pool(rng, 5).snapshot()
    hits = retrieve_topk(unit_query(rng), [pool], 50)
    assert len(hits) == 5
    scores = [h.score for h in hits]
    assert scores == sorted(scores, reverse=True)


def test_empty_pools_and_no_matches():
    rng = np.random.default_rng(2)
    empty = FeaturePool(16, "e").snapshot()
    assert retrieve_topk(unit_query(rng), [empty], 5) == []
    pool = random_pool(rng, 10).snapshot()
    assert retrieve_topk(unit_query(rng), [pool], 5, id_filter=lambda i: False) == []


def test_validation_errors():
    rng = np.random.default_rng(3)
    pool = random_pool(rng, 4).snapshot()
    with pytest.raises(ValidationError, match="k must be"):
        retrieve_topk(unit_query(rng), [pool], 0)
    with pytest.raises(ValidationError, match="dimension"):
        retrieve_topk(np.zeros(8, dtype=np.float32), [pool], 3)
    with pytest.raises(ValidationError, match="vector"):
        retrieve_topk(np.zeros((2, 16), dtype=np.float32), [pool], 3)


def test_scores_are_clamped_cosines():
    pool = FeaturePool(2, "t")
    v = np.array([1.0, 0.0], dtype=np.float32)
    w = np.array([-1.0, 0.0], dtype=np.float32)
    pool.append(["p", "n"], [v, w])
    hits = retrieve_topk(v, [pool.snapshot()], 2)
    assert hits[0].score == 1.0 and hits[1].score == -1.0


def test_recency_window_matches_linear_filter():
    rng = np.random.default_rng(7)
    pool = random_pool(rng, 40).snapshot()
    window = (1.0 * 86400.0, 3.0 * 86400.0)
    query = unit_query(rng)
    got = retrieve_topk(query, [pool], 10, recency_window=window)
    want = brute_force_topk(query, [pool], 10, recency_window=window)
    assert got, "window should keep some rows"
    assert all(window[0] <= pool.recency[pool.ids.index(h.id)] < window[1] for h in got)
    assert [h.id for h in got] == [w[2] for w in want]


def test_id_filter_matches_linear_filter():
    rng = np.random.default_rng(8)
    pool = random_pool(rng, 30).snapshot()
    keep = lambda i: int(i[1:]) % 3 == 0
    query = unit_query(rng)
    got = retrieve_topk(query, [pool], 8, id_filter=keep)
    want = brute_force_topk(query, [pool], 8, id_filter=keep)
    assert [h.id for h in got] == [w[2] for w in want]
    assert all(keep(h.id) for h in got)


def test_epoch_window_is_half_open_day_inclusive():
    now = dt.date(2026, 8, 12)
    window = epoch_window(TimeRange.DAY, now)
    assert window == (day_epoch(now), day_epoch(now) + 86400.0)
    week = epoch_window(TimeRange.WEEK, now)
    assert week == (day_epoch(now - dt.timedelta(days=6)), day_epoch(now) + 86400.0)
    assert epoch_window(TimeRange.ALL, now) is None


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_property_matches_brute_force(data):
    seed = data.draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    rows = data.draw(st.integers(0, 40))
    k = data.draw(st.integers(1, 15))
    pool = random_pool(rng, rows, with_ties=True).snapshot()
    query = unit_query(rng)
    got = retrieve_topk(query, [pool], k)
    want = brute_force_topk(query, [pool], k)
    assert [h.id for h in got] == [w[2] for w in want]


def test_trend_papers_single_embed_and_window(stack):
    profile = "I work on retrieval systems and vector search infrastructure."
    before = stack.embedder.calls
    hits = retrieve_trend_papers(
        profile, stack.embedder, stack.paper_pool.snapshot(), TimeRange.ALL, stack.clock.today()
    )
    assert stack.embedder.calls == before + 1
    assert hits and all(h.source == "papers" for h in hits)
    day_hits = retrieve_trend_papers(
        profile, stack.embedder, stack.paper_pool.snapshot(), TimeRange.DAY, stack.clock.today()
    )
    published_today = {
        r.id for r in stack.corpus.snapshot().records if r.published == stack.clock.today()
    }
    assert {h.id for h in day_hits} <= published_today


def test_trend_papers_rejects_empty_profile(stack):
    with pytest.raises(ValidationError):
        retrieve_trend_papers(
            "  ", stack.embedder, stack.paper_pool.snapshot(), TimeRange.ALL, stack.clock.today()
        )


def test_chat_context_unions_pools():
    embedder = HashedNgramEmbedder(dim=32)
    papers = FeaturePool(32, "papers")
    thoughts = FeaturePool(32, "thoughts")
    papers.append(["p1"], [embedder.embed("retrieval over vector pools")])
    thoughts.append(["t1"], [embedder.embed("retrieval over vector pools daily")])
    hits = retrieve_chat_context(
        "retrieval over vector pools", embedder, papers.snapshot(), thoughts.snapshot(), k=5
    )
    assert {h.source for h in hits} == {"papers", "thoughts"}
    only_papers = retrieve_chat_context(
        "retrieval over vector pools",
        embedder,
        papers.snapshot(),
        thoughts.snapshot(),
        k=5,
        include_thoughts=False,
    )
    assert {h.source for h in only_papers} == {"papers"}
    with pytest.raises(ValidationError):
        retrieve_chat_context(" ", embedder, papers.snapshot(), thoughts.snapshot())
