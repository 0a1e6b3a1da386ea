import json

import numpy as np
import pytest

from paperdesk.embedding import HashedNgramEmbedder
from paperdesk.errors import ValidationError
from paperdesk.featurepool import FeaturePool
from paperdesk.thoughts import GLOBAL_OWNER, ThoughtKind, ThoughtStore

from conftest import NOW


def make_store(tmp_path=None, dim=32):
    embedder = HashedNgramEmbedder(dim=dim)
    pool = FeaturePool(dim, "thoughts", tmp_path)
    return ThoughtStore(pool, embedder, tmp_path), pool, embedder


def test_ids_are_sequential_and_recorded_in_pool():
    store, pool, _ = make_store()
    for i, kind in enumerate([ThoughtKind.TREND, ThoughtKind.IDEA, ThoughtKind.ANSWER]):
        thought = store.new_thought(kind, f"thought number {i}", "alice", NOW)
        store.record(thought)
    ids = [t.id for t in store.snapshot_thoughts()]
    assert ids == ["t000001", "t000002", "t000003"]
    assert pool.snapshot().ids == tuple(ids)
    assert len(store) == 3


def test_record_appends_log_and_pool_atomically(tmp_path):
    store, pool, _ = make_store(tmp_path)
    thought = store.new_thought(ThoughtKind.TREND, "retrieval pools stay warm", "alice", NOW)
    store.record(thought)
    lines = (tmp_path / "thoughts.jsonl").read_text().splitlines()
    assert len(lines) == 1
    entry = json.loads(lines[0])
    assert entry["id"] == "t000001" and entry["kind"] == "trend"
    assert pool.rowcount == 1
    assert pool.snapshot().recency[0] == NOW.timestamp()


def test_rejections():
    store, pool, _ = make_store()
    with pytest.raises(ValidationError, match="non-empty"):
        store.new_thought(ThoughtKind.IDEA, "   ", "alice", NOW)
    recorded = store.record(store.new_thought(ThoughtKind.IDEA, "an idea", "alice", NOW))
    with pytest.raises(ValidationError, match="duplicate"):
        store.record(recorded)
    assert len(store) == 1 and pool.rowcount == 1


def test_empty_owner_defaults_to_global():
    store, _, _ = make_store()
    thought = store.new_thought(ThoughtKind.ANSWER, "kept answer", "", NOW)
    assert thought.owner == GLOBAL_OWNER


def test_counts_partition_totals():
    store, _, _ = make_store()
    for kind, n in [(ThoughtKind.TREND, 2), (ThoughtKind.IDEA, 3), (ThoughtKind.ANSWER, 1)]:
        for i in range(n):
            store.record(store.new_thought(kind, f"{kind.value} {i}", "alice", NOW))
    counts = store.counts()
    assert counts == {ThoughtKind.TREND: 2, ThoughtKind.IDEA: 3, ThoughtKind.ANSWER: 1}
    assert sum(counts.values()) == len(store)


def test_snapshot_filters():
    store, _, _ = make_store()
    store.record(store.new_thought(ThoughtKind.TREND, "alpha trend", "alice", NOW))
    store.record(store.new_thought(ThoughtKind.IDEA, "beta idea", "bob", NOW))
    store.record(store.new_thought(ThoughtKind.IDEA, "gamma idea", "alice", NOW))
    ideas = store.snapshot_thoughts(kind=ThoughtKind.IDEA)
    assert [t.text for t in ideas] == ["beta idea", "gamma idea"]
    alice = store.snapshot_thoughts(owner="alice")
    assert [t.text for t in alice] == ["alpha trend", "gamma idea"]
    both = store.snapshot_thoughts(kind=ThoughtKind.IDEA, owner="alice")
    assert [t.text for t in both] == ["gamma idea"]


def test_reload_restores_log_and_sequence(tmp_path):
    store, pool, _ = make_store(tmp_path)
    store.record(store.new_thought(ThoughtKind.TREND, "first", "alice", NOW, ("2608.00001",)))
    store.record(store.new_thought(ThoughtKind.IDEA, "second", "alice", NOW))

    store2, pool2, _ = make_store(tmp_path)
    assert [t.id for t in store2.snapshot_thoughts()] == ["t000001", "t000002"]
    assert store2.get("t000001").source_refs == ("2608.00001",)
    assert pool2.snapshot().ids == pool.snapshot().ids
    fresh = store2.record(store2.new_thought(ThoughtKind.ANSWER, "third", "bob", NOW))
    assert fresh.id == "t000003"


def test_reload_heals_missing_pool_rows(tmp_path, caplog):
    store, pool, embedder = make_store(tmp_path)
    store.record(store.new_thought(ThoughtKind.TREND, "survives in log only", "alice", NOW))
    # Simulate a crash after the log fsync but before the pool append.
    (tmp_path / "pool_thoughts.bin").unlink()
    (tmp_path / "pool_thoughts.ids").unlink()
    with caplog.at_level("WARNING"):
        store2, pool2, _ = make_store(tmp_path)
    assert any("re-embedding" in m for m in caplog.messages)
    snap = pool2.snapshot()
    assert snap.ids == ("t000001",)
    np.testing.assert_array_equal(
        snap.matrix[0], HashedNgramEmbedder(dim=32).embed("survives in log only")
    )
    assert snap.recency[0] == NOW.timestamp()
    assert store2.get("t000001").text == "survives in log only"


def test_reload_rejects_duplicate_log_ids(tmp_path):
    store, _, _ = make_store(tmp_path)
    store.record(store.new_thought(ThoughtKind.TREND, "once", "alice", NOW))
    log = tmp_path / "thoughts.jsonl"
    line = log.read_text()
    log.write_text(line + line)
    (tmp_path / "pool_thoughts.bin").unlink()
    (tmp_path / "pool_thoughts.ids").unlink()
    with pytest.raises(ValueError, match="duplicate"):
        make_store(tmp_path)
