import datetime as dt
import json
import random

import pytest

import paperdesk.corpus as corpus_mod
from paperdesk.corpus import (
    AUTHOR_RESULT_CAP,
    CorpusStore,
    MalformedEntry,
    TimeRange,
    range_window,
    record_from_entry,
)
from paperdesk.errors import ValidationError
from paperdesk.feeds import FeedUnavailable, FixtureFeed

from conftest import TODAY, entry_batch, make_entry, write_jsonl


# -- record validation ------------------------------------------------------------


def test_record_from_entry_strips_version_and_whitespace():
    entry = make_entry(0, "2026-08-10", id="2608.00001v3", title="  A   spaced\ttitle ")
    record = record_from_entry(entry, TODAY)
    assert record.id == "2608.00001"
    assert record.title == "A spaced title"
    assert record.published == dt.date(2026, 8, 10)


@pytest.mark.parametrize(
    "patch",
    [
        {"id": ""},
        {"title": "   "},
        {"abstract": ""},
        {"published": "not-a-date"},
        {"published": "2030-01-01"},
        {"authors": "Ada Lovelace"},
        {"categories": [1, 2]},
    ],
)
def test_record_from_entry_rejects(patch):
    entry = make_entry(0, "2026-08-10")
    entry.update(patch)
    with pytest.raises(MalformedEntry):
        record_from_entry(entry, TODAY)


def test_record_rejects_malformed_marker():
    with pytest.raises(MalformedEntry):
        record_from_entry({"_malformed": "{broken json"}, TODAY)


# -- time ranges --------------------------------------------------------------


def test_time_range_parse():
    assert TimeRange.parse("day") is TimeRange.DAY
    assert TimeRange.parse("Week") is TimeRange.WEEK
    assert TimeRange.parse("ALL") is TimeRange.ALL
    with pytest.raises(ValidationError, match="fortnight"):
        TimeRange.parse("fortnight")


def test_range_windows():
    now = dt.date(2024, 6, 10)
    assert range_window(TimeRange.DAY, now) == (now, now)
    assert range_window(TimeRange.WEEK, now) == (dt.date(2024, 6, 4), now)
    assert range_window(TimeRange.ALL, now) == (None, None)


def test_select_range_against_linear_scan(tmp_path):
    rng = random.Random(3)
    days = 12
    entries = entry_batch(30, TODAY - dt.timedelta(days=days - 1), days=days)
    store = _ingested_store(entries, tmp_path)
    for _ in range(10):
        now = TODAY - dt.timedelta(days=rng.randint(0, days))
        all_records = store.select_range(TimeRange.ALL, now)
        day = {r.id for r in store.select_range(TimeRange.DAY, now)}
        week = {r.id for r in store.select_range(TimeRange.WEEK, now)}
        assert day == {r.id for r in all_records if r.published == now}
        assert week == {
            r.id for r in all_records if now - dt.timedelta(days=6) <= r.published <= now
        }
        assert day <= week <= {r.id for r in all_records}


# -- ingestion ----------------------------------------------------------------


def _ingested_store(entries, tmp_path):
    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", entries))
    store = CorpusStore(tmp_path / "data")
    for day in sorted({e["published"] for e in entries if isinstance(e.get("published"), str)}):
        store.ingest_daily(feed, dt.date.fromisoformat(day))
    return store


def test_ingest_counts_and_idempotency(tmp_path):
    day1 = [make_entry(i, "2026-08-10") for i in range(5)]
    feed = FixtureFeed(write_jsonl(tmp_path / "d1.jsonl", day1))
    store = CorpusStore(tmp_path / "data")
    added = store.ingest_daily(feed, dt.date(2026, 8, 10))
    assert len(added) == 5
    assert len(store.snapshot()) == 5

    corpus_file = tmp_path / "data" / "corpus.jsonl"
    before = corpus_file.read_bytes()
    assert store.ingest_daily(feed, dt.date(2026, 8, 10)) == []
    assert len(store.snapshot()) == 5
    assert corpus_file.read_bytes() == before


def test_ingest_unions_new_and_duplicate_ids(tmp_path):
    day1 = [make_entry(i, "2026-08-10") for i in range(5)]
    day2 = [make_entry(i, "2026-08-11") for i in (3, 4)] + [
        make_entry(i, "2026-08-11") for i in (5, 6, 7)
    ]
    feed1 = FixtureFeed(write_jsonl(tmp_path / "d1.jsonl", day1))
    feed2 = FixtureFeed(write_jsonl(tmp_path / "d2.jsonl", day2))
    store = CorpusStore(tmp_path / "data")
    store.ingest_daily(feed1, dt.date(2026, 8, 10))
    added = store.ingest_daily(feed2, dt.date(2026, 8, 11))
    expected = {e["id"].rsplit("v", 1)[0] for e in day1} | {e["id"].rsplit("v", 1)[0] for e in day2}
    assert len(added) == 3
    assert {r.id for r in store.snapshot().records} == expected


def test_ingest_skips_malformed_and_continues(tmp_path, caplog):
    bad_title = make_entry(99, "2026-08-10", title="   ")
    entries = [make_entry(0, "2026-08-10"), bad_title, make_entry(1, "2026-08-10")]
    path = write_jsonl(tmp_path / "feed.jsonl", entries)
    with open(path, "a") as fh:
        fh.write("{broken json\n")
    feed = FixtureFeed(path)
    store = CorpusStore(tmp_path / "data")
    with caplog.at_level("WARNING"):
        added = store.ingest_daily(feed, dt.date(2026, 8, 10))
    assert len(added) == 2
    assert sum("malformed" in m for m in caplog.messages) >= 2


def test_ingest_rejects_backdated(tmp_path):
    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", [make_entry(0, "2026-08-10")]))
    store = CorpusStore(tmp_path / "data")
    store.ingest_daily(feed, dt.date(2026, 8, 10))
    with pytest.raises(ValidationError, match="before"):
        store.ingest_daily(feed, dt.date(2026, 8, 9))


def test_reload_identical_and_monotone(tmp_path):
    entries = entry_batch(9, dt.date(2026, 8, 8), days=3)
    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", entries))
    store = CorpusStore(tmp_path / "data")
    sizes = []
    for day in ("2026-08-08", "2026-08-09", "2026-08-10"):
        store.ingest_daily(feed, dt.date.fromisoformat(day))
        sizes.append(len(store.snapshot()))
    assert sizes == sorted(sizes)

    reloaded = CorpusStore(tmp_path / "data")
    assert reloaded.snapshot().records == store.snapshot().records
    assert reloaded.snapshot().as_of == dt.date(2026, 8, 10)


def test_load_rejects_duplicate_ids(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    record = json.dumps(
        {"id": "a", "title": "t", "abstract": "x", "authors": [], "categories": [], "published": "2026-08-01"}
    )
    (data / "corpus.jsonl").write_text(record + "\n" + record + "\n")
    with pytest.raises(ValueError, match="duplicate"):
        CorpusStore(data)


def test_feed_retry_then_success(tmp_path, monkeypatch):
    monkeypatch.setattr(corpus_mod, "RETRY_DELAYS", (0.0, 0.0))
    calls = {"n": 0}

    class FlakyFeed(FixtureFeed):
        def fetch_day(self, day):
            calls["n"] += 1
            if calls["n"] < 3:
                raise FeedUnavailable("transient")
            return super().fetch_day(day)

    feed = FlakyFeed(write_jsonl(tmp_path / "feed.jsonl", [make_entry(0, "2026-08-10")]))
    store = CorpusStore(tmp_path / "data")
    added = store.ingest_daily(feed, dt.date(2026, 8, 10))
    assert len(added) == 1
    assert calls["n"] == 3


def test_feed_failure_preserves_snapshot(tmp_path, monkeypatch):
    monkeypatch.setattr(corpus_mod, "RETRY_DELAYS", (0.0, 0.0))

    class DeadFeed(FixtureFeed):
        def fetch_day(self, day):
            raise FeedUnavailable("down")

    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", [make_entry(0, "2026-08-10")]))
    store = CorpusStore(tmp_path / "data")
    store.ingest_daily(feed, dt.date(2026, 8, 10))
    before = store.snapshot()
    dead = DeadFeed(tmp_path / "feed.jsonl")
    with pytest.raises(FeedUnavailable):
        store.ingest_daily(dead, dt.date(2026, 8, 11))
    assert store.snapshot() is before


# -- author search -----------------------------------------------------------


def test_search_by_author_normalizes_and_sorts(tmp_path):
    entries = [
        make_entry(0, "2026-08-09", author="Ada Lovelace"),
        make_entry(1, "2026-08-11", author="Ada Lovelace"),
        make_entry(2, "2026-08-10", author="Someone Else"),
    ]
    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", entries))
    store = CorpusStore(tmp_path / "data")
    records = store.search_by_author("  ada   LOVELACE ", feed)
    assert [r.published.isoformat() for r in records] == ["2026-08-11", "2026-08-09"]


def test_search_by_author_empty_name(tmp_path):
    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", []))
    store = CorpusStore(tmp_path / "data")
    with pytest.raises(ValidationError):
        store.search_by_author("   ", feed)


def test_search_by_author_cap(tmp_path):
    entries = [
        make_entry(i, (dt.date(2026, 1, 1) + dt.timedelta(days=i)).isoformat(), author="Prolific Author")
        for i in range(AUTHOR_RESULT_CAP + 10)
    ]
    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", entries))
    store = CorpusStore(tmp_path / "data")
    records = store.search_by_author("prolific author", feed)
    assert len(records) == AUTHOR_RESULT_CAP
    assert records[0].published > records[-1].published


def test_search_zero_matches_is_empty_not_error(tmp_path):
    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", [make_entry(0, "2026-08-10")]))
    store = CorpusStore(tmp_path / "data")
    assert store.search_by_author("nobody famous", feed) == []
