"""Shared fixtures: deterministic paper entries, feeds, clocks, service stacks."""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import pytest

from paperdesk.cache import ResponseCache
from paperdesk.clock import ManualClock
from paperdesk.corpus import CorpusStore
from paperdesk.embedding import HashedNgramEmbedder
from paperdesk.featurepool import FeaturePool
from paperdesk.feeds import FixtureFeed
from paperdesk.llm import MockProvider
from paperdesk.services import AssistantService, DirectStateSource
from paperdesk.thoughts import ThoughtStore

NOW = dt.datetime(2026, 8, 12, 9, 0, tzinfo=dt.timezone.utc)
TODAY = NOW.date()

_TOPICS = [
    "sparse retrieval over append only vector pools",
    "snapshot isolation for non blocking readers",
    "hash caches for frequently repeated queries",
    "profile conditioned ranking of daily papers",
    "incremental embedding of streaming documents",
    "thought memory that grows with user feedback",
    "deterministic mock providers for offline tests",
    "exact top k cosine search at desk scale",
    "crash safe append only storage formats",
    "scheduling background ingestion without stalls",
]


def make_entry(i: int, published: str, author: str = "Ada Lovelace", **overrides) -> dict:
    topic = _TOPICS[i % len(_TOPICS)]
    entry = {
        "id": f"2608.{i:05d}v1",
        "title": f"Paper {i}: {topic}",
        "abstract": f"This paper studies {topic}. " + f"We analyze {topic} in depth and report results. " * 4,
        "authors": [author, f"Co Author {i}"],
        "categories": ["cs.IR"],
        "published": published,
    }
    entry.update(overrides)
    return entry


def entry_batch(count: int, start: dt.date, days: int = 1, author: str = "Ada Lovelace") -> list[dict]:
    """`count` entries spread round-robin over `days` consecutive dates."""
    return [
        make_entry(i, (start + dt.timedelta(days=i % days)).isoformat(), author=author)
        for i in range(count)
    ]


def write_jsonl(path: Path, entries: list[dict]) -> Path:
    path.write_text("".join(json.dumps(e) + "\n" for e in entries))
    return path


@pytest.fixture
def clock() -> ManualClock:
    return ManualClock(NOW)


@dataclass
class Stack:
    """In-memory service stack with a fixture feed for author search."""

    clock: ManualClock
    embedder: HashedNgramEmbedder
    provider: MockProvider
    cache: ResponseCache
    corpus: CorpusStore
    paper_pool: FeaturePool
    thought_pool: FeaturePool
    thoughts: ThoughtStore
    feed: FixtureFeed
    services: AssistantService
    data_dir: Path
    ingested: list = field(default_factory=list)

    def ingest(self, date: dt.date) -> list:
        """Fixture-day ingest plus the matching pool append (what the daily
        update worker does), so services see a consistent snapshot."""
        from paperdesk.engine import paper_embedding_text
        from paperdesk.featurepool import day_epoch

        new = self.corpus.ingest_daily(self.feed, date)
        if new:
            self.paper_pool.append(
                [r.id for r in new],
                [self.embedder.embed(paper_embedding_text(r)) for r in new],
                [day_epoch(r.published) for r in new],
            )
        self.ingested.extend(new)
        return new


def build_stack(
    tmp_path: Path,
    entries: list[dict] | None = None,
    clock: ManualClock | None = None,
    provider: MockProvider | None = None,
    ingest_days: list[dt.date] | None = None,
) -> Stack:
    clock = clock or ManualClock(NOW)
    entries = entries if entries is not None else entry_batch(8, TODAY - dt.timedelta(days=7), days=8)
    feed = FixtureFeed(write_jsonl(tmp_path / "feed.jsonl", entries))
    data_dir = tmp_path / "data"
    embedder = HashedNgramEmbedder()
    provider = provider or MockProvider()
    cache = ResponseCache()
    corpus = CorpusStore(data_dir)
    paper_pool = FeaturePool(embedder.dimension, "papers", data_dir)
    thought_pool = FeaturePool(embedder.dimension, "thoughts", data_dir)
    thoughts = ThoughtStore(thought_pool, embedder, data_dir)
    services = AssistantService(
        state=DirectStateSource(corpus, paper_pool, thought_pool, thoughts),
        thought_store=thoughts,
        cache=cache,
        embedder=embedder,
        provider=provider,
        author_search=lambda name: corpus.search_by_author(name, feed),
        clock=clock,
        data_dir=data_dir,
    )
    stack = Stack(
        clock=clock,
        embedder=embedder,
        provider=provider,
        cache=cache,
        corpus=corpus,
        paper_pool=paper_pool,
        thought_pool=thought_pool,
        thoughts=thoughts,
        feed=feed,
        services=services,
        data_dir=data_dir,
    )
    if ingest_days is None:
        ingest_days = sorted({dt.date.fromisoformat(e["published"]) for e in entries if "published" in e})
    for day in ingest_days:
        stack.ingest(day)
    return stack


@pytest.fixture
def stack(tmp_path) -> Stack:
    return build_stack(tmp_path)


# -- acceptance reporting --------------------------------------------------------

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        line = f"{status}: {name}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
