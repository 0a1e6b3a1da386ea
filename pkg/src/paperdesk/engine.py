"""Runtime engine: keeps serving, updating and self-evolution apart.

Request handlers only ever see an immutable SnapshotBundle published by a
single atomic reference swap, so reads never wait on writers. The daily
update stages and embeds new papers off the write path (paced, so the
embedding loop cannot starve request threads), then commits corpus and pool
together under one lock before publishing. Thought recording is asynchronous
through a bounded, journaled queue that replays exactly once after a crash.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import queue
import threading
import time
from contextlib import contextmanager
from pathlib import Path

from dataclasses import dataclass

from .cache import NS_IDEAS, NS_TRENDS, NS_TREND_PAPERS, ResponseCache
from .clock import Clock, SystemClock
from .config import AppConfig
from .corpus import CorpusStore, PaperRecord
from .embedding import Embedder, HashedNgramEmbedder
from .errors import ValidationError
from .featurepool import FeaturePool, day_epoch
from .feeds import FixtureFeed, PaperFeed
from .llm import CompletionProvider, HttpProvider, MockProvider
from .services import AssistantService, SnapshotBundle, StateSource
from .thoughts import Thought, ThoughtStore

logger = logging.getLogger(__name__)

JOURNAL_FILE = "evolution_journal.jsonl"
CACHE_SNAPSHOT_FILE = "cache_snapshot.json"


class EngineOverloaded(RuntimeError):
    """All request slots stayed busy past the deadline; retry later."""


class EvolutionQueueFull(RuntimeError):
    """The self-evolution queue is at capacity; apply backpressure."""


def paper_embedding_text(record: PaperRecord) -> str:
    """The exact text embedded for a paper; shared by every pool builder."""
    return f"{record.title}\n\n{record.abstract}"


class Engine(StateSource):
    def __init__(
        self,
        config: AppConfig,
        corpus_store: CorpusStore,
        paper_pool: FeaturePool,
        thought_pool: FeaturePool,
        thought_store: ThoughtStore,
        cache: ResponseCache,
        embedder: Embedder,
        clock: Clock,
        feed: PaperFeed | None = None,
    ):
        self._config = config
        self._corpus = corpus_store
        self._paper_pool = paper_pool
        self._thought_pool = thought_pool
        self._thoughts = thought_store
        self._cache = cache
        self._embedder = embedder
        self._clock = clock
        self._feed = feed
        self._write_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(config.max_concurrent_requests)
        self._queue: queue.Queue[Thought] = queue.Queue(maxsize=config.evolution_queue_limit)
        self._enqueue_lock = threading.Lock()
        self._pending_lock = threading.Lock()
        self._pending = 0
        self._publish_count = 0
        self._stop = threading.Event()
        self._evolution_thread: threading.Thread | None = None
        self._scheduler_thread: threading.Thread | None = None
        self._last_scheduled_run: dt.date | None = None
        self._journal_path: Path | None = None
        if config.data_dir:
            data_dir = Path(config.data_dir)
            data_dir.mkdir(parents=True, exist_ok=True)
            self._journal_path = data_dir / JOURNAL_FILE
            if config.persist_cache:
                self._cache.load(data_dir / CACHE_SNAPSHOT_FILE)
        self._heal_paper_pool()
        self._replay_journal()
        with self._write_lock:
            self._publish()

    # -- state publication ---------------------------------------------------

    def current(self) -> SnapshotBundle:
        return self._bundle

    def _publish(self) -> None:
        # Caller holds _write_lock; the reference swap itself is atomic.
        self._bundle = SnapshotBundle(
            self._corpus.snapshot(),
            self._paper_pool.snapshot(),
            self._thought_pool.snapshot(),
            self._thoughts.snapshot_thoughts(),
        )
        self._publish_count += 1

    def _heal_paper_pool(self) -> None:
        """Re-embed corpus records a crash left out of the pool."""
        missing = [r for r in self._corpus.snapshot().records if r.id not in self._paper_pool]
        if not missing:
            return
        logger.warning("paper pool missing %d rows; re-embedding", len(missing))
        vectors = [self._embedder.embed(paper_embedding_text(r)) for r in missing]
        self._paper_pool.append(
            [r.id for r in missing], vectors, [day_epoch(r.published) for r in missing]
        )

    # -- serving ---------------------------------------------------------------

    @contextmanager
    def request_slot(self):
        """Admission control: queue up to the deadline, then shed the request."""
        acquired = self._slots.acquire(timeout=self._config.request_deadline_seconds)
        if not acquired:
            raise EngineOverloaded(
                f"no request slot within {self._config.request_deadline_seconds:.0f}s; retry later"
            )
        try:
            yield
        finally:
            self._slots.release()

    # -- daily update ------------------------------------------------------------

    def run_daily_update(self, date: dt.date | None = None, feed: PaperFeed | None = None) -> dict:
        feed = feed or self._feed
        if feed is None:
            raise ValidationError("no feed configured for daily updates")
        if date is None:
            date = self._clock.today()
        started = time.perf_counter()
        staged = self._corpus.stage_daily(feed, date)
        vectors = self._paced_embed([paper_embedding_text(r) for r in staged])
        with self._write_lock:
            self._corpus.commit_daily(staged, date)
            if staged:
                self._paper_pool.append(
                    [r.id for r in staged], vectors, [day_epoch(r.published) for r in staged]
                )
            self._publish()
        # Cached trend responses predate the new papers; drop the day-scoped keys.
        for namespace in (NS_TRENDS, NS_IDEAS, NS_TREND_PAPERS):
            self._cache.invalidate(namespace)
        return {
            "date": date.isoformat(),
            "new_papers": len(staged),
            "corpus_size": len(self._corpus.snapshot()),
            "pool_rows": self._paper_pool.rowcount,
            "generation": self._publish_count,
            "seconds": round(time.perf_counter() - started, 3),
        }

    def _paced_embed(self, texts: list[str]) -> list:
        """Embed in small batches with pauses so request threads stay responsive."""
        vectors = []
        batch = self._config.update_batch_size
        for i in range(0, len(texts), batch):
            vectors.extend(self._embedder.embed(t) for t in texts[i : i + batch])
            if i + batch < len(texts):
                time.sleep(self._config.update_pause_seconds)
        return vectors

    # -- self-evolution queue -------------------------------------------------------

    def enqueue_thought(self, thought: Thought) -> None:
        """Durably journal and queue a thought for the evolution worker."""
        with self._enqueue_lock:
            if self._queue.full():
                raise EvolutionQueueFull(f"evolution queue is at capacity {self._queue.maxsize}")
            self._journal({"op": "enqueue", "thought": thought.to_json_dict()})
            self._queue.put_nowait(thought)
            with self._pending_lock:
                self._pending += 1

    def _journal(self, entry: dict) -> None:
        if self._journal_path is None:
            return
        with self._journal_path.open("a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay_journal(self) -> None:
        """Record journaled-but-unrecorded thoughts exactly once, then compact."""
        if self._journal_path is None or not self._journal_path.exists():
            return
        enqueued: dict[str, Thought] = {}
        done: set[str] = set()
        for line in self._journal_path.read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry["op"] == "enqueue":
                thought = Thought.from_json_dict(entry["thought"])
                enqueued[thought.id] = thought
            elif entry["op"] == "done":
                done.add(entry["id"])
        replayed = 0
        for thought_id, thought in enqueued.items():
            if thought_id in done or thought_id in self._thoughts:
                continue
            self._thoughts.record(thought)
            replayed += 1
        if replayed:
            logger.info("replayed %d journaled thoughts", replayed)
        # Everything journaled now lives in the thought log; start fresh.
        self._journal_path.write_text("")

    def _evolution_loop(self) -> None:
        while not self._stop.is_set():
            try:
                thought = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                with self._write_lock:
                    self._thoughts.record(thought)
                    self._publish()
            except ValidationError as exc:
                # Duplicate id: already recorded before a crash. Safe to drop.
                logger.warning("evolution task skipped: %s", exc)
            except Exception:
                logger.exception("evolution task failed for thought %s", thought.id)
            finally:
                self._journal({"op": "done", "id": thought.id})
                with self._pending_lock:
                    self._pending -= 1
                self._queue.task_done()

    def flush_evolution(self, timeout: float = 10.0) -> bool:
        """Wait until the queue drains; returns False on timeout."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._pending_lock:
                if self._pending == 0:
                    return True
            time.sleep(0.005)
        return False

    @property
    def queue_depth(self) -> int:
        with self._pending_lock:
            return self._pending

    # -- lifecycle ---------------------------------------------------------------

    def start(self, scheduler: bool = False) -> None:
        if self._evolution_thread is None:
            self._stop.clear()
            self._evolution_thread = threading.Thread(
                target=self._evolution_loop, name="self-evolution", daemon=True
            )
            self._evolution_thread.start()
        if scheduler and self._scheduler_thread is None:
            self._scheduler_thread = threading.Thread(
                target=self._scheduler_loop, name="daily-update", daemon=True
            )
            self._scheduler_thread.start()

    def _scheduler_loop(self) -> None:
        hh, mm = self._config.daily_update_utc_time.split(":")
        fire_at = dt.time(int(hh), int(mm))
        while not self._stop.wait(timeout=20.0):
            now = self._clock.now()
            if now.timetz().replace(tzinfo=None) < fire_at:
                continue
            if self._last_scheduled_run == now.date():
                continue
            try:
                summary = self.run_daily_update(now.date())
                logger.info("scheduled daily update: %s", summary)
            except Exception:
                logger.exception("scheduled daily update failed")
            self._last_scheduled_run = now.date()

    def stop(self) -> None:
        self._stop.set()
        if self._evolution_thread is not None:
            self._evolution_thread.join(timeout=5.0)
            self._evolution_thread = None
        if self._scheduler_thread is not None:
            self._scheduler_thread.join(timeout=25.0)
            self._scheduler_thread = None
        if self._config.persist_cache and self._config.data_dir:
            self._cache.save(Path(self._config.data_dir) / CACHE_SNAPSHOT_FILE)

    # -- introspection --------------------------------------------------------------

    def health(self) -> dict:
        bundle = self._bundle
        return {
            "status": "ok",
            "generation": self._publish_count,
            "queue_depth": self.queue_depth,
            "corpus_size": len(bundle.corpus),
            "paper_pool_rows": bundle.papers.rowcount,
            "thought_count": len(bundle.thoughts),
            "as_of": bundle.corpus.as_of.isoformat() if bundle.corpus.as_of else None,
        }


# -- composition root -----------------------------------------------------------


@dataclass
class Runtime:
    """Fully wired application stack."""

    config: AppConfig
    clock: Clock
    embedder: Embedder
    provider: CompletionProvider
    cache: ResponseCache
    feed: PaperFeed | None
    corpus_store: CorpusStore
    paper_pool: FeaturePool
    thought_pool: FeaturePool
    thought_store: ThoughtStore
    engine: Engine
    services: AssistantService


def build_runtime(
    config: AppConfig,
    provider: CompletionProvider | None = None,
    feed: PaperFeed | None = None,
    clock: Clock | None = None,
    embedder: Embedder | None = None,
    start_engine: bool = False,
) -> Runtime:
    clock = clock or SystemClock()
    embedder = embedder or HashedNgramEmbedder(config.embed_dim)
    if provider is None:
        if config.provider == "mock":
            provider = MockProvider()
        else:
            provider = HttpProvider(
                base_url=os.environ.get("PROVIDER_BASE_URL", "https://api.openai.com/v1"),
                model=os.environ.get("PROVIDER_MODEL", "gpt-4o-mini"),
            )
    if feed is None and config.fixture:
        feed = FixtureFeed(config.fixture)
    data_dir = os.environ.get("DATA_DIR") or config.data_dir
    corpus_store = CorpusStore(data_dir)
    paper_pool = FeaturePool(config.embed_dim, "papers", data_dir)
    thought_pool = FeaturePool(config.embed_dim, "thoughts", data_dir)
    thought_store = ThoughtStore(thought_pool, embedder, data_dir)
    cache = ResponseCache(config.cache_capacity)
    engine = Engine(
        config, corpus_store, paper_pool, thought_pool, thought_store, cache, embedder, clock, feed
    )

    def author_search(name: str):
        if feed is None:
            return []
        return corpus_store.search_by_author(name, feed)

    services = AssistantService(
        state=engine,
        thought_store=thought_store,
        cache=cache,
        embedder=embedder,
        provider=provider,
        author_search=author_search,
        clock=clock,
        data_dir=data_dir,
        thought_sink=engine.enqueue_thought,
        k=config.k,
        budget_tokens=config.prompt_budget,
    )
    runtime = Runtime(
        config=config,
        clock=clock,
        embedder=embedder,
        provider=provider,
        cache=cache,
        feed=feed,
        corpus_store=corpus_store,
        paper_pool=paper_pool,
        thought_pool=thought_pool,
        thought_store=thought_store,
        engine=engine,
        services=services,
    )
    if start_engine:
        engine.start()
    return runtime
