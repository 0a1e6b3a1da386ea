"""Assistant services: profile, trends, ideas, chat, feedback, reports.

Every cacheable response is serialized to canonical JSON bytes and returned
by parsing those bytes, whether they came from the cache or were just
computed. A repeat request therefore returns byte-identical content with
zero provider calls. Trend and idea generation feed the thought store, which
is how the system's answers improve over time.
"""

from __future__ import annotations

import datetime as dt
import json
import hashlib
import logging
import os
import re
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from . import cache as cache_mod
from . import llm
from .cache import ResponseCache
from .clock import Clock
from .corpus import CorpusSnapshot, PaperRecord, TimeRange, range_window
from .embedding import Embedder
from .errors import ConflictError, NotFoundError, ValidationError
from .featurepool import PoolSnapshot
from .feeds import normalize_name
from .retrieval import retrieve_chat_context, retrieve_trend_papers
from .thoughts import Thought, ThoughtKind, ThoughtStore

logger = logging.getLogger(__name__)

PROFILE_ORIGIN_GENERATED = "generated"
PROFILE_ORIGIN_EDITED = "edited"

LIKE_PLAIN = "like_plain"
DISLIKE_PLAIN = "dislike_plain"
KEPT_AUGMENTED = "augmented"
KEPT_PLAIN = "plain"

_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")

PROFILES_FILE = "profiles.jsonl"
EXCHANGES_FILE = "exchanges.jsonl"
TELEMETRY_FILE = "telemetry.jsonl"
SIGNUPS_FILE = "signups.jsonl"
OUTBOX_DIR = "outbox"


class NoPublicationsFound(Exception):
    """The feed has no papers for this author; the profile must be edited in."""


class NoProfileError(ConflictError):
    """The requested operation needs a profile that does not exist yet."""


class NotSignedUpError(ConflictError):
    """Weekly reports require a prior signup with an email address."""


def canonical_json_bytes(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def profile_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


# -- data model ---------------------------------------------------------------


@dataclass(frozen=True)
class UserProfile:
    user: str
    text: str
    origin: str  # generated | edited
    updated_at: dt.datetime

    def payload(self) -> dict:
        return {
            "user": self.user,
            "profile": self.text,
            "origin": self.origin,
            "updated_at": self.updated_at.isoformat(),
        }


@dataclass
class ChatExchange:
    id: str
    user: str
    question: str
    answer_augmented: str
    answer_plain: str
    created_at: dt.datetime
    augmented_refs: tuple[str, ...] = ()
    plain_refs: tuple[str, ...] = ()
    feedback: str | None = None
    kept: str | None = None


class SnapshotBundle:
    """Immutable snapshots a request reads; acquired once at request start."""

    def __init__(
        self,
        corpus: CorpusSnapshot,
        papers: PoolSnapshot,
        thoughts_pool: PoolSnapshot,
        thoughts: tuple[Thought, ...],
    ):
        self.corpus = corpus
        self.papers = papers
        self.thoughts_pool = thoughts_pool
        self.thoughts = thoughts
        self._thoughts_by_id = {t.id: t for t in thoughts}

    def thought(self, thought_id: str) -> Thought | None:
        return self._thoughts_by_id.get(thought_id)


class StateSource:
    """Provides the current SnapshotBundle; the runtime publishes these atomically."""

    def current(self) -> SnapshotBundle:
        raise NotImplementedError


class DirectStateSource(StateSource):
    """Reads live stores directly; for single-threaded use and tests."""

    def __init__(self, corpus_store, paper_pool, thought_pool, thought_store: ThoughtStore):
        self._corpus = corpus_store
        self._papers = paper_pool
        self._thought_pool = thought_pool
        self._thoughts = thought_store

    def current(self) -> SnapshotBundle:
        return SnapshotBundle(
            self._corpus.snapshot(),
            self._papers.snapshot(),
            self._thought_pool.snapshot(),
            self._thoughts.snapshot_thoughts(),
        )


# -- persistence stores -------------------------------------------------------


class _JsonlLog:
    """Append-only JSONL file shared by the small state stores."""

    def __init__(self, path: Path | None):
        self._path = path
        self._lock = threading.Lock()

    def lines(self) -> list[dict]:
        if self._path is None or not self._path.exists():
            return []
        return [json.loads(line) for line in self._path.read_text().splitlines() if line.strip()]

    def append(self, entry: dict) -> None:
        if self._path is None:
            return
        with self._lock:
            with self._path.open("a") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")
                fh.flush()
                os.fsync(fh.fileno())


class ProfileStore:
    def __init__(self, directory: str | os.PathLike | None = None):
        self._log = _JsonlLog(Path(directory) / PROFILES_FILE if directory else None)
        self._profiles: dict[str, UserProfile] = {}
        self._lock = threading.Lock()
        for entry in self._log.lines():
            self._profiles[entry["user"]] = UserProfile(
                entry["user"], entry["text"], entry["origin"], dt.datetime.fromisoformat(entry["updated_at"])
            )

    def get(self, user: str) -> UserProfile | None:
        with self._lock:
            return self._profiles.get(user)

    def set(self, profile: UserProfile) -> None:
        with self._lock:
            self._profiles[profile.user] = profile
        self._log.append(
            {
                "user": profile.user,
                "text": profile.text,
                "origin": profile.origin,
                "updated_at": profile.updated_at.isoformat(),
            }
        )


class ExchangeStore:
    def __init__(self, directory: str | os.PathLike | None = None):
        self._log = _JsonlLog(Path(directory) / EXCHANGES_FILE if directory else None)
        self._exchanges: dict[str, ChatExchange] = {}
        self._order: list[str] = []
        self._lock = threading.Lock()
        self._created = 0
        for entry in self._log.lines():
            if entry["event"] == "created":
                ex = ChatExchange(
                    id=entry["id"],
                    user=entry["user"],
                    question=entry["question"],
                    answer_augmented=entry["answer_augmented"],
                    answer_plain=entry["answer_plain"],
                    created_at=dt.datetime.fromisoformat(entry["created_at"]),
                    augmented_refs=tuple(entry.get("augmented_refs", [])),
                    plain_refs=tuple(entry.get("plain_refs", [])),
                )
                self._exchanges[ex.id] = ex
                self._order.append(ex.id)
                self._created += 1
            elif entry["event"] == "feedback":
                ex = self._exchanges[entry["id"]]
                ex.feedback = entry["verdict"]
                ex.kept = entry["kept"]

    def allocate_id(self) -> str:
        with self._lock:
            self._created += 1
            return f"x{self._created:06d}"

    def add(self, exchange: ChatExchange) -> None:
        with self._lock:
            self._exchanges[exchange.id] = exchange
            self._order.append(exchange.id)
        self._log.append(
            {
                "event": "created",
                "id": exchange.id,
                "user": exchange.user,
                "question": exchange.question,
                "answer_augmented": exchange.answer_augmented,
                "answer_plain": exchange.answer_plain,
                "created_at": exchange.created_at.isoformat(),
                "augmented_refs": list(exchange.augmented_refs),
                "plain_refs": list(exchange.plain_refs),
            }
        )

    def get(self, exchange_id: str) -> ChatExchange | None:
        with self._lock:
            return self._exchanges.get(exchange_id)

    def set_feedback(self, exchange_id: str, verdict: str, kept: str, at: dt.datetime) -> None:
        with self._lock:
            ex = self._exchanges[exchange_id]
            ex.feedback = verdict
            ex.kept = kept
        self._log.append(
            {"event": "feedback", "id": exchange_id, "verdict": verdict, "kept": kept, "at": at.isoformat()}
        )


class TelemetryLog:
    def __init__(self, directory: str | os.PathLike | None = None):
        self._log = _JsonlLog(Path(directory) / TELEMETRY_FILE if directory else None)
        self._events: list[dict] = list(self._log.lines())
        self._lock = threading.Lock()

    def append(self, event: dict) -> None:
        with self._lock:
            self._events.append(event)
        self._log.append(event)

    def events(self, kind: str | None = None) -> list[dict]:
        with self._lock:
            items = list(self._events)
        if kind is not None:
            items = [e for e in items if e.get("event") == kind]
        return items

    def mean_saved_minutes(self) -> float | None:
        minutes = [e["minutes"] for e in self.events("saved_minutes")]
        return sum(minutes) / len(minutes) if minutes else None

    def preference_stats(self) -> dict:
        events = self.events("preference")
        preferred = sum(1 for e in events if e["augmented_preferred"])
        return {
            "events": len(events),
            "augmented_preferred": preferred,
            "rate": preferred / len(events) if events else None,
        }


class SignupStore:
    def __init__(self, directory: str | os.PathLike | None = None):
        self._log = _JsonlLog(Path(directory) / SIGNUPS_FILE if directory else None)
        self._emails: dict[str, str] = {}
        self._lock = threading.Lock()
        for entry in self._log.lines():
            self._emails[entry["user"]] = entry["email"]

    def get(self, user: str) -> str | None:
        with self._lock:
            return self._emails.get(user)

    def set(self, user: str, email: str, at: dt.datetime) -> None:
        with self._lock:
            already = self._emails.get(user) == email
            self._emails[user] = email
        if not already:
            self._log.append({"user": user, "email": email, "at": at.isoformat()})


# -- service ------------------------------------------------------------------


class AssistantService:
    """User-facing operations over the published snapshots."""

    def __init__(
        self,
        state: StateSource,
        thought_store: ThoughtStore,
        cache: ResponseCache,
        embedder: Embedder,
        provider: llm.CompletionProvider,
        author_search: Callable[[str], list[PaperRecord]],
        clock: Clock,
        data_dir: str | os.PathLike | None = None,
        thought_sink: Callable[[Thought], None] | None = None,
        k: int = 10,
        budget_tokens: int = llm.DEFAULT_BUDGET_TOKENS,
    ):
        self._state = state
        self._thoughts = thought_store
        self._cache = cache
        self._embedder = embedder
        self._provider = provider
        self._author_search = author_search
        self._clock = clock
        self._k = k
        self._budget = budget_tokens
        self._thought_sink = thought_sink or thought_store.record
        self._data_dir = Path(data_dir) if data_dir else None
        self.profiles = ProfileStore(data_dir)
        self.exchanges = ExchangeStore(data_dir)
        self.telemetry = TelemetryLog(data_dir)
        self.signups = SignupStore(data_dir)
        self._inflight: dict[str, dict] = {}
        self._inflight_lock = threading.Lock()

    # -- request coalescing ------------------------------------------------

    @contextmanager
    def _coalesce(self, digest: str):
        """Serialize concurrent identical requests so one fills the cache."""
        with self._inflight_lock:
            entry = self._inflight.setdefault(digest, {"lock": threading.Lock(), "refs": 0})
            entry["refs"] += 1
        entry["lock"].acquire()
        try:
            yield
        finally:
            entry["lock"].release()
            with self._inflight_lock:
                entry["refs"] -= 1
                if entry["refs"] == 0:
                    self._inflight.pop(digest, None)

    def _cached_payload(self, namespace: str, material: str, compute: Callable[[], tuple[dict, bool]]) -> dict:
        """Cache-first fetch; compute() returns (payload, cacheable)."""
        digest = cache_mod.cache_digest(namespace, material)
        with self._coalesce(digest):
            raw = self._cache.get(namespace, material)
            if raw is None:
                payload, cacheable = compute()
                raw = canonical_json_bytes(payload)
                if cacheable:
                    self._cache.put(namespace, material, raw)
            return json.loads(raw)

    # -- profile -------------------------------------------------------------

    def generate_profile(self, name: str) -> dict:
        user = normalize_name(name)
        if not user:
            raise ValidationError("name must be non-empty")

        def compute() -> tuple[dict, bool]:
            existing = self.profiles.get(user)
            if existing is not None:
                return existing.payload(), True
            records = self._author_search(user)
            if not records:
                raise NoPublicationsFound(user)
            prompt = llm.render_profile_prompt(records, self._budget)
            text = llm.complete(self._provider, prompt)
            profile = UserProfile(user, text, PROFILE_ORIGIN_GENERATED, self._clock.now())
            self.profiles.set(profile)
            return profile.payload(), True

        return self._cached_payload(cache_mod.NS_PROFILE, user, compute)

    def edit_profile(self, name: str, text: str) -> dict:
        user = normalize_name(name)
        if not user:
            raise ValidationError("name must be non-empty")
        if not text or not text.strip():
            raise ValidationError("profile text must be non-empty")
        old = self.profiles.get(user)
        profile = UserProfile(user, text.strip(), PROFILE_ORIGIN_EDITED, self._clock.now())
        self.profiles.set(profile)
        if old is not None:
            stale = profile_hash(old.text)
            for namespace in (cache_mod.NS_TRENDS, cache_mod.NS_IDEAS, cache_mod.NS_TREND_PAPERS, cache_mod.NS_REPORT):
                self._cache.invalidate(namespace, material_prefix=stale)
        raw = canonical_json_bytes(profile.payload())
        self._cache.put(cache_mod.NS_PROFILE, user, raw)
        return json.loads(raw)

    def _require_profile(self, user: str) -> UserProfile:
        profile = self.profiles.get(user)
        if profile is None:
            raise NoProfileError(f"no profile for user {user!r}; generate or edit one first")
        return profile

    # -- trends and ideas -----------------------------------------------------

    def generate_trends(self, name: str, time_range: TimeRange | str) -> dict:
        user = normalize_name(name)
        if not user:
            raise ValidationError("name must be non-empty")
        if isinstance(time_range, str):
            time_range = TimeRange.parse(time_range)
        profile = self._require_profile(user)
        phash = profile_hash(profile.text)
        day = self._clock.day_stamp()
        material = f"{phash}|{time_range.value}|{day}"

        def compute() -> tuple[dict, bool]:
            bundle = self._state.current()
            now = self._clock.today()
            hits_payload = self._trend_paper_hits(profile, bundle, time_range, now, material)
            base = {
                "user": user,
                "range": time_range.value,
                "generated_at": self._clock.now().isoformat(),
            }
            papers = []
            records = []
            for hit in hits_payload:
                record = bundle.corpus.get(hit["id"])
                if record is None:
                    continue
                records.append(record)
                papers.append(
                    {
                        "id": record.id,
                        "title": record.title,
                        "published": record.published.isoformat(),
                        "score": hit["score"],
                        "source": hit["source"],
                    }
                )
            if not records:
                return {
                    **base,
                    "trending_papers": [],
                    "topics": "No papers were published in this time range.",
                    "ideas": "",
                }, False
            prompt = llm.render_trend_prompt(records, self._budget)
            topics = llm.complete(self._provider, prompt)
            trend_thought = self._thoughts.new_thought(
                ThoughtKind.TREND,
                topics,
                owner=user,
                created_at=self._clock.now(),
                source_refs=tuple(r.id for r in records),
            )
            self._thought_sink(trend_thought)
            ideas_payload = self.generate_ideas(user, topics, source_ref=trend_thought.id)
            return {
                **base,
                "trending_papers": papers,
                "topics": topics,
                "ideas": ideas_payload["ideas"],
            }, True

        return self._cached_payload(cache_mod.NS_TRENDS, material, compute)

    def _trend_paper_hits(
        self,
        profile: UserProfile,
        bundle: SnapshotBundle,
        time_range: TimeRange,
        now: dt.date,
        material: str,
    ) -> list[dict]:
        def compute() -> tuple[dict, bool]:
            hits = retrieve_trend_papers(
                profile.text, self._embedder, bundle.papers, time_range, now, self._k
            )
            payload = {"hits": [{"id": h.id, "score": h.score, "source": h.source} for h in hits]}
            return payload, bool(hits)

        return self._cached_payload(cache_mod.NS_TREND_PAPERS, material, compute)["hits"]

    def generate_ideas(self, name: str, topics: str, source_ref: str | None = None) -> dict:
        user = normalize_name(name)
        if not user:
            raise ValidationError("name must be non-empty")
        if not topics or not topics.strip():
            raise ValidationError("topics must be non-empty")
        profile = self.profiles.get(user)
        phash = profile_hash(profile.text) if profile else "noprofile"
        topics_hash = hashlib.sha256(topics.encode("utf-8")).hexdigest()[:16]
        material = f"{phash}|{topics_hash}|{self._clock.day_stamp()}"

        def compute() -> tuple[dict, bool]:
            prompt = llm.render_idea_prompt(topics, self._budget)
            ideas = llm.complete(self._provider, prompt)
            refs = (source_ref,) if source_ref else ()
            thought = self._thoughts.new_thought(
                ThoughtKind.IDEA, ideas, owner=user, created_at=self._clock.now(), source_refs=refs
            )
            self._thought_sink(thought)
            return {"user": user, "ideas": ideas}, True

        return self._cached_payload(cache_mod.NS_IDEAS, material, compute)

    # -- chat ------------------------------------------------------------------

    def answer_chat(self, name: str, question: str) -> dict:
        user = normalize_name(name)
        if not user:
            raise ValidationError("name must be non-empty")
        if not question or not question.strip():
            raise ValidationError("question must be non-empty")
        question = question.strip()
        bundle = self._state.current()
        profile = self.profiles.get(user)
        profile_text = profile.text if profile else None
        augmented_hits = retrieve_chat_context(
            question, self._embedder, bundle.papers, bundle.thoughts_pool, self._k, include_thoughts=True
        )
        plain_hits = retrieve_chat_context(
            question, self._embedder, bundle.papers, bundle.thoughts_pool, self._k, include_thoughts=False
        )
        augmented_prompt = llm.render_chat_prompt(
            question, self._context_items(bundle, augmented_hits), profile_text, self._budget
        )
        plain_prompt = llm.render_chat_prompt(
            question, self._context_items(bundle, plain_hits), profile_text, self._budget
        )
        # Both completions must succeed before anything is persisted.
        answer_augmented = llm.complete(self._provider, augmented_prompt)
        answer_plain = llm.complete(self._provider, plain_prompt)
        exchange = ChatExchange(
            id=self.exchanges.allocate_id(),
            user=user,
            question=question,
            answer_augmented=answer_augmented,
            answer_plain=answer_plain,
            created_at=self._clock.now(),
            augmented_refs=tuple(h.id for h in augmented_hits),
            plain_refs=tuple(h.id for h in plain_hits),
        )
        self.exchanges.add(exchange)
        return {
            "exchange_id": exchange.id,
            "user": user,
            "question": question,
            "answer_augmented": answer_augmented,
            "answer_plain": answer_plain,
            "created_at": exchange.created_at.isoformat(),
        }

    def _context_items(self, bundle: SnapshotBundle, hits) -> list[tuple[str, str, str]]:
        items = []
        for hit in hits:
            if hit.source == "papers":
                record = bundle.corpus.get(hit.id)
                text = f"{record.title}. {record.abstract}" if record else hit.id
            else:
                thought = bundle.thought(hit.id)
                text = thought.text if thought else hit.id
            items.append((hit.source, hit.id, text))
        return items

    def get_exchange(self, exchange_id: str) -> dict:
        exchange = self.exchanges.get(exchange_id)
        if exchange is None:
            raise NotFoundError(f"unknown exchange: {exchange_id}")
        return {
            "exchange_id": exchange.id,
            "user": exchange.user,
            "question": exchange.question,
            "answer_augmented": exchange.answer_augmented,
            "answer_plain": exchange.answer_plain,
            "feedback": exchange.feedback,
            "kept": exchange.kept,
            "created_at": exchange.created_at.isoformat(),
        }

    def apply_feedback(self, exchange_id: str, verdict: str) -> dict:
        if verdict not in (LIKE_PLAIN, DISLIKE_PLAIN):
            raise ValidationError(f"unknown verdict: {verdict!r}")
        exchange = self.exchanges.get(exchange_id)
        if exchange is None:
            raise NotFoundError(f"unknown exchange: {exchange_id}")
        if exchange.feedback is not None:
            raise ConflictError(f"exchange {exchange_id} already has feedback")
        if verdict == LIKE_PLAIN:
            kept, kept_text, kept_refs = KEPT_PLAIN, exchange.answer_plain, exchange.plain_refs
        else:
            kept, kept_text, kept_refs = KEPT_AUGMENTED, exchange.answer_augmented, exchange.augmented_refs
        now = self._clock.now()
        self.exchanges.set_feedback(exchange_id, verdict, kept, now)
        thought = self._thoughts.new_thought(
            ThoughtKind.ANSWER, kept_text, owner=exchange.user, created_at=now, source_refs=kept_refs
        )
        self._thought_sink(thought)
        self.telemetry.append(
            {
                "event": "preference",
                "user": exchange.user,
                "exchange_id": exchange_id,
                "augmented_preferred": verdict == DISLIKE_PLAIN,
                "at": now.isoformat(),
            }
        )
        return {"exchange_id": exchange_id, "kept": kept}

    # -- telemetry and signup ---------------------------------------------------

    def record_saved_minutes(self, name: str, minutes: int) -> dict:
        user = normalize_name(name)
        if not user:
            raise ValidationError("name must be non-empty")
        if isinstance(minutes, bool) or not isinstance(minutes, int) or minutes < 0:
            raise ValidationError(f"minutes must be a non-negative integer, got {minutes!r}")
        self.telemetry.append(
            {
                "event": "saved_minutes",
                "user": user,
                "minutes": minutes,
                "at": self._clock.now().isoformat(),
            }
        )
        return {"ack": True, "mean_minutes": self.telemetry.mean_saved_minutes()}

    def signup(self, name: str, email: str) -> dict:
        user = normalize_name(name)
        if not user:
            raise ValidationError("name must be non-empty")
        if not isinstance(email, str) or not _EMAIL_RE.match(email):
            raise ValidationError(f"invalid email address: {email!r}")
        self.signups.set(user, email, self._clock.now())
        return {"ack": True, "user": user}

    # -- weekly report ------------------------------------------------------------

    def compose_weekly_report(self, name: str) -> dict:
        user = normalize_name(name)
        if not user:
            raise ValidationError("name must be non-empty")
        email = self.signups.get(user)
        if email is None:
            raise NotSignedUpError(f"user {user!r} has not signed up for reports")
        profile = self._require_profile(user)
        iso_year, iso_week, _ = self._clock.today().isocalendar()
        week_stamp = f"{iso_year}-W{iso_week:02d}"
        material = f"{profile_hash(profile.text)}|{week_stamp}"

        def compute() -> tuple[dict, bool]:
            bundle_payload = self.generate_trends(user, TimeRange.WEEK)
            document = self._render_report(user, week_stamp, bundle_payload)
            return {"user": user, "week": week_stamp, "document": document}, True

        payload = self._cached_payload(cache_mod.NS_REPORT, material, compute)
        path = self._write_outbox(user, week_stamp, payload["document"])
        if path is not None:
            payload["path"] = str(path)
        return payload

    def _render_report(self, user: str, week_stamp: str, bundle: dict) -> str:
        start, end = range_window(TimeRange.WEEK, self._clock.today())
        lines = [
            f"# Weekly research digest: {user}",
            "",
            f"Week {week_stamp} ({start.isoformat()} to {end.isoformat()})",
            "",
            "## Trending papers",
        ]
        if bundle["trending_papers"]:
            for paper in bundle["trending_papers"]:
                lines.append(
                    f"- [{paper['id']}] {paper['title']} (published {paper['published']}, score {paper['score']:.4f})"
                )
        else:
            lines.append("- No papers were published this week.")
        lines += ["", "## Trending topics", "", bundle["topics"], "", "## Ideas", "", bundle["ideas"], ""]
        return "\n".join(lines)

    def _write_outbox(self, user: str, week_stamp: str, document: str) -> Path | None:
        if self._data_dir is None:
            return None
        outbox = self._data_dir / OUTBOX_DIR
        outbox.mkdir(parents=True, exist_ok=True)
        safe_user = re.sub(r"[^a-z0-9]+", "_", user)
        path = outbox / f"{safe_user}-{week_stamp}.md"
        data = document.encode("utf-8")
        if not path.exists() or path.read_bytes() != data:
            path.write_bytes(data)
        return path
