"""Paper corpus: validated records, immutable snapshots, daily ingestion.

The corpus only ever grows. Each ingest unions new records by id, persists
them to an append-only JSONL file, and publishes a fresh immutable snapshot;
readers keep whatever snapshot they already hold.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .feeds import FeedUnavailable, PaperFeed, normalize_name

logger = logging.getLogger(__name__)

CORPUS_FILE = "corpus.jsonl"
MANIFEST_FILE = "corpus_manifest.json"
AUTHOR_RESULT_CAP = 50
# Sleep between retries of an unreachable feed; patched to zeros in tests.
RETRY_DELAYS = (0.5, 1.0)

_VERSION_SUFFIX = re.compile(r"v\d+$")


@dataclass(frozen=True)
class PaperRecord:
    id: str
    title: str
    abstract: str
    authors: tuple[str, ...]
    categories: tuple[str, ...]
    published: dt.date

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract,
            "authors": list(self.authors),
            "categories": list(self.categories),
            "published": self.published.isoformat(),
        }


class TimeRange(enum.Enum):
    DAY = "day"
    WEEK = "week"
    ALL = "all"

    @classmethod
    def parse(cls, text: str) -> "TimeRange":
        try:
            return cls(text.lower())
        except ValueError:
            raise ValidationError(f"unknown time range: {text!r}") from None


def range_window(time_range: TimeRange, now: dt.date) -> tuple[dt.date | None, dt.date | None]:
    """Inclusive [start, end] date window; (None, None) means unbounded."""
    if time_range is TimeRange.DAY:
        return now, now
    if time_range is TimeRange.WEEK:
        return now - dt.timedelta(days=6), now
    return None, None


class MalformedEntry(ValueError):
    """A feed entry that cannot become a valid PaperRecord."""


def record_from_entry(entry: dict, ingest_date: dt.date) -> PaperRecord:
    """Validate one raw feed entry. Raises MalformedEntry on any defect."""
    if not isinstance(entry, dict) or "_malformed" in entry:
        raise MalformedEntry(f"unparseable entry: {entry!r}")
    raw_id = entry.get("id")
    if not isinstance(raw_id, str) or not raw_id.strip():
        raise MalformedEntry("missing id")
    paper_id = _VERSION_SUFFIX.sub("", raw_id.strip())
    title = entry.get("title")
    abstract = entry.get("abstract")
    if not isinstance(title, str) or not title.strip():
        raise MalformedEntry(f"{paper_id}: empty title")
    if not isinstance(abstract, str) or not abstract.strip():
        raise MalformedEntry(f"{paper_id}: empty abstract")
    published_raw = entry.get("published")
    try:
        published = dt.date.fromisoformat(str(published_raw)[:10])
    except (TypeError, ValueError):
        raise MalformedEntry(f"{paper_id}: bad published date {published_raw!r}") from None
    if published > ingest_date:
        raise MalformedEntry(f"{paper_id}: published {published} is in the future")
    authors = entry.get("authors") or []
    categories = entry.get("categories") or []
    if not isinstance(authors, list) or not all(isinstance(a, str) for a in authors):
        raise MalformedEntry(f"{paper_id}: bad authors field")
    if not isinstance(categories, list) or not all(isinstance(c, str) for c in categories):
        raise MalformedEntry(f"{paper_id}: bad categories field")
    return PaperRecord(
        id=paper_id,
        title=" ".join(title.split()),
        abstract=abstract.strip(),
        authors=tuple(a.strip() for a in authors if a.strip()),
        categories=tuple(c.strip() for c in categories if c.strip()),
        published=published,
    )


class CorpusSnapshot:
    """Immutable, ordered view of the corpus at a point in time."""

    def __init__(self, records: tuple[PaperRecord, ...], as_of: dt.date | None):
        self._records = tuple(sorted(records, key=lambda r: (r.published, r.id)))
        self._by_id = {r.id: r for r in self._records}
        self.as_of = as_of

    @property
    def records(self) -> tuple[PaperRecord, ...]:
        return self._records

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, paper_id: str) -> bool:
        return paper_id in self._by_id

    def get(self, paper_id: str) -> PaperRecord | None:
        return self._by_id.get(paper_id)

    def select_range(self, time_range: TimeRange, now: dt.date) -> tuple[PaperRecord, ...]:
        start, end = range_window(time_range, now)
        if start is None:
            return self._records
        return tuple(r for r in self._records if start <= r.published <= end)


class CorpusStore:
    """Single-writer corpus with JSONL persistence and atomic snapshot swap."""

    def __init__(self, data_dir: str | os.PathLike):
        self._dir = Path(data_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._file = self._dir / CORPUS_FILE
        self._manifest = self._dir / MANIFEST_FILE
        self._write_lock = threading.Lock()
        self._snapshot = self._load()

    def _load(self) -> CorpusSnapshot:
        records: dict[str, PaperRecord] = {}
        if self._file.exists():
            for lineno, line in enumerate(self._file.read_text().splitlines(), 1):
                if not line.strip():
                    continue
                entry = json.loads(line)
                record = PaperRecord(
                    id=entry["id"],
                    title=entry["title"],
                    abstract=entry["abstract"],
                    authors=tuple(entry["authors"]),
                    categories=tuple(entry["categories"]),
                    published=dt.date.fromisoformat(entry["published"]),
                )
                if record.id in records:
                    raise ValueError(f"{self._file}:{lineno}: duplicate id {record.id}")
                records[record.id] = record
        as_of = None
        if self._manifest.exists():
            raw = json.loads(self._manifest.read_text()).get("as_of")
            as_of = dt.date.fromisoformat(raw) if raw else None
        return CorpusSnapshot(tuple(records.values()), as_of)

    def snapshot(self) -> CorpusSnapshot:
        return self._snapshot

    # -- ingestion ---------------------------------------------------------

    def ingest_daily(self, feed: PaperFeed, date: dt.date) -> list[PaperRecord]:
        """Fetch, stage and commit one day's papers. Returns the new records."""
        new_records = self.stage_daily(feed, date)
        self.commit_daily(new_records, date)
        return new_records

    def stage_daily(self, feed: PaperFeed, date: dt.date) -> list[PaperRecord]:
        """Fetch and validate one day's records without committing them.

        Split from commit so the runtime can embed staged records first and
        publish corpus and feature pool together.
        """
        as_of = self._snapshot.as_of
        if as_of is not None and date < as_of:
            raise ValidationError(f"ingest date {date} is before corpus as_of {as_of}")
        entries = _fetch_with_retry(feed, date)
        seen = {r.id for r in self._snapshot.records}
        new_records: list[PaperRecord] = []
        for entry in entries:
            try:
                record = record_from_entry(entry, date)
            except MalformedEntry as exc:
                logger.warning("skipping malformed feed entry: %s", exc)
                continue
            if record.id in seen:
                continue
            seen.add(record.id)
            new_records.append(record)
        return new_records

    def commit_daily(self, new_records: list[PaperRecord], date: dt.date) -> None:
        """Append records to the corpus file and publish a new snapshot."""
        with self._write_lock:
            current = self._snapshot
            if current.as_of is not None and date < current.as_of:
                raise ValidationError(f"ingest date {date} is before corpus as_of {current.as_of}")
            existing = {r.id for r in current.records}
            fresh = [r for r in new_records if r.id not in existing]
            if fresh:
                with self._file.open("a") as fh:
                    for record in fresh:
                        fh.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            as_of = date if current.as_of is None else max(current.as_of, date)
            tmp = self._manifest.with_suffix(".tmp")
            tmp.write_text(json.dumps({"as_of": as_of.isoformat()}))
            os.replace(tmp, self._manifest)
            self._snapshot = CorpusSnapshot(current.records + tuple(fresh), as_of)

    # -- queries -----------------------------------------------------------

    def select_range(self, time_range: TimeRange, now: dt.date) -> tuple[PaperRecord, ...]:
        return self._snapshot.select_range(time_range, now)

    def search_by_author(self, name: str, feed: PaperFeed) -> list[PaperRecord]:
        """Author publications from the feed, newest first, capped."""
        normalized = normalize_name(name)
        if not normalized:
            raise ValidationError("author name must be non-empty")
        entries = _search_with_retry(feed, normalized)
        today = dt.date.today()
        records = []
        for entry in entries:
            try:
                records.append(record_from_entry(entry, today))
            except MalformedEntry as exc:
                logger.warning("skipping malformed author entry: %s", exc)
        records.sort(key=lambda r: (r.published, r.id), reverse=True)
        return records[:AUTHOR_RESULT_CAP]


def _fetch_with_retry(feed: PaperFeed, date: dt.date) -> list[dict]:
    return _with_retry(lambda: feed.fetch_day(date), f"fetch day {date}")


def _search_with_retry(feed: PaperFeed, name: str) -> list[dict]:
    return _with_retry(lambda: feed.search_author(name), f"author search {name!r}")


def _with_retry(call, what: str) -> list[dict]:
    attempts = len(RETRY_DELAYS) + 1
    for attempt in range(attempts):
        try:
            return call()
        except FeedUnavailable as exc:
            if attempt == attempts - 1:
                raise
            delay = RETRY_DELAYS[attempt]
            logger.warning("%s failed (%s); retrying in %.1fs", what, exc, delay)
            time.sleep(delay)
    raise AssertionError("unreachable")
