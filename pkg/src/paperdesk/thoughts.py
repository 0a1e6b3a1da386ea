"""Generated-knowledge store: trend summaries, ideas, and kept answers.

Thoughts are append-only and shared globally; the owner tag records which
user's activity produced one. Every recorded thought lands in the thought
feature pool in the same operation so retrieval never lags the log.
"""

from __future__ import annotations

import datetime as dt
import enum
import json
import logging
import os
import threading
from dataclasses import dataclass
from pathlib import Path

from .embedding import Embedder
from .errors import ValidationError
from .featurepool import FeaturePool

logger = logging.getLogger(__name__)

THOUGHTS_FILE = "thoughts.jsonl"
GLOBAL_OWNER = "global"


class ThoughtKind(enum.Enum):
    TREND = "trend"
    IDEA = "idea"
    ANSWER = "answer"


@dataclass(frozen=True)
class Thought:
    id: str
    kind: ThoughtKind
    text: str
    owner: str
    created_at: dt.datetime
    source_refs: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "text": self.text,
            "owner": self.owner,
            "created_at": self.created_at.isoformat(),
            "source_refs": list(self.source_refs),
        }

    @classmethod
    def from_json_dict(cls, entry: dict) -> "Thought":
        return cls(
            id=entry["id"],
            kind=ThoughtKind(entry["kind"]),
            text=entry["text"],
            owner=entry["owner"],
            created_at=dt.datetime.fromisoformat(entry["created_at"]),
            source_refs=tuple(entry.get("source_refs", [])),
        )


class ThoughtStore:
    """Append-only thought log kept aligned with its embedding pool."""

    def __init__(self, pool: FeaturePool, embedder: Embedder, directory: str | os.PathLike | None = None):
        self._pool = pool
        self._embedder = embedder
        self._lock = threading.RLock()
        self._thoughts: list[Thought] = []
        self._by_id: dict[str, Thought] = {}
        self._next_seq = 1
        self._path: Path | None = None
        if directory is not None:
            base = Path(directory)
            base.mkdir(parents=True, exist_ok=True)
            self._path = base / THOUGHTS_FILE
            self._load()

    def _load(self) -> None:
        assert self._path is not None
        if not self._path.exists():
            return
        for line in self._path.read_text().splitlines():
            if not line.strip():
                continue
            thought = Thought.from_json_dict(json.loads(line))
            if thought.id in self._by_id:
                raise ValueError(f"{self._path}: duplicate thought id {thought.id}")
            self._thoughts.append(thought)
            self._by_id[thought.id] = thought
        self._next_seq = 1 + max(
            (int(t.id[1:]) for t in self._thoughts if t.id[1:].isdigit()), default=0
        )
        # Heal a crash between the log append and the pool append: the log
        # is authoritative, the pool row can be regenerated.
        missing = [t for t in self._thoughts if t.id not in self._pool]
        if missing:
            logger.warning("thought pool missing %d rows; re-embedding", len(missing))
            self._pool.append(
                [t.id for t in missing],
                [self._embedder.embed(t.text) for t in missing],
                [t.created_at.timestamp() for t in missing],
            )

    def new_thought(
        self,
        kind: ThoughtKind,
        text: str,
        owner: str,
        created_at: dt.datetime,
        source_refs: tuple[str, ...] = (),
    ) -> Thought:
        """Build a thought with a freshly allocated id (not yet recorded)."""
        if not text.strip():
            raise ValidationError("thought text must be non-empty")
        if not owner:
            owner = GLOBAL_OWNER
        with self._lock:
            thought_id = f"t{self._next_seq:06d}"
            self._next_seq += 1
        return Thought(thought_id, kind, text, owner, created_at, tuple(source_refs))

    def record(self, thought: Thought) -> Thought:
        """Append the thought and its embedding; both or neither land."""
        if not thought.text.strip():
            raise ValidationError(f"thought {thought.id}: empty text")
        vector = self._embedder.embed(thought.text)
        with self._lock:
            if thought.id in self._by_id or thought.id in self._pool:
                raise ValidationError(f"duplicate thought id: {thought.id}")
            if self._path is not None:
                with self._path.open("a") as fh:
                    fh.write(json.dumps(thought.to_json_dict(), sort_keys=True) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            self._pool.append([thought.id], [vector], [thought.created_at.timestamp()])
            self._thoughts.append(thought)
            self._by_id[thought.id] = thought
            seq = int(thought.id[1:]) if thought.id[1:].isdigit() else 0
            self._next_seq = max(self._next_seq, seq + 1)
        return thought

    def get(self, thought_id: str) -> Thought | None:
        with self._lock:
            return self._by_id.get(thought_id)

    def __contains__(self, thought_id: str) -> bool:
        with self._lock:
            return thought_id in self._by_id

    def snapshot_thoughts(
        self, kind: ThoughtKind | None = None, owner: str | None = None
    ) -> tuple[Thought, ...]:
        """Thoughts in creation order, optionally filtered."""
        with self._lock:
            items = tuple(self._thoughts)
        if kind is not None:
            items = tuple(t for t in items if t.kind is kind)
        if owner is not None:
            items = tuple(t for t in items if t.owner == owner)
        return items

    def counts(self) -> dict[ThoughtKind, int]:
        out = {kind: 0 for kind in ThoughtKind}
        with self._lock:
            for t in self._thoughts:
                out[t.kind] += 1
        return out

    def __len__(self) -> int:
        with self._lock:
            return len(self._thoughts)
