"""Hash-keyed LRU cache for frequently repeated responses.

Keys are derived by hashing a namespace plus canonical key material (for
example a profile hash, a time range and the generation day). Values are
the serialized response bytes, so a cache hit returns exactly the bytes the
first computation produced.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError

DEFAULT_CAPACITY = 10_000

NS_PROFILE = "profile"
NS_TRENDS = "trends"
NS_IDEAS = "ideas"
NS_TREND_PAPERS = "trend_papers"
NS_REPORT = "report"
NAMESPACES = (NS_PROFILE, NS_TRENDS, NS_IDEAS, NS_TREND_PAPERS, NS_REPORT)


def cache_digest(namespace: str, material: str) -> str:
    return hashlib.sha256(f"{namespace}\x00{material}".encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CacheStats:
    hits: int
    misses: int
    evictions: int

    @property
    def lookups(self) -> int:
        return self.hits + self.misses


@dataclass
class _Entry:
    namespace: str
    material: str
    value: bytes


class ResponseCache:
    """Thread-safe LRU over (namespace, key material) -> response bytes."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValidationError(f"cache capacity must be >= 1, got {capacity}")
        self._capacity = capacity
        self._entries: OrderedDict[str, _Entry] = OrderedDict()
        self._lock = threading.RLock()
        self._hits = 0
        self._misses = 0
        self._evictions = 0

    def get(self, namespace: str, material: str) -> bytes | None:
        digest = cache_digest(namespace, material)
        with self._lock:
            entry = self._entries.get(digest)
            if entry is None:
                self._misses += 1
                return None
            self._entries.move_to_end(digest)
            self._hits += 1
            return entry.value

    def put(self, namespace: str, material: str, value: bytes) -> None:
        if not namespace:
            raise ValidationError("cache namespace must be non-empty")
        if not isinstance(value, bytes) or not value:
            raise ValidationError("cache value must be non-empty bytes")
        digest = cache_digest(namespace, material)
        with self._lock:
            # Last write wins on a duplicate key.
            self._entries[digest] = _Entry(namespace, material, value)
            self._entries.move_to_end(digest)
            while len(self._entries) > self._capacity:
                self._entries.popitem(last=False)
                self._evictions += 1

    def invalidate(self, namespace: str | None = None, material_prefix: str | None = None) -> int:
        """Drop entries matching the namespace and/or key-material prefix."""
        with self._lock:
            doomed = [
                digest
                for digest, entry in self._entries.items()
                if (namespace is None or entry.namespace == namespace)
                and (material_prefix is None or entry.material.startswith(material_prefix))
            ]
            for digest in doomed:
                del self._entries[digest]
            return len(doomed)

    def stats(self) -> CacheStats:
        with self._lock:
            return CacheStats(self._hits, self._misses, self._evictions)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    # -- optional persistence ------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write entries (LRU order preserved) for reload on next start."""
        with self._lock:
            rows = [
                {
                    "namespace": e.namespace,
                    "material": e.material,
                    "value": base64.b64encode(e.value).decode("ascii"),
                }
                for e in self._entries.values()
            ]
        Path(path).write_text(json.dumps(rows))

    def load(self, path: str | Path) -> int:
        p = Path(path)
        if not p.exists():
            return 0
        rows = json.loads(p.read_text())
        for row in rows:
            self.put(row["namespace"], row["material"], base64.b64decode(row["value"]))
        return len(rows)


class DisabledCache(ResponseCache):
    """Never stores or hits; used to measure the cost of running uncached."""

    def get(self, namespace: str, material: str) -> bytes | None:
        with self._lock:
            self._misses += 1
        return None

    def put(self, namespace: str, material: str, value: bytes) -> None:
        return None
