"""Append-only pools of precomputed embedding vectors.

A pool holds one row per document id. Rows are never mutated or removed, so
any published snapshot stays valid forever: new generations only add rows.
On disk a pool is a little-endian float32 matrix file with a fixed header
plus a sidecar id list (one JSON line per row with the row's recency stamp).
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError

logger = logging.getLogger(__name__)

MAGIC = b"FPL1"
_HEADER = struct.Struct("<4sIQ")  # magic, dim (u32), rowcount (u64)
NORM_TOLERANCE = 1e-6


def day_epoch(day: dt.date) -> float:
    """Epoch seconds of midnight UTC; the recency stamp for a published date."""
    return dt.datetime(day.year, day.month, day.day, tzinfo=dt.timezone.utc).timestamp()


@dataclass(frozen=True)
class PoolSnapshot:
    """Immutable view of a pool generation."""

    name: str
    ids: tuple[str, ...]
    matrix: np.ndarray  # float32, shape (rows, dim), read-only view
    recency: np.ndarray  # float64, shape (rows,), read-only view
    generation: int

    @property
    def rowcount(self) -> int:
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])


class FeaturePool:
    """Thread-safe append-only vector pool with optional file persistence."""

    def __init__(self, dim: int, name: str, directory: str | os.PathLike | None = None):
        if dim <= 0:
            raise ValidationError(f"pool dimension must be positive, got {dim}")
        self.name = name
        self.dim = dim
        self._lock = threading.RLock()
        self._rows = 0
        self._generation = 0
        self._ids: list[str] = []
        self._id_set: set[str] = set()
        self._matrix = np.empty((64, dim), dtype=np.float32)
        self._recency = np.empty(64, dtype=np.float64)
        self._matrix_path: Path | None = None
        self._ids_path: Path | None = None
        if directory is not None:
            base = Path(directory)
            base.mkdir(parents=True, exist_ok=True)
            self._matrix_path = base / f"pool_{name}.bin"
            self._ids_path = base / f"pool_{name}.ids"
            self._load()

    # -- construction ------------------------------------------------------

    def _load(self) -> None:
        assert self._matrix_path is not None and self._ids_path is not None
        if not self._matrix_path.exists():
            self._write_header(0)
            self._ids_path.write_text("")
            return
        raw = self._matrix_path.read_bytes()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{self._matrix_path}: truncated header")
        magic, dim, rows = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise ValueError(f"{self._matrix_path}: bad magic {magic!r}")
        if dim != self.dim:
            raise ValidationError(f"{self._matrix_path}: stored dim {dim} != configured {self.dim}")
        need = _HEADER.size + rows * dim * 4
        if len(raw) < need:
            raise ValueError(f"{self._matrix_path}: expected {need} bytes for {rows} rows, found {len(raw)}")
        matrix = np.frombuffer(raw, dtype="<f4", count=rows * dim, offset=_HEADER.size).reshape(rows, dim)
        id_lines = self._ids_path.read_text().splitlines() if self._ids_path.exists() else []
        if len(id_lines) < rows:
            raise ValueError(f"{self._ids_path}: {len(id_lines)} ids for {rows} rows")
        if len(raw) > need or len(id_lines) > rows:
            # Self-heal a partial append that never reached the header update.
            logger.warning("pool %s: trimming uncommitted trailing rows", self.name)
            with self._matrix_path.open("r+b") as fh:
                fh.truncate(need)
            self._ids_path.write_text("".join(line + "\n" for line in id_lines[:rows]))
            id_lines = id_lines[:rows]
        ids, recency = [], np.zeros(rows, dtype=np.float64)
        for i, line in enumerate(id_lines):
            entry = json.loads(line)
            ids.append(entry["id"])
            recency[i] = float(entry.get("ts", 0.0))
        capacity = max(64, rows)
        self._matrix = np.empty((capacity, self.dim), dtype=np.float32)
        self._matrix[:rows] = matrix.astype(np.float32, copy=False)
        self._recency = np.empty(capacity, dtype=np.float64)
        self._recency[:rows] = recency
        self._ids = ids
        self._id_set = set(ids)
        if len(self._id_set) != len(ids):
            raise ValueError(f"{self._ids_path}: duplicate ids on disk")
        self._rows = rows
        # Rowcount is a monotone stand-in for the in-memory append counter.
        self._generation = rows

    def _write_header(self, rows: int) -> None:
        assert self._matrix_path is not None
        if not self._matrix_path.exists():
            self._matrix_path.write_bytes(_HEADER.pack(MAGIC, self.dim, rows))
            return
        with self._matrix_path.open("r+b") as fh:
            fh.write(_HEADER.pack(MAGIC, self.dim, rows))
            fh.flush()
            os.fsync(fh.fileno())

    # -- mutation ----------------------------------------------------------

    def append(
        self,
        ids: Sequence[str],
        vectors: Sequence[np.ndarray],
        recency: Sequence[float] | None = None,
    ) -> int:
        """Append aligned rows; returns the new generation.

        Rejections (duplicate id, length or dimension mismatch, bad vector)
        leave the pool completely unchanged.
        """
        if len(ids) != len(vectors):
            raise ValidationError(f"{len(ids)} ids for {len(vectors)} vectors")
        if recency is None:
            recency = [0.0] * len(ids)
        if len(recency) != len(ids):
            raise ValidationError(f"{len(ids)} ids for {len(recency)} recency stamps")
        if not ids:
            return self._generation
        batch = np.empty((len(ids), self.dim), dtype=np.float32)
        for i, vec in enumerate(vectors):
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (self.dim,):
                raise ValidationError(f"vector {i} ({ids[i]}): shape {arr.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"vector {i} ({ids[i]}): non-finite components")
            norm = float(np.linalg.norm(arr.astype(np.float64)))
            if abs(norm - 1.0) > NORM_TOLERANCE:
                raise ValidationError(f"vector {i} ({ids[i]}): norm {norm:.8f} is not 1")
            batch[i] = arr
        with self._lock:
            fresh = set()
            for i, row_id in enumerate(ids):
                if not row_id:
                    raise ValidationError(f"vector {i}: empty id")
                if row_id in self._id_set or row_id in fresh:
                    raise ValidationError(f"duplicate id in pool: {row_id}")
                fresh.add(row_id)
            self._ensure_capacity(self._rows + len(ids))
            start = self._rows
            self._matrix[start : start + len(ids)] = batch
            self._recency[start : start + len(ids)] = np.asarray(recency, dtype=np.float64)
            self._persist_rows(start, ids, batch, recency)
            self._ids.extend(ids)
            self._id_set.update(fresh)
            self._rows += len(ids)
            self._generation += 1
            return self._generation

    def _ensure_capacity(self, needed: int) -> None:
        capacity = self._matrix.shape[0]
        if needed <= capacity:
            return
        while capacity < needed:
            capacity *= 2
        matrix = np.empty((capacity, self.dim), dtype=np.float32)
        matrix[: self._rows] = self._matrix[: self._rows]
        recency = np.empty(capacity, dtype=np.float64)
        recency[: self._rows] = self._recency[: self._rows]
        # Old snapshots keep views into the previous buffers, which are
        # never written again.
        self._matrix = matrix
        self._recency = recency

    def _persist_rows(self, start: int, ids: Sequence[str], batch: np.ndarray, recency: Sequence[float]) -> None:
        if self._matrix_path is None:
            return
        offset = _HEADER.size + start * self.dim * 4
        with self._matrix_path.open("r+b") as fh:
            fh.seek(offset)
            fh.write(batch.astype("<f4", copy=False).tobytes())
            fh.flush()
            os.fsync(fh.fileno())
        with self._ids_path.open("a") as fh:
            for row_id, ts in zip(ids, recency):
                fh.write(json.dumps({"id": row_id, "ts": float(ts)}) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        # Header last: rows beyond the recorded count are ignored on load.
        self._write_header(start + len(ids))

    # -- views -------------------------------------------------------------

    def snapshot(self) -> PoolSnapshot:
        with self._lock:
            matrix = self._matrix[: self._rows]
            matrix.flags.writeable = False
            recency = self._recency[: self._rows]
            recency.flags.writeable = False
            return PoolSnapshot(
                name=self.name,
                ids=tuple(self._ids),
                matrix=matrix,
                recency=recency,
                generation=self._generation,
            )

    def __contains__(self, row_id: str) -> bool:
        with self._lock:
            return row_id in self._id_set

    @property
    def rowcount(self) -> int:
        return self._rows

    @property
    def generation(self) -> int:
        return self._generation
