"""Exact top-k cosine retrieval over precomputed pools.

Vectors are unit-normalized, so cosine similarity is a dot product. The scan
runs in float32 (BLAS), then the boundary region is re-scored in float64 so
the final ordering is exactly the full-precision ordering regardless of
float32 accumulation error. No approximate index: every candidate is scored.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import TimeRange, range_window
from .embedding import Embedder
from .errors import ValidationError
from .featurepool import PoolSnapshot, day_epoch

DEFAULT_K = 10
# Candidates within this float32 score slack of the kth score get re-scored
# in float64; comfortably above worst-case sgemv error at d=384.
_REFINE_SLACK = 1e-4


@dataclass(frozen=True)
class RetrievalHit:
    id: str
    score: float
    source: str


def epoch_window(time_range: TimeRange, now: dt.date) -> tuple[float, float] | None:
    """Half-open [start, end) epoch-second window for a date range."""
    start, end = range_window(time_range, now)
    if start is None:
        return None
    return day_epoch(start), day_epoch(end) + 86400.0


def retrieve_topk(
    query: np.ndarray,
    pools: Sequence[PoolSnapshot],
    k: int = DEFAULT_K,
    *,
    recency_window: tuple[float, float] | None = None,
    id_filter: Callable[[str], bool] | None = None,
) -> list[RetrievalHit]:
    """Top-k hits across pools, best first.

    Ties on score prefer the newer row (larger recency stamp), then the
    lexicographically smaller id. Multiple pools are searched as one
    concatenated candidate set.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    query = np.asarray(query)
    if query.ndim != 1:
        raise ValidationError(f"query must be a vector, got shape {query.shape}")
    candidates: list[tuple[PoolSnapshot, np.ndarray, np.ndarray]] = []
    for pool in pools:
        if pool.rowcount == 0:
            continue
        if pool.dimension != query.shape[0]:
            raise ValidationError(
                f"pool {pool.name!r} dimension {pool.dimension} != query dimension {query.shape[0]}"
            )
        scores = pool.matrix @ query.astype(np.float32)
        keep = np.ones(pool.rowcount, dtype=bool)
        if recency_window is not None:
            lo, hi = recency_window
            keep &= (pool.recency >= lo) & (pool.recency < hi)
        if id_filter is not None:
            keep &= np.fromiter((id_filter(i) for i in pool.ids), dtype=bool, count=pool.rowcount)
        rows = np.nonzero(keep)[0]
        if rows.size:
            candidates.append((pool, rows, scores[rows]))
    total = sum(rows.size for _, rows, _ in candidates)
    if total == 0:
        return []
    all_scores = np.concatenate([s for _, _, s in candidates])
    take = min(k, total)
    if take < total:
        kth_score = np.partition(all_scores, total - take)[total - take]
        threshold = kth_score - _REFINE_SLACK
    else:
        threshold = -np.inf
    q64 = query.astype(np.float64)
    refined: list[tuple[float, float, str, str]] = []
    for pool, rows, scores in candidates:
        for j in np.nonzero(scores >= threshold)[0]:
            row = rows[j]
            score = float(pool.matrix[row].astype(np.float64) @ q64)
            score = max(-1.0, min(1.0, score))
            refined.append((score, float(pool.recency[row]), pool.ids[row], pool.name))
    refined.sort(key=lambda t: (-t[0], -t[1], t[2]))
    return [RetrievalHit(id=r[2], score=r[0], source=r[3]) for r in refined[:take]]


def retrieve_trend_papers(
    profile_text: str,
    embedder: Embedder,
    paper_pool: PoolSnapshot,
    time_range: TimeRange,
    now: dt.date,
    k: int = DEFAULT_K,
) -> list[RetrievalHit]:
    """Papers in the date window nearest the profile; one embed call."""
    if not profile_text.strip():
        raise ValidationError("profile text must be non-empty")
    query = embedder.embed(profile_text)
    return retrieve_topk(query, [paper_pool], k, recency_window=epoch_window(time_range, now))


def retrieve_chat_context(
    question: str,
    embedder: Embedder,
    paper_pool: PoolSnapshot,
    thought_pool: PoolSnapshot,
    k: int = DEFAULT_K,
    include_thoughts: bool = True,
) -> list[RetrievalHit]:
    """Context for a question from papers, optionally unioned with thoughts."""
    if not question.strip():
        raise ValidationError("question must be non-empty")
    query = embedder.embed(question)
    pools = [paper_pool, thought_pool] if include_thoughts else [paper_pool]
    return retrieve_topk(query, pools, k)
