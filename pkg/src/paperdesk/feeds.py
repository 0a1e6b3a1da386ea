"""Upstream paper feed clients.

Both implementations return plain dict entries with the same keys
(id, title, abstract, authors, categories, published) so the corpus
layer validates one schema regardless of source.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Iterable

import httpx

logger = logging.getLogger(__name__)


class FeedUnavailable(Exception):
    """The upstream feed could not be reached; the operation may be retried."""


class PaperFeed:
    """Query interface over a paper feed."""

    def fetch_day(self, day: dt.date) -> list[dict]:
        """All entries published on the given UTC date."""
        raise NotImplementedError

    def search_author(self, name: str) -> list[dict]:
        """Entries whose author list matches the (already normalized) name."""
        raise NotImplementedError


class FixtureFeed(PaperFeed):
    """Feed backed by local JSONL files; used in tests and fixture mode."""

    def __init__(self, paths: Iterable[str | Path] | str | Path):
        if isinstance(paths, (str, Path)):
            paths = [paths]
        self._entries: list[dict] = []
        for path in paths:
            p = Path(path)
            if not p.exists():
                raise FeedUnavailable(f"fixture file not found: {p}")
            for line in p.read_text().splitlines():
                line = line.strip()
                if not line:
                    continue
                try:
                    self._entries.append(json.loads(line))
                except json.JSONDecodeError:
                    # Malformed fixture lines surface downstream as malformed
                    # entries; keep the raw text so they are logged, not lost.
                    self._entries.append({"_malformed": line})

    def entries(self) -> list[dict]:
        return list(self._entries)

    def fetch_day(self, day: dt.date) -> list[dict]:
        iso = day.isoformat()
        return [e for e in self._entries if e.get("published") == iso or "_malformed" in e]

    def search_author(self, name: str) -> list[dict]:
        out = []
        for entry in self._entries:
            authors = entry.get("authors") or []
            if any(normalize_name(a) == name for a in authors if isinstance(a, str)):
                out.append(entry)
        return out


def normalize_name(name: str) -> str:
    """Lowercase and collapse internal whitespace."""
    return " ".join(name.split()).lower()


ARXIV_API = "http://export.arxiv.org/api/query"
_ATOM = "{http://www.w3.org/2005/Atom}"


class ArxivFeed(PaperFeed):
    """Live client for the public paper-feed HTTP API (Atom responses)."""

    def __init__(self, base_url: str = ARXIV_API, timeout: float = 20.0, page_size: int = 100):
        self._base_url = base_url
        self._timeout = timeout
        self._page_size = page_size

    def fetch_day(self, day: dt.date) -> list[dict]:
        start = day.strftime("%Y%m%d0000")
        end = day.strftime("%Y%m%d2359")
        query = f"submittedDate:[{start} TO {end}]"
        return self._paged_query(query)

    def search_author(self, name: str) -> list[dict]:
        return self._paged_query(f'au:"{name}"')

    def _paged_query(self, query: str) -> list[dict]:
        entries: list[dict] = []
        offset = 0
        while True:
            page = self._request(query, offset)
            entries.extend(page)
            if len(page) < self._page_size:
                return entries
            offset += self._page_size

    def _request(self, query: str, offset: int) -> list[dict]:
        params = {
            "search_query": query,
            "start": offset,
            "max_results": self._page_size,
            "sortBy": "submittedDate",
            "sortOrder": "descending",
        }
        try:
            resp = httpx.get(self._base_url, params=params, timeout=self._timeout)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise FeedUnavailable(f"feed request failed: {exc}") from exc
        return _parse_atom(resp.text)


def _parse_atom(text: str) -> list[dict]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise FeedUnavailable(f"feed returned unparseable XML: {exc}") from exc
    entries = []
    for node in root.findall(f"{_ATOM}entry"):
        entries.append(
            {
                "id": _text(node, "id").rsplit("/", 1)[-1],
                "title": " ".join(_text(node, "title").split()),
                "abstract": " ".join(_text(node, "summary").split()),
                "authors": [
                    _text(a, "name") for a in node.findall(f"{_ATOM}author")
                ],
                "categories": [
                    c.get("term", "") for c in node.findall(f"{_ATOM}category")
                ],
                "published": _text(node, "published")[:10],
            }
        )
    return entries


def _text(node: ET.Element, tag: str) -> str:
    child = node.find(f"{_ATOM}{tag}")
    return (child.text or "").strip() if child is not None else ""
