"""Searchable directory of candidate feeds, lists, and starter packs.

Read-only after ingest; the planner queries it by case-insensitive substring
match over titles and descriptions.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

CATALOG_KINDS = ("feed", "list", "starter_pack")
MIN_FEED_LIKES = 2


class CatalogError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class CatalogEntry:
    kind: str
    uri: str
    title: str
    description: str
    likes: int

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "uri": self.uri,
            "title": self.title,
            "description": self.description,
            "likes": self.likes,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "CatalogEntry":
        kind = data["kind"]
        if kind not in CATALOG_KINDS:
            raise ValueError(f"unknown catalog kind: {kind!r}")
        likes = int(data.get("likes", 0))
        if likes < 0:
            raise ValueError("likes must be >= 0")
        return cls(
            kind=kind,
            uri=data["uri"],
            title=data.get("title", ""),
            description=data.get("description", ""),
            likes=likes,
        )


@dataclass(frozen=True, slots=True)
class IngestReport:
    counts: dict[str, int]
    dropped_low_likes: int
    skipped_lines: int

    def to_json(self) -> dict[str, Any]:
        return {
            "counts": dict(self.counts),
            "dropped_low_likes": self.dropped_low_likes,
            "skipped_lines": self.skipped_lines,
        }


class Catalog:
    def __init__(self, entries: Sequence[CatalogEntry], report: IngestReport) -> None:
        self._entries = tuple(entries)
        self.report = report

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[CatalogEntry, ...]:
        return self._entries

    def search(
        self,
        query: str,
        kinds: Optional[Sequence[str]] = None,
        limit: int = 10,
    ) -> list[CatalogEntry]:
        """Entries whose title or description contains `query` case-insensitively.

        Ordered by likes descending, then title ascending; truncated to `limit`.
        """
        needle = query.strip().lower()
        if not needle:
            raise ValueError("search query must be non-empty")
        kind_filter = set(kinds) if kinds is not None else None
        hits = [
            e
            for e in self._entries
            if (kind_filter is None or e.kind in kind_filter)
            and (needle in e.title.lower() or needle in e.description.lower())
        ]
        hits.sort(key=lambda e: (-e.likes, e.title))
        return hits[:limit]


def ingest(path: str | Path) -> Catalog:
    """Load a JSON-lines catalog file.

    Feed entries with fewer than two likes are dropped (and counted);
    malformed lines are skipped with a warning; duplicate uris keep the
    later entry. Zero valid entries is a startup error.
    """
    path = Path(path)
    if not path.exists():
        raise CatalogError(f"catalog file not found: {path}")

    by_uri: dict[str, CatalogEntry] = {}
    dropped = 0
    skipped = 0
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = CatalogEntry.from_json(json.loads(line))
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            logger.warning("catalog line %d skipped: %s", lineno, exc)
            skipped += 1
            continue
        if entry.kind == "feed" and entry.likes < MIN_FEED_LIKES:
            dropped += 1
            continue
        if entry.uri in by_uri:
            logger.warning("catalog line %d: duplicate uri %s replaces earlier entry", lineno, entry.uri)
        by_uri[entry.uri] = entry

    entries = tuple(by_uri.values())
    if not entries:
        raise CatalogError(f"catalog {path} contains no valid entries")

    counts = {kind: 0 for kind in CATALOG_KINDS}
    for entry in entries:
        counts[entry.kind] += 1
    report = IngestReport(counts=counts, dropped_low_likes=dropped, skipped_lines=skipped)
    logger.info(
        "catalog ingested: %s (%d dropped for low likes, %d lines skipped)",
        counts,
        dropped,
        skipped,
    )
    return Catalog(entries, report)
