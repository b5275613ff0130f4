"""Candidate post retrieval: 96-hour backfill and incremental refresh windows."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from .model import FeedConfig, Post, Source, SourceKind

logger = logging.getLogger(__name__)

INITIAL_WINDOW_HOURS = 96
PER_SOURCE_CAP = 100
FETCH_MAX_IN_FLIGHT = 4
PER_SOURCE_TIMEOUT_S = 10.0


class AdapterError(Exception):
    pass


class SourcingFailed(Exception):
    """Every configured source failed or was unsupported."""

    def __init__(self, report: "FetchReport") -> None:
        super().__init__("SOURCING_FAILED: no source could be fetched")
        self.report = report


@dataclass(frozen=True, slots=True)
class FetchWindow:
    since: datetime
    until: datetime
    per_source_cap: int = PER_SOURCE_CAP

    def __post_init__(self) -> None:
        if self.since >= self.until:
            raise ValueError("window requires since < until")
        if self.per_source_cap < 1:
            raise ValueError("per_source_cap must be >= 1")


class PlatformAdapter:
    """Platform access used by the sourcer; implementations declare capabilities.

    fetch() may over-return around the window edges; the sourcer enforces the
    exact bounds. Returned posts must have all engagement counters populated
    (missing counters default to 0, flagged by the adapter).
    """

    def supports(self, kind: SourceKind) -> bool:
        raise NotImplementedError

    def fetch(self, source: Source, window: FetchWindow) -> list[Post]:
        raise NotImplementedError

    def verify_credentials(self, handle: str, app_password: str) -> bool:
        raise NotImplementedError

    def hydrate(self, uris: Sequence[str]) -> list[Post]:
        """Resolve post bodies for known uris; unknown uris are skipped."""
        raise NotImplementedError


@dataclass(frozen=True, slots=True)
class SourceFetch:
    kind: str
    identifier: str
    status: str  # ok | failed | unsupported
    fetched: int = 0
    error: str = ""

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "identifier": self.identifier,
            "status": self.status,
            "fetched": self.fetched,
            "error": self.error,
        }


@dataclass(frozen=True, slots=True)
class FetchReport:
    sources: tuple[SourceFetch, ...]
    total_fetched: int

    @property
    def ok_count(self) -> int:
        return sum(1 for s in self.sources if s.status == "ok")

    @property
    def failed_count(self) -> int:
        return sum(1 for s in self.sources if s.status != "ok")

    def to_json(self) -> dict[str, Any]:
        return {
            "sources": [s.to_json() for s in self.sources],
            "total_fetched": self.total_fetched,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "FetchReport":
        return cls(
            sources=tuple(SourceFetch(**s) for s in data.get("sources", [])),
            total_fetched=int(data.get("total_fetched", 0)),
        )


def _in_window(post: Post, window: FetchWindow, closed_since: bool) -> bool:
    if post.created_at > window.until:
        return False
    if closed_since:
        return post.created_at >= window.since
    return post.created_at > window.since


def _fetch_sources(
    config: FeedConfig,
    window: FetchWindow,
    *,
    adapter: PlatformAdapter,
    closed_since: bool,
    skip_uris: Optional[set[str]] = None,
    max_in_flight: int = FETCH_MAX_IN_FLIGHT,
    per_source_timeout_s: float = PER_SOURCE_TIMEOUT_S,
) -> tuple[list[Post], FetchReport]:
    """Fetch every source concurrently, then merge deterministically.

    Merge order is (config source order, then uri); dedup keeps the first
    occurrence so attribution follows the earliest source in config order.
    """
    skip_uris = skip_uris or set()
    results: dict[int, list[Post] | Exception] = {}
    fetchable: list[tuple[int, Source]] = []
    outcomes: list[Optional[SourceFetch]] = [None] * len(config.sources)

    for i, source in enumerate(config.sources):
        if adapter.supports(source.kind):
            fetchable.append((i, source))
        else:
            outcomes[i] = SourceFetch(
                source.kind.value, source.identifier, "unsupported", error="capability not supported"
            )

    if fetchable:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            futures = {
                i: pool.submit(adapter.fetch, source, window) for i, source in fetchable
            }
            for i, future in futures.items():
                try:
                    results[i] = list(future.result(timeout=per_source_timeout_s))
                except FutureTimeout:
                    results[i] = AdapterError(f"fetch timed out after {per_source_timeout_s}s")
                except Exception as exc:  # noqa: BLE001 - per-source isolation
                    results[i] = exc

    merged: list[Post] = []
    seen: set[str] = set(skip_uris)
    for i, source in enumerate(config.sources):
        if outcomes[i] is not None:
            continue
        result = results[i]
        if isinstance(result, Exception):
            logger.warning("source %s failed: %s", source.identifier, result)
            outcomes[i] = SourceFetch(
                source.kind.value, source.identifier, "failed", error=str(result)
            )
            continue

        kept: list[Post] = []
        for post in result:
            if _in_window(post, window, closed_since):
                kept.append(post)
            elif not closed_since and post.created_at <= window.since:
                logger.warning(
                    "source %s returned post %s outside the refresh window; dropped",
                    source.identifier,
                    post.uri,
                )
        # newest first, uri breaking timestamp ties, then cap
        kept.sort(key=lambda p: (p.created_at, p.uri), reverse=True)
        kept = kept[: window.per_source_cap]
        kept.sort(key=lambda p: p.uri)

        count = 0
        for post in kept:
            if post.uri in seen:
                continue
            seen.add(post.uri)
            merged.append(post.with_source(source))
            count += 1
        outcomes[i] = SourceFetch(source.kind.value, source.identifier, "ok", fetched=count)

    report = FetchReport(
        sources=tuple(o for o in outcomes if o is not None),
        total_fetched=len(merged),
    )
    if report.ok_count == 0:
        raise SourcingFailed(report)
    return merged, report


def initial_fetch(
    config: FeedConfig,
    now: datetime,
    *,
    adapter: PlatformAdapter,
    window_hours: int = INITIAL_WINDOW_HOURS,
    per_source_cap: int = PER_SOURCE_CAP,
    max_in_flight: int = FETCH_MAX_IN_FLIGHT,
) -> tuple[list[Post], FetchReport]:
    """Backfill: newest `per_source_cap` posts per source within the last
    `window_hours` hours, the lower bound included."""
    window = FetchWindow(
        since=now - timedelta(hours=window_hours), until=now, per_source_cap=per_source_cap
    )
    return _fetch_sources(
        config, window, adapter=adapter, closed_since=True, max_in_flight=max_in_flight
    )


def incremental_fetch(
    config: FeedConfig,
    last_update: datetime,
    now: datetime,
    *,
    adapter: PlatformAdapter,
    cached_uris: Iterable[str] = (),
    per_source_cap: int = PER_SOURCE_CAP,
    max_in_flight: int = FETCH_MAX_IN_FLIGHT,
) -> tuple[list[Post], FetchReport]:
    """Refresh: posts strictly newer than `last_update`, minus already-cached uris."""
    if last_update >= now:
        raise ValueError("incremental fetch requires last_update < now")
    window = FetchWindow(since=last_update, until=now, per_source_cap=per_source_cap)
    return _fetch_sources(
        config,
        window,
        adapter=adapter,
        closed_since=False,
        skip_uris=set(cached_uris),
        max_in_flight=max_in_flight,
    )


class FixtureAdapter(PlatformAdapter):
    """Adapter over a JSON-lines corpus keyed by source identifier.

    The sole adapter exercised in CI; also provides the offline credential
    pair and post hydration the service needs.
    """

    def __init__(
        self,
        corpus_path: str | Path,
        *,
        test_handle: str = "tester.example.com",
        test_app_password: str = "test-app-password",
    ) -> None:
        self.by_source: dict[str, list[Post]] = {}
        self.by_uri: dict[str, Post] = {}
        self.test_handle = test_handle
        self.test_app_password = test_app_password
        path = Path(corpus_path)
        if not path.exists():
            raise AdapterError(f"corpus file not found: {path}")
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                post = Post.from_json(record["post"])
                identifier = record["source_identifier"]
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise AdapterError(f"corpus line {lineno} malformed: {exc}") from exc
            if not {"likes", "reposts", "replies"} <= set(record["post"]):
                logger.warning("corpus line %d: missing engagement counters default to 0", lineno)
            self.by_source.setdefault(identifier, []).append(post)
            self.by_uri[post.uri] = post

    def supports(self, kind: SourceKind) -> bool:
        return True

    def fetch(self, source: Source, window: FetchWindow) -> list[Post]:
        # Lower bound is deliberately left to the sourcer so the window
        # contract is exercised.
        posts = [p for p in self.by_source.get(source.identifier, []) if p.created_at <= window.until]
        posts.sort(key=lambda p: (p.created_at, p.uri), reverse=True)
        return posts

    def verify_credentials(self, handle: str, app_password: str) -> bool:
        return handle == self.test_handle and app_password == self.test_app_password

    def hydrate(self, uris: Sequence[str]) -> list[Post]:
        return [self.by_uri[u] for u in uris if u in self.by_uri]
