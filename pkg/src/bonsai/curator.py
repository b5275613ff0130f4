"""Scores candidate posts against the config's preference prompts."""

from __future__ import annotations

import hashlib
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from .lm import LmProvider, LmRequest, ProviderError
from .model import Bucket, CuratedPost, FeedConfig, Post

logger = logging.getLogger(__name__)

DEFAULT_SCORE = 3
FAILURE_RATIONALE = "evaluation_failed"
DEGRADED_FAILURE_RATIO = 0.5
CURATE_MAX_IN_FLIGHT = 4

CURATE_SYSTEM_PROMPT = (
    "You score one social media post against a user's stated feed preferences. "
    "Score on a 0-10 scale: 8-10 when an include prompt marked "
    "strongly_preferred clearly applies, 5-7 when a preferred include prompt "
    "applies, 1-2 when a shown_less_often limit prompt applies, and exactly 0 "
    "when a never_shown limit prompt applies (never_shown always dominates any "
    "include match). If no preference prompt applies, give a default score of "
    "3 or 4. When a post matches both an include and a limit prompt, weigh the "
    "stated strengths, except never_shown which is an absolute filter. "
    'Return JSON: {"include": <score greater than 0>, "score": <0-10 integer>, '
    '"rationale": <one short sentence>}.'
)


def build_curation_prompt(post: Post, config: FeedConfig) -> LmRequest:
    """Deterministic evaluation request: same post and config, same bytes."""
    payload = {
        "post": {
            "author": post.author,
            "text": post.text,
            "media": [{"type": m.type, "url": m.url, "alt": m.alt} for m in post.media],
        },
        "include_prompts": [
            {"text": p.text, "strength": p.strength.value} for p in config.include_prompts
        ],
        "limit_prompts": [
            {"text": p.text, "strength": p.strength.value} for p in config.limit_prompts
        ],
    }
    return LmRequest(task="curate", system_prompt=CURATE_SYSTEM_PROMPT, user_payload=payload)


def config_content_hash(config: FeedConfig) -> str:
    """Hash of the curation-relevant config content (the preference prompts).

    Any prompt edit changes the hash and re-scores everything; source or
    ranking edits leave cached scores valid because the evaluator never sees
    those fields.
    """
    stanza = {
        "include_prompts": [
            {"text": p.text, "strength": p.strength.value} for p in config.include_prompts
        ],
        "limit_prompts": [
            {"text": p.text, "strength": p.strength.value} for p in config.limit_prompts
        ],
    }
    blob = json.dumps(stanza, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


class CurationCache:
    """Thread-safe (post uri, config content hash) -> (score, rationale) map."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str], tuple[int, Optional[str]]] = {}

    def get(self, uri: str, config_hash: str) -> Optional[tuple[int, Optional[str]]]:
        with self._lock:
            return self._entries.get((uri, config_hash))

    def put(self, uri: str, config_hash: str, score: int, rationale: Optional[str]) -> None:
        with self._lock:
            self._entries[(uri, config_hash)] = (score, rationale)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def to_json(self) -> list[dict[str, Any]]:
        with self._lock:
            return [
                {"uri": uri, "config_hash": h, "score": score, "rationale": rationale}
                for (uri, h), (score, rationale) in self._entries.items()
            ]

    @classmethod
    def from_json(cls, data: Sequence[dict[str, Any]]) -> "CurationCache":
        cache = cls()
        for record in data:
            cache.put(
                record["uri"], record["config_hash"], int(record["score"]), record.get("rationale")
            )
        return cache


@dataclass(frozen=True, slots=True)
class CurationReport:
    bucket_counts: dict[str, int]
    failures: int
    degraded: bool
    evaluated: int = 0
    cached: int = 0

    def to_json(self) -> dict[str, Any]:
        return {
            "bucket_counts": dict(self.bucket_counts),
            "failures": self.failures,
            "degraded": self.degraded,
            "evaluated": self.evaluated,
            "cached": self.cached,
        }

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "CurationReport":
        return cls(
            bucket_counts=dict(data.get("bucket_counts", {})),
            failures=int(data.get("failures", 0)),
            degraded=bool(data.get("degraded", False)),
            evaluated=int(data.get("evaluated", 0)),
            cached=int(data.get("cached", 0)),
        )


@dataclass(frozen=True, slots=True)
class CurationResult:
    eligible: tuple[CuratedPost, ...]
    excluded: tuple[CuratedPost, ...]
    report: CurationReport


def _effective_score(content: dict[str, Any]) -> int:
    # The evaluator's include flag and a zero score both mean exclusion;
    # exclusion is the stronger signal when they disagree.
    score = int(content["score"])
    if not content["include"]:
        return 0
    return score


def curate(
    posts: Sequence[Post],
    config: FeedConfig,
    *,
    provider: LmProvider,
    cache: Optional[CurationCache] = None,
    max_in_flight: int = CURATE_MAX_IN_FLIGHT,
) -> CurationResult:
    """Evaluate each post exactly once; zero-scored posts are filtered out.

    Provider failures degrade to the unspecified default score rather than
    dropping the post; a run with more than half of its evaluations failing
    is flagged degraded.
    """
    config_hash = config_content_hash(config)
    results: list[Optional[tuple[int, Optional[str]]]] = [None] * len(posts)
    to_evaluate: list[int] = []
    cached = 0

    for i, post in enumerate(posts):
        hit = cache.get(post.uri, config_hash) if cache else None
        if hit is not None:
            results[i] = hit
            cached += 1
        else:
            to_evaluate.append(i)

    failures = 0
    if to_evaluate:
        def evaluate(index: int) -> tuple[int, int, Optional[str], bool]:
            post = posts[index]
            request = build_curation_prompt(post, config)
            try:
                response = provider.complete(request)
            except ProviderError as exc:
                logger.warning("evaluation failed for %s: %s", post.uri, exc)
                return index, DEFAULT_SCORE, FAILURE_RATIONALE, True
            content = response.content
            return index, _effective_score(content), content.get("rationale"), False

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            for index, score, rationale, failed in pool.map(evaluate, to_evaluate):
                results[index] = (score, rationale)
                if failed:
                    failures += 1
                elif cache is not None:
                    cache.put(posts[index].uri, config_hash, score, rationale)

    eligible: list[CuratedPost] = []
    excluded: list[CuratedPost] = []
    bucket_counts = {bucket.value: 0 for bucket in Bucket}
    for post, result in zip(posts, results):
        assert result is not None
        score, rationale = result
        curated = CuratedPost.from_score(post, score, rationale)
        bucket_counts[curated.bucket.value] += 1
        (excluded if score == 0 else eligible).append(curated)

    degraded = bool(to_evaluate) and failures > DEGRADED_FAILURE_RATIO * len(to_evaluate)
    report = CurationReport(
        bucket_counts=bucket_counts,
        failures=failures,
        degraded=degraded,
        evaluated=len(to_evaluate),
        cached=cached,
    )
    return CurationResult(eligible=tuple(eligible), excluded=tuple(excluded), report=report)
