"""Weighted Borda Count ordering over relevance, recency, and engagement rankings."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from typing import Any, Hashable, Iterable, Mapping, Optional, Sequence

from .model import CuratedPost, Post, RankingWeights

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_US = timedelta(microseconds=1)


@dataclass(frozen=True, slots=True)
class RankTriple:
    """Per-post positional ranks (1 = best) and the resulting weighted score."""

    r_relevance: int
    r_recency: int
    r_engagement: int
    borda_score: float

    def to_json(self) -> dict[str, Any]:
        return {
            "r_relevance": self.r_relevance,
            "r_recency": self.r_recency,
            "r_engagement": self.r_engagement,
            "borda_score": self.borda_score,
        }


def engagement_score(post: Post) -> int:
    """Weighted engagement: likes + 3*reposts + 2*replies."""
    return post.likes + 3 * post.reposts + 2 * post.replies


def post_tiebreak(post: Post) -> tuple[int, str]:
    """Global tie-break key: newer created_at first, then uri ascending.

    Uses integer microseconds so ordering never depends on float rounding.
    """
    return (-((post.created_at.astimezone(timezone.utc) - _EPOCH) // _US), post.uri)


def assign_ranks(
    items: Iterable[tuple[Hashable, Any]],
    *,
    descending: bool,
    tiebreak: Optional[Mapping[Hashable, tuple]] = None,
) -> dict[Hashable, int]:
    """Positional ranks 1..n after a stable sort by value.

    Equal-value groups are ordered by the supplied tie-break tuples (key
    itself when absent); ranks are strictly positional, never shared.
    """
    pairs = list(items)
    if tiebreak is None:
        pairs.sort(key=lambda kv: (kv[0],))
    else:
        pairs.sort(key=lambda kv: tiebreak[kv[0]])
    # Python's sort is stable, so ties keep the tie-break order just applied.
    pairs.sort(key=lambda kv: kv[1], reverse=descending)
    return {key: i + 1 for i, (key, _) in enumerate(pairs)}


def _check_inputs(
    candidates_all: Sequence[CuratedPost],
    eligible: Sequence[CuratedPost],
    weights: RankingWeights,
) -> None:
    if not weights.is_valid():
        raise ValueError(f"weights must each lie in [0,1] and sum to 1, got {weights}")
    all_uris = [cp.post.uri for cp in candidates_all]
    if len(set(all_uris)) != len(all_uris):
        raise ValueError("candidate set contains duplicate uris")
    missing = {cp.post.uri for cp in eligible} - set(all_uris)
    if missing:
        raise ValueError(f"eligible posts missing from candidate set: {sorted(missing)}")


def rank_feed_detailed(
    candidates_all: Sequence[CuratedPost],
    eligible: Sequence[CuratedPost],
    weights: RankingWeights,
) -> list[tuple[str, RankTriple]]:
    """Rank eligible posts; returns (uri, rank triple) in final feed order.

    Relevance ranks cover eligible posts only (score descending); recency and
    engagement ranks cover the full candidate set, excluded posts included.
    Output is sorted by borda score ascending with the global tie-break.
    """
    _check_inputs(candidates_all, eligible, weights)
    if not eligible:
        return []

    ties = {cp.post.uri: post_tiebreak(cp.post) for cp in candidates_all}

    relevance_rank = assign_ranks(
        ((cp.post.uri, cp.score) for cp in eligible), descending=True, tiebreak=ties
    )
    recency_rank = assign_ranks(
        ((cp.post.uri, cp.post.created_at) for cp in candidates_all),
        descending=True,
        tiebreak=ties,
    )
    engagement_rank = assign_ranks(
        ((cp.post.uri, engagement_score(cp.post)) for cp in candidates_all),
        descending=True,
        tiebreak=ties,
    )

    w_r, w_p, w_c = weights.as_floats()
    triples: list[tuple[str, RankTriple]] = []
    for cp in eligible:
        uri = cp.post.uri
        r_r = relevance_rank[uri]
        r_c = recency_rank[uri]
        r_e = engagement_rank[uri]
        borda = w_r * r_r + w_p * r_e + w_c * r_c
        triples.append((uri, RankTriple(r_r, r_c, r_e, borda)))

    triples.sort(key=lambda pair: (pair[1].borda_score, *ties[pair[0]]))
    return triples


def rank_feed(
    candidates_all: Sequence[CuratedPost],
    eligible: Sequence[CuratedPost],
    weights: RankingWeights,
) -> list[tuple[str, float]]:
    """Final feed order: (post uri, borda score), best (lowest score) first."""
    return [(uri, t.borda_score) for uri, t in rank_feed_detailed(candidates_all, eligible, weights)]
