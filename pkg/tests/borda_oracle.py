"""Independent brute-force oracle for the weighted Borda feed ranking.

Deliberately naive: materializes all three full rankings as explicit lists
and sorts weighted sums, without sharing any code with bonsai.ranker.
Tie rule (shared contract): newer created_at first, then uri ascending.
"""

from __future__ import annotations

from bonsai.model import CuratedPost, RankingWeights


def _tiebreak(post):
    # created_at descending, then uri ascending
    return (-post.created_at.timestamp(), post.uri)


def oracle_rank(
    candidates_all: list[CuratedPost],
    eligible: list[CuratedPost],
    weights: RankingWeights,
) -> list[tuple[str, float]]:
    w_r, w_p, w_c = weights.as_floats()

    relevance_list = sorted(eligible, key=lambda cp: (-cp.score, *_tiebreak(cp.post)))
    relevance_rank = {cp.post.uri: i + 1 for i, cp in enumerate(relevance_list)}

    recency_list = sorted(candidates_all, key=lambda cp: _tiebreak(cp.post))
    recency_rank = {cp.post.uri: i + 1 for i, cp in enumerate(recency_list)}

    def engagement(cp: CuratedPost) -> int:
        return cp.post.likes + 3 * cp.post.reposts + 2 * cp.post.replies

    engagement_list = sorted(
        candidates_all, key=lambda cp: (-engagement(cp), *_tiebreak(cp.post))
    )
    engagement_rank = {cp.post.uri: i + 1 for i, cp in enumerate(engagement_list)}

    scored = []
    for cp in eligible:
        uri = cp.post.uri
        borda = (
            w_r * relevance_rank[uri]
            + w_p * engagement_rank[uri]
            + w_c * recency_rank[uri]
        )
        scored.append((cp, borda))

    scored.sort(key=lambda pair: (pair[1], *_tiebreak(pair[0].post)))
    return [(cp.post.uri, borda) for cp, borda in scored]
