"""Shared domain types: feed configuration, posts, curation results, ranking weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Sequence

WEIGHT_SUM_TOLERANCE = 1e-9


class SourceKind(str, Enum):
    FEED = "feed"
    LIST = "list"
    STARTER_PACK = "starter_pack"
    ACCOUNT = "account"
    HASHTAG = "hashtag"
    SEARCH_QUERY = "search_query"


class SourceOrigin(str, Enum):
    PLANNER_SUGGESTED = "planner_suggested"
    USER_ADDED = "user_added"


class Polarity(str, Enum):
    INCLUDE = "include"
    LIMIT = "limit"


class Strength(str, Enum):
    STRONGLY_PREFERRED = "strongly_preferred"
    PREFERRED = "preferred"
    NEVER_SHOWN = "never_shown"
    SHOWN_LESS_OFTEN = "shown_less_often"


class Bucket(str, Enum):
    STRONGLY_PREFER = "strongly_prefer"
    PREFER = "prefer"
    UNSPECIFIED = "unspecified"
    SHOW_LESS = "show_less"
    NEVER = "never"


# Legal strength values per polarity.
STRENGTHS_FOR_POLARITY: dict[Polarity, frozenset[Strength]] = {
    Polarity.INCLUDE: frozenset({Strength.STRONGLY_PREFERRED, Strength.PREFERRED}),
    Polarity.LIMIT: frozenset({Strength.NEVER_SHOWN, Strength.SHOWN_LESS_OFTEN}),
}

# score range -> bucket; the five ranges partition 0..10 exactly.
_BUCKET_RANGES: tuple[tuple[int, int, Bucket], ...] = (
    (8, 10, Bucket.STRONGLY_PREFER),
    (5, 7, Bucket.PREFER),
    (3, 4, Bucket.UNSPECIFIED),
    (1, 2, Bucket.SHOW_LESS),
    (0, 0, Bucket.NEVER),
)


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def parse_rfc3339(value: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_rfc3339(dt: datetime) -> str:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _to_fraction(value: Any) -> Fraction:
    # str(float) gives the shortest repr, so 0.7 becomes exactly 7/10.
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True, slots=True)
class RankingWeights:
    """(relevance, popularity, recency) weight triple; stored as exact rationals."""

    w_relevance: Fraction
    w_popularity: Fraction
    w_recency: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "w_relevance", _to_fraction(self.w_relevance))
        object.__setattr__(self, "w_popularity", _to_fraction(self.w_popularity))
        object.__setattr__(self, "w_recency", _to_fraction(self.w_recency))

    @property
    def total(self) -> Fraction:
        return self.w_relevance + self.w_popularity + self.w_recency

    def is_valid(self) -> bool:
        components_ok = all(
            0 <= w <= 1 for w in (self.w_relevance, self.w_popularity, self.w_recency)
        )
        sum_ok = self.total == 1 or abs(float(self.total) - 1.0) <= WEIGHT_SUM_TOLERANCE
        return components_ok and sum_ok

    def as_floats(self) -> tuple[float, float, float]:
        """Float conversion, applied only at scoring time."""
        return (float(self.w_relevance), float(self.w_popularity), float(self.w_recency))

    def to_json(self) -> dict[str, float]:
        return {
            "w_relevance": float(self.w_relevance),
            "w_popularity": float(self.w_popularity),
            "w_recency": float(self.w_recency),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "RankingWeights":
        return cls(
            w_relevance=_to_fraction(data["w_relevance"]),
            w_popularity=_to_fraction(data["w_popularity"]),
            w_recency=_to_fraction(data["w_recency"]),
        )


PRESET_NAMES = ("focused", "fresh", "balanced", "trending")

# Defaults chosen to match each preset's stated emphasis; operators can
# override them in the service config file without a rebuild.
DEFAULT_PRESETS: dict[str, RankingWeights] = {
    "focused": RankingWeights(Fraction(7, 10), Fraction(1, 10), Fraction(2, 10)),
    "fresh": RankingWeights(Fraction(2, 10), Fraction(1, 10), Fraction(7, 10)),
    "balanced": RankingWeights(Fraction(4, 10), Fraction(3, 10), Fraction(3, 10)),
    "trending": RankingWeights(Fraction(2, 10), Fraction(7, 10), Fraction(1, 10)),
}


@dataclass(frozen=True, slots=True)
class RankingStyle:
    """Either a named preset or `custom` carrying an explicit weight triple."""

    style: str
    weights: Optional[RankingWeights] = None

    def __post_init__(self) -> None:
        if self.style not in PRESET_NAMES and self.style != "custom":
            raise ValueError(f"unknown ranking style: {self.style!r}")
        if self.style == "custom" and self.weights is None:
            raise ValueError("custom ranking style requires weights")

    @classmethod
    def preset(cls, name: str) -> "RankingStyle":
        return cls(style=name)

    @classmethod
    def custom(cls, weights: RankingWeights) -> "RankingStyle":
        return cls(style="custom", weights=weights)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"style": self.style}
        if self.weights is not None:
            out["weights"] = self.weights.to_json()
        return out

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "RankingStyle":
        weights = data.get("weights")
        return cls(
            style=data["style"],
            weights=RankingWeights.from_json(weights) if weights is not None else None,
        )


BALANCED = RankingStyle.preset("balanced")


def weights_for_style(
    style: RankingStyle, presets: Optional[Mapping[str, RankingWeights]] = None
) -> RankingWeights:
    """Resolve a ranking style to its weight triple.

    Presets come from the supplied table (service config) or the built-in
    defaults; custom weights pass through after sum-to-1 validation.
    """
    if style.style == "custom":
        assert style.weights is not None
        if not style.weights.is_valid():
            raise ValueError(
                f"custom weights must each lie in [0,1] and sum to 1, got {style.weights}"
            )
        return style.weights
    table = presets or DEFAULT_PRESETS
    weights = table[style.style]
    if not weights.is_valid():
        raise ValueError(f"configured preset {style.style!r} has invalid weights")
    return weights


def bucket_for_score(score: int) -> Bucket:
    """Map an integer 0..10 relevance score onto its preference bucket."""
    if isinstance(score, bool) or not isinstance(score, int):
        raise ValueError(f"score must be an integer, got {score!r}")
    for lo, hi, bucket in _BUCKET_RANGES:
        if lo <= score <= hi:
            return bucket
    raise ValueError(f"score out of range [0, 10]: {score}")


@dataclass(frozen=True, slots=True)
class Source:
    kind: SourceKind
    identifier: str
    display_title: str = ""
    origin: SourceOrigin = SourceOrigin.USER_ADDED

    def key(self) -> tuple[str, str]:
        """Identity for dedup purposes."""
        return (self.kind.value, self.identifier)

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "identifier": self.identifier,
            "display_title": self.display_title,
            "origin": self.origin.value,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Source":
        return cls(
            kind=SourceKind(data["kind"]),
            identifier=data["identifier"],
            display_title=data.get("display_title", ""),
            origin=SourceOrigin(data.get("origin", SourceOrigin.USER_ADDED.value)),
        )


@dataclass(frozen=True, slots=True)
class PreferencePrompt:
    prompt_id: str
    text: str
    polarity: Polarity
    strength: Strength

    def to_json(self) -> dict[str, Any]:
        return {
            "prompt_id": self.prompt_id,
            "text": self.text,
            "polarity": self.polarity.value,
            "strength": self.strength.value,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "PreferencePrompt":
        return cls(
            prompt_id=data["prompt_id"],
            text=data["text"],
            polarity=Polarity(data["polarity"]),
            strength=Strength(data["strength"]),
        )


@dataclass(frozen=True, slots=True)
class MediaRef:
    type: str
    url: str
    alt: str = ""

    def to_json(self) -> dict[str, Any]:
        return {"type": self.type, "url": self.url, "alt": self.alt}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "MediaRef":
        return cls(type=data["type"], url=data["url"], alt=data.get("alt", ""))


@dataclass(frozen=True, slots=True)
class Post:
    uri: str
    author: str
    text: str
    media: tuple[MediaRef, ...]
    created_at: datetime
    likes: int
    reposts: int
    replies: int
    fetched_via: Optional[Source] = None

    def __post_init__(self) -> None:
        for name in ("likes", "reposts", "replies"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    def to_json(self) -> dict[str, Any]:
        return {
            "uri": self.uri,
            "author": self.author,
            "text": self.text,
            "media": [m.to_json() for m in self.media],
            "created_at": format_rfc3339(self.created_at),
            "likes": self.likes,
            "reposts": self.reposts,
            "replies": self.replies,
            "fetched_via": self.fetched_via.to_json() if self.fetched_via else None,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "Post":
        fetched_via = data.get("fetched_via")
        return cls(
            uri=data["uri"],
            author=data["author"],
            text=data.get("text", ""),
            media=tuple(MediaRef.from_json(m) for m in data.get("media", [])),
            created_at=parse_rfc3339(data["created_at"]),
            likes=int(data.get("likes", 0)),
            reposts=int(data.get("reposts", 0)),
            replies=int(data.get("replies", 0)),
            fetched_via=Source.from_json(fetched_via) if fetched_via else None,
        )

    def with_source(self, source: Source) -> "Post":
        return Post(
            uri=self.uri,
            author=self.author,
            text=self.text,
            media=self.media,
            created_at=self.created_at,
            likes=self.likes,
            reposts=self.reposts,
            replies=self.replies,
            fetched_via=source,
        )


@dataclass(frozen=True, slots=True)
class CuratedPost:
    post: Post
    score: int
    bucket: Bucket
    rationale: Optional[str] = None

    def __post_init__(self) -> None:
        if bucket_for_score(self.score) is not self.bucket:
            raise ValueError(
                f"bucket {self.bucket.value!r} inconsistent with score {self.score}"
            )

    @classmethod
    def from_score(
        cls, post: Post, score: int, rationale: Optional[str] = None
    ) -> "CuratedPost":
        return cls(post=post, score=score, bucket=bucket_for_score(score), rationale=rationale)

    def to_json(self) -> dict[str, Any]:
        return {
            "post": self.post.to_json(),
            "score": self.score,
            "bucket": self.bucket.value,
            "rationale": self.rationale,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "CuratedPost":
        return cls(
            post=Post.from_json(data["post"]),
            score=int(data["score"]),
            bucket=Bucket(data["bucket"]),
            rationale=data.get("rationale"),
        )


@dataclass(frozen=True, slots=True)
class FeedConfig:
    """A user's full intentional-feed specification."""

    feed_id: str
    owner: str
    description: str
    sources: tuple[Source, ...] = ()
    include_prompts: tuple[PreferencePrompt, ...] = ()
    limit_prompts: tuple[PreferencePrompt, ...] = ()
    ranking: RankingStyle = BALANCED
    active: bool = False
    created_at: datetime = field(default_factory=utcnow)
    updated_at: datetime = field(default_factory=utcnow)

    @property
    def prompts(self) -> tuple[PreferencePrompt, ...]:
        return self.include_prompts + self.limit_prompts

    def to_json(self) -> dict[str, Any]:
        return {
            "feed_id": self.feed_id,
            "owner": self.owner,
            "description": self.description,
            "sources": [s.to_json() for s in self.sources],
            "include_prompts": [p.to_json() for p in self.include_prompts],
            "limit_prompts": [p.to_json() for p in self.limit_prompts],
            "ranking": self.ranking.to_json(),
            "active": self.active,
            "created_at": format_rfc3339(self.created_at),
            "updated_at": format_rfc3339(self.updated_at),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "FeedConfig":
        return cls(
            feed_id=data["feed_id"],
            owner=data["owner"],
            description=data["description"],
            sources=tuple(Source.from_json(s) for s in data.get("sources", [])),
            include_prompts=tuple(
                PreferencePrompt.from_json(p) for p in data.get("include_prompts", [])
            ),
            limit_prompts=tuple(
                PreferencePrompt.from_json(p) for p in data.get("limit_prompts", [])
            ),
            ranking=RankingStyle.from_json(data.get("ranking", {"style": "balanced"})),
            active=bool(data.get("active", False)),
            created_at=parse_rfc3339(data["created_at"]),
            updated_at=parse_rfc3339(data["updated_at"]),
        )


@dataclass(frozen=True, slots=True)
class Violation:
    """One config invariant violation; machine-readable code plus context."""

    code: str
    field: str
    detail: str = ""

    def to_json(self) -> dict[str, str]:
        return {"code": self.code, "field": self.field, "detail": self.detail}


def _prompt_violations(
    prompts: Sequence[PreferencePrompt], expected: Polarity, list_name: str
) -> list[Violation]:
    out: list[Violation] = []
    for i, prompt in enumerate(prompts):
        where = f"{list_name}[{i}]"
        if not prompt.text.strip():
            out.append(Violation("EMPTY_PROMPT_TEXT", where, "prompt text is empty"))
        if prompt.polarity is not expected:
            out.append(
                Violation(
                    "WRONG_POLARITY",
                    where,
                    f"polarity {prompt.polarity.value!r} in {list_name}",
                )
            )
        elif prompt.strength not in STRENGTHS_FOR_POLARITY[prompt.polarity]:
            out.append(
                Violation(
                    "ILLEGAL_STRENGTH",
                    where,
                    f"strength {prompt.strength.value!r} illegal for polarity "
                    f"{prompt.polarity.value!r}",
                )
            )
    return out


def validate_config(config: FeedConfig) -> list[Violation]:
    """Check every FeedConfig invariant; an empty result means the config is valid."""
    violations: list[Violation] = []

    if not config.description.strip():
        violations.append(Violation("EMPTY_DESCRIPTION", "description"))

    violations.extend(
        _prompt_violations(config.include_prompts, Polarity.INCLUDE, "include_prompts")
    )
    violations.extend(
        _prompt_violations(config.limit_prompts, Polarity.LIMIT, "limit_prompts")
    )

    seen_ids: set[str] = set()
    for prompt in config.prompts:
        if prompt.prompt_id in seen_ids:
            violations.append(
                Violation("DUPLICATE_PROMPT_ID", "prompts", prompt.prompt_id)
            )
        seen_ids.add(prompt.prompt_id)

    seen_sources: set[tuple[str, str]] = set()
    for i, source in enumerate(config.sources):
        where = f"sources[{i}]"
        if not source.identifier.strip():
            violations.append(Violation("EMPTY_SOURCE_IDENTIFIER", where))
        if source.kind is SourceKind.HASHTAG and source.identifier.startswith("#"):
            violations.append(
                Violation(
                    "HASHTAG_LEADING_HASH",
                    where,
                    "hashtag identifiers are stored without the leading '#'",
                )
            )
        if source.key() in seen_sources:
            violations.append(
                Violation("DUPLICATE_SOURCE", where, f"{source.kind.value}:{source.identifier}")
            )
        seen_sources.add(source.key())

    if config.ranking.style == "custom":
        assert config.ranking.weights is not None
        if not config.ranking.weights.is_valid():
            violations.append(
                Violation(
                    "WEIGHTS_INVALID",
                    "ranking.weights",
                    "weights must each lie in [0,1] and sum to 1",
                )
            )

    return violations


@dataclass(frozen=True, slots=True)
class FeedEntry:
    uri: str
    final_score: float

    def to_json(self) -> dict[str, Any]:
        return {"uri": self.uri, "final_score": self.final_score}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "FeedEntry":
        return cls(uri=data["uri"], final_score=float(data["final_score"]))


@dataclass(frozen=True, slots=True)
class MaterializedFeed:
    """Ordered, cursorable output of one pipeline run."""

    feed_id: str
    generation_id: int
    entries: tuple[FeedEntry, ...]
    generated_at: datetime
    weights_used: RankingWeights

    def __post_init__(self) -> None:
        scores = [e.final_score for e in self.entries]
        if any(a > b for a, b in zip(scores, scores[1:])):
            raise ValueError("entries must be sorted by final_score ascending")
        uris = [e.uri for e in self.entries]
        if len(set(uris)) != len(uris):
            raise ValueError("entries must not repeat a uri")

    @property
    def uris(self) -> tuple[str, ...]:
        return tuple(e.uri for e in self.entries)

    def to_json(self) -> dict[str, Any]:
        return {
            "feed_id": self.feed_id,
            "generation_id": self.generation_id,
            "entries": [e.to_json() for e in self.entries],
            "generated_at": format_rfc3339(self.generated_at),
            "weights_used": self.weights_used.to_json(),
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "MaterializedFeed":
        return cls(
            feed_id=data["feed_id"],
            generation_id=int(data["generation_id"]),
            entries=tuple(FeedEntry.from_json(e) for e in data["entries"]),
            generated_at=parse_rfc3339(data["generated_at"]),
            weights_used=RankingWeights.from_json(data["weights_used"]),
        )


def dedup_sources(sources: Iterable[Source]) -> list[Source]:
    """Drop later duplicates under (kind, identifier) equality, keeping order."""
    seen: set[tuple[str, str]] = set()
    out: list[Source] = []
    for source in sources:
        if source.key() in seen:
            continue
        seen.add(source.key())
        out.append(source)
    return out
