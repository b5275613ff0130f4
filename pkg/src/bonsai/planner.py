"""Turns a natural-language feed description into an editable draft config."""

from __future__ import annotations

import hashlib
import logging
from datetime import datetime
from typing import Any, Mapping, Optional

from .catalog import Catalog
from .lm import LmProvider, LmRequest, ProviderError
from .model import (
    BALANCED,
    STRENGTHS_FOR_POLARITY,
    FeedConfig,
    Polarity,
    PreferencePrompt,
    Source,
    SourceKind,
    SourceOrigin,
    Strength,
    dedup_sources,
    utcnow,
    validate_config,
)

logger = logging.getLogger(__name__)

MAX_SUGGESTED_SOURCES = 12
MAX_PROMPTS_PER_POLARITY = 8
CATALOG_MATCHES_PER_TERM = 3

PLAN_SYSTEM_PROMPT = (
    "You help people design a personalized social feed. Given their feed "
    "description, propose: short search_terms for finding matching feeds and "
    "content, relevant hashtags (no leading #), notable accounts, and the "
    "include/limit preference prompts implied by the description. Include "
    "prompts take strength strongly_preferred or preferred; limit prompts "
    "take never_shown or shown_less_often. Return JSON with keys "
    "search_terms, hashtags, accounts, include_prompts, limit_prompts."
)

SUGGEST_SYSTEM_PROMPT = (
    "You help people expand the source list of a personalized social feed. "
    "Given their current include prompts and existing sources, suggest new "
    "sources (kind, identifier, display_title) that are not already present. "
    "Return JSON with key suggestions."
)

_DEFAULT_STRENGTH = {
    Polarity.INCLUDE: Strength.PREFERRED,
    Polarity.LIMIT: Strength.SHOWN_LESS_OFTEN,
}


class PlanFailed(Exception):
    """Planning could not complete; carries the provider error code."""

    def __init__(self, cause: ProviderError) -> None:
        super().__init__(f"PLAN_FAILED: {cause}")
        self.cause = cause
        self.code = cause.code


def _draft_feed_id(owner: str, description: str) -> str:
    digest = hashlib.sha256(f"{owner}\n{description}".encode()).hexdigest()
    return f"draft-{digest[:12]}"


def _coerce_prompt(
    entry: Mapping[str, Any], polarity: Polarity, prompt_id: str
) -> Optional[PreferencePrompt]:
    text = str(entry.get("text", "")).strip()
    if not text:
        return None
    try:
        strength = Strength(entry.get("strength", ""))
    except ValueError:
        strength = _DEFAULT_STRENGTH[polarity]
    if strength not in STRENGTHS_FOR_POLARITY[polarity]:
        logger.warning(
            "planner coerced illegal strength %r for %s prompt %r",
            strength.value,
            polarity.value,
            text,
        )
        strength = _DEFAULT_STRENGTH[polarity]
    return PreferencePrompt(prompt_id=prompt_id, text=text, polarity=polarity, strength=strength)


def plan(
    description: str,
    owner: str,
    *,
    provider: LmProvider,
    catalog: Catalog,
    now: Optional[datetime] = None,
) -> FeedConfig:
    """Draft an unsaved FeedConfig from a natural-language description.

    Catalog lookups run on our side using the model's search terms, so the
    query path stays testable independent of any provider.
    """
    if not description.strip():
        raise ValueError("description must be non-empty")

    request = LmRequest(
        task="plan",
        system_prompt=PLAN_SYSTEM_PROMPT,
        user_payload={"description": description},
    )
    try:
        response = provider.complete(request)
    except ProviderError as exc:
        raise PlanFailed(exc) from exc
    content = response.content

    sources: list[Source] = []
    for term in content["search_terms"]:
        term = term.strip()
        if not term:
            continue
        for entry in catalog.search(term, limit=CATALOG_MATCHES_PER_TERM):
            sources.append(
                Source(
                    kind=SourceKind(entry.kind),
                    identifier=entry.uri,
                    display_title=entry.title,
                    origin=SourceOrigin.PLANNER_SUGGESTED,
                )
            )
    for term in content["search_terms"]:
        term = term.strip()
        if term:
            sources.append(
                Source(
                    kind=SourceKind.SEARCH_QUERY,
                    identifier=term,
                    display_title=term,
                    origin=SourceOrigin.PLANNER_SUGGESTED,
                )
            )
    for tag in content["hashtags"]:
        tag = tag.strip().lstrip("#")
        if tag:
            sources.append(
                Source(
                    kind=SourceKind.HASHTAG,
                    identifier=tag,
                    display_title=f"#{tag}",
                    origin=SourceOrigin.PLANNER_SUGGESTED,
                )
            )
    for account in content["accounts"]:
        account = account.strip()
        if account:
            sources.append(
                Source(
                    kind=SourceKind.ACCOUNT,
                    identifier=account,
                    display_title=account,
                    origin=SourceOrigin.PLANNER_SUGGESTED,
                )
            )
    sources = dedup_sources(sources)[:MAX_SUGGESTED_SOURCES]

    include_prompts: list[PreferencePrompt] = []
    for entry in content["include_prompts"][:MAX_PROMPTS_PER_POLARITY]:
        prompt = _coerce_prompt(entry, Polarity.INCLUDE, f"p{len(include_prompts) + 1}")
        if prompt:
            include_prompts.append(prompt)
    limit_prompts: list[PreferencePrompt] = []
    for entry in content["limit_prompts"][:MAX_PROMPTS_PER_POLARITY]:
        prompt = _coerce_prompt(
            entry, Polarity.LIMIT, f"p{len(include_prompts) + len(limit_prompts) + 1}"
        )
        if prompt:
            limit_prompts.append(prompt)

    stamp = now or utcnow()
    draft = FeedConfig(
        feed_id=_draft_feed_id(owner, description),
        owner=owner,
        description=description,
        sources=tuple(sources),
        include_prompts=tuple(include_prompts),
        limit_prompts=tuple(limit_prompts),
        ranking=BALANCED,
        active=False,
        created_at=stamp,
        updated_at=stamp,
    )
    violations = validate_config(draft)
    if violations:  # planner contract: drafts always validate
        raise AssertionError(f"planner produced an invalid draft: {violations}")
    return draft


def suggest_additional_sources(
    config: FeedConfig, *, provider: LmProvider
) -> list[Source]:
    """Best-effort extra source suggestions; never blocks feed generation."""
    request = LmRequest(
        task="suggest_sources",
        system_prompt=SUGGEST_SYSTEM_PROMPT,
        user_payload={
            "include_prompts": [
                {"text": p.text, "strength": p.strength.value} for p in config.include_prompts
            ],
            "existing_sources": [
                {"kind": s.kind.value, "identifier": s.identifier} for s in config.sources
            ],
        },
    )
    try:
        response = provider.complete(request)
    except ProviderError as exc:
        logger.warning("source suggestion skipped: %s", exc)
        return []

    existing = {s.key() for s in config.sources}
    suggestions: list[Source] = []
    for entry in response.content["suggestions"]:
        identifier = entry["identifier"].strip()
        if not identifier:
            continue
        kind = SourceKind(entry["kind"])
        if kind is SourceKind.HASHTAG:
            identifier = identifier.lstrip("#")
        source = Source(
            kind=kind,
            identifier=identifier,
            display_title=entry.get("display_title", "") or identifier,
            origin=SourceOrigin.PLANNER_SUGGESTED,
        )
        if source.key() in existing:
            continue
        suggestions.append(source)
    return dedup_sources(suggestions)
