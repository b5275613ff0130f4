"""Pluggable language-model layer: schema-validated chat completions plus a
deterministic rule-table mock that backs the whole offline test surface."""

from __future__ import annotations

import json
import logging
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Sequence

import httpx
import jsonschema

logger = logging.getLogger(__name__)

TASKS = ("plan", "suggest_sources", "curate")

DEFAULT_TIMEOUT_S = 30.0
RETRY_BASE_DELAY_S = 0.5
MAX_RETRIES = 3
DEFAULT_MAX_IN_FLIGHT = 4

_SOURCE_KINDS = ["feed", "list", "starter_pack", "account", "hashtag", "search_query"]

_INCLUDE_PROMPT_ITEM = {
    "type": "object",
    "required": ["text", "strength"],
    "properties": {
        "text": {"type": "string"},
        "strength": {"type": "string", "enum": ["strongly_preferred", "preferred"]},
    },
}
_LIMIT_PROMPT_ITEM = {
    "type": "object",
    "required": ["text", "strength"],
    "properties": {
        "text": {"type": "string"},
        "strength": {"type": "string", "enum": ["never_shown", "shown_less_often"]},
    },
}

# Declared output schema per task; nothing that fails these ever escapes
# this module.
TASK_SCHEMAS: dict[str, dict[str, Any]] = {
    "plan": {
        "type": "object",
        "required": ["search_terms", "hashtags", "accounts", "include_prompts", "limit_prompts"],
        "properties": {
            "search_terms": {"type": "array", "items": {"type": "string"}},
            "hashtags": {"type": "array", "items": {"type": "string"}},
            "accounts": {"type": "array", "items": {"type": "string"}},
            "include_prompts": {"type": "array", "items": _INCLUDE_PROMPT_ITEM},
            "limit_prompts": {"type": "array", "items": _LIMIT_PROMPT_ITEM},
        },
    },
    "suggest_sources": {
        "type": "object",
        "required": ["suggestions"],
        "properties": {
            "suggestions": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["kind", "identifier"],
                    "properties": {
                        "kind": {"type": "string", "enum": _SOURCE_KINDS},
                        "identifier": {"type": "string"},
                        "display_title": {"type": "string"},
                    },
                },
            }
        },
    },
    "curate": {
        "type": "object",
        "required": ["include", "score"],
        "properties": {
            "include": {"type": "boolean"},
            "score": {"type": "integer", "minimum": 0, "maximum": 10},
            "rationale": {"type": "string"},
        },
    },
}


class ProviderError(Exception):
    """Base for typed provider failures; `code` is stable for API surfacing."""

    code = "PROVIDER_ERROR"


class ProviderUnreachable(ProviderError):
    code = "PROVIDER_UNREACHABLE"


class ProviderTimeout(ProviderError):
    code = "TIMEOUT"


class SchemaViolation(ProviderError):
    code = "SCHEMA_VIOLATION"


@dataclass(frozen=True, slots=True)
class LmRequest:
    task: str
    system_prompt: str
    user_payload: Mapping[str, Any]
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task: {self.task!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must lie in [0, 2], got {self.temperature}")

    def payload_bytes(self) -> bytes:
        """Canonical serialization; identical requests yield identical bytes."""
        return json.dumps(self.user_payload, sort_keys=True, separators=(",", ":")).encode()


@dataclass(frozen=True, slots=True)
class LmResponse:
    content: dict[str, Any]
    provider_meta: dict[str, Any] = field(default_factory=dict)


def validate_task_content(task: str, content: Any) -> None:
    """Raise SchemaViolation unless `content` matches the task's schema."""
    try:
        jsonschema.validate(content, TASK_SCHEMAS[task])
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"{task} response failed validation: {exc.message}") from exc


class LmProvider:
    """Shared complete() front door: precondition checks plus an in-flight bound."""

    def __init__(self, max_in_flight: int = DEFAULT_MAX_IN_FLIGHT) -> None:
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def complete(self, request: LmRequest) -> LmResponse:
        try:
            request.payload_bytes()
        except (TypeError, ValueError) as exc:
            raise SchemaViolation(f"request payload is not valid JSON: {exc}") from exc
        with self._gate:
            response = self._complete(request)
        validate_task_content(request.task, response.content)
        return response

    def _complete(self, request: LmRequest) -> LmResponse:
        raise NotImplementedError


@dataclass(frozen=True, slots=True)
class CurateRule:
    keyword: str
    score: int


@dataclass(frozen=True, slots=True)
class PlanRule:
    keyword: str
    sources: tuple[Mapping[str, Any], ...]


@dataclass(frozen=True, slots=True)
class MockRules:
    curate: tuple[CurateRule, ...] = ()
    plan: tuple[PlanRule, ...] = ()


def _dedupe_last_wins(pairs: Sequence[tuple[str, Any]], what: str) -> list[Any]:
    by_keyword: dict[str, Any] = {}
    for keyword, rule in pairs:
        if keyword in by_keyword:
            logger.warning("duplicate %s rule for keyword %r: keeping the later entry", what, keyword)
        by_keyword[keyword] = rule
    return list(by_keyword.values())


def mock_rules_load(path: str | Path) -> MockRules:
    """Load the mock's keyword rule table; duplicate keywords are last-write-wins."""
    raw = Path(path).read_text()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"mock rules file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError(f"mock rules file {path} must hold a JSON object")

    curate_pairs = []
    for entry in data.get("curate", []):
        score = int(entry["score"])
        if not 0 <= score <= 10:
            raise ValueError(f"curate rule score out of range: {entry}")
        curate_pairs.append((entry["keyword"], CurateRule(entry["keyword"], score)))
    plan_pairs = []
    for entry in data.get("plan", []):
        plan_pairs.append(
            (entry["keyword"], PlanRule(entry["keyword"], tuple(entry.get("sources", []))))
        )

    return MockRules(
        curate=tuple(_dedupe_last_wins(curate_pairs, "curate")),
        plan=tuple(_dedupe_last_wins(plan_pairs, "plan")),
    )


_STOP_WORDS = frozenset(
    "a an and are as at be but by for from i in is it my of on or our so that the "
    "this to was we what which with you your".split()
)

_LIMIT_CUES = (
    ("never ", "never_shown"),
    ("no ", "never_shown"),
    ("without ", "never_shown"),
    ("avoid ", "never_shown"),
    ("less ", "shown_less_often"),
    ("fewer ", "shown_less_often"),
    ("limit ", "shown_less_often"),
)


def _split_clauses(description: str) -> list[str]:
    return [c.strip() for c in re.split(r"[,;.\n]+", description) if c.strip()]


def _derive_prompts(description: str) -> tuple[list[dict[str, str]], list[dict[str, str]]]:
    """Clause heuristic: negation-cue clauses become limit prompts, the rest include."""
    include: list[dict[str, str]] = []
    limit: list[dict[str, str]] = []
    for clause in _split_clauses(description):
        lowered = clause.lower()
        for cue, strength in _LIMIT_CUES:
            if lowered.startswith(cue):
                limit.append({"text": clause[len(cue):].strip() or clause, "strength": strength})
                break
        else:
            strength = "strongly_preferred" if not include else "preferred"
            include.append({"text": clause, "strength": strength})
    if not include and not limit:
        include.append({"text": description.strip(), "strength": "strongly_preferred"})
    return include, limit


def _content_words(text: str) -> list[str]:
    return [w for w in re.findall(r"[\w'#@-]+", text.lower()) if w not in _STOP_WORDS]


class MockProvider(LmProvider):
    """Deterministic provider: a pure function of (request, rule table).

    Curate scoring matches rule keywords case-insensitively against the
    post's text plus media alt text; a matched never rule (score 0) takes
    absolute priority, otherwise the highest matched score wins, and posts
    matching nothing score 3.
    """

    def __init__(self, rules: MockRules | None = None, max_in_flight: int = DEFAULT_MAX_IN_FLIGHT) -> None:
        super().__init__(max_in_flight)
        self.rules = rules or MockRules()

    def _complete(self, request: LmRequest) -> LmResponse:
        payload = json.loads(request.payload_bytes())
        if request.task == "curate":
            content = self._curate(payload)
        elif request.task == "plan":
            content = self._plan(payload)
        else:
            content = self._suggest_sources(payload)
        return LmResponse(content=content, provider_meta={"provider": "mock"})

    def _curate(self, payload: Mapping[str, Any]) -> dict[str, Any]:
        post = payload.get("post", {})
        haystack_parts = [post.get("text", "")]
        haystack_parts.extend(m.get("alt", "") for m in post.get("media", []))
        haystack = " ".join(haystack_parts).lower()

        matched = [r for r in self.rules.curate if r.keyword.lower() in haystack]
        if any(r.score == 0 for r in matched):
            score = 0
            keywords = [r.keyword for r in matched if r.score == 0]
        elif matched:
            score = max(r.score for r in matched)
            keywords = [r.keyword for r in matched if r.score == score]
        else:
            score = 3
            keywords = []

        rationale = (
            f"matched rule keyword(s): {', '.join(sorted(keywords))}"
            if keywords
            else "no rule matched; defaulting to unspecified"
        )
        return {"include": score > 0, "score": score, "rationale": rationale}

    def _matched_plan_rules(self, text: str) -> list[PlanRule]:
        lowered = text.lower()
        return [r for r in self.rules.plan if r.keyword.lower() in lowered]

    def _plan(self, payload: Mapping[str, Any]) -> dict[str, Any]:
        description = payload.get("description", "")
        search_terms: list[str] = []
        hashtags: list[str] = []
        accounts: list[str] = []
        for rule in self._matched_plan_rules(description):
            for source in rule.sources:
                kind = source.get("kind")
                identifier = source.get("identifier", "")
                if kind == "search_query":
                    search_terms.append(identifier)
                elif kind == "hashtag":
                    hashtags.append(identifier.lstrip("#"))
                elif kind == "account":
                    accounts.append(identifier)
        if not search_terms and not hashtags and not accounts:
            words = _content_words(description)
            search_terms.append(" ".join(words) if words else description.strip())

        include, limit = _derive_prompts(description)
        return {
            "search_terms": search_terms,
            "hashtags": hashtags,
            "accounts": accounts,
            "include_prompts": include,
            "limit_prompts": limit,
        }

    def _suggest_sources(self, payload: Mapping[str, Any]) -> dict[str, Any]:
        prompt_texts = [p.get("text", "") for p in payload.get("include_prompts", [])]
        suggestions: list[dict[str, Any]] = []
        for text in prompt_texts:
            for rule in self._matched_plan_rules(text):
                for source in rule.sources:
                    entry = {
                        "kind": source.get("kind", "search_query"),
                        "identifier": source.get("identifier", ""),
                        "display_title": source.get("display_title", ""),
                    }
                    if entry not in suggestions:
                        suggestions.append(entry)
        for text in prompt_texts:
            entry = {"kind": "search_query", "identifier": text.strip(), "display_title": ""}
            if entry["identifier"] and entry not in suggestions:
                suggestions.append(entry)
        return {"suggestions": suggestions}


class HttpChatProvider(LmProvider):
    """Remote chat-completions client with retry, timeout, and one repair re-prompt.

    Transient failures (connection errors, HTTP 429/5xx) retry up to
    MAX_RETRIES times with exponential backoff; timeouts surface immediately
    as ProviderTimeout rather than multiplying worst-case latency.
    """

    RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        client: Optional[httpx.Client] = None,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        super().__init__(max_in_flight)
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key = api_key
        self.timeout_s = timeout_s
        self._client = client or httpx.Client(timeout=timeout_s)
        self._sleep = sleeper

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, body: dict[str, Any]) -> dict[str, Any]:
        last_error: Optional[Exception] = None
        for attempt in range(MAX_RETRIES + 1):
            if attempt:
                self._sleep(RETRY_BASE_DELAY_S * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.url, json=body, headers=self._headers())
            except httpx.TimeoutException as exc:
                raise ProviderTimeout(f"provider timed out after {self.timeout_s}s") from exc
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in self.RETRYABLE_STATUS:
                last_error = ProviderUnreachable(
                    f"provider returned HTTP {response.status_code}"
                )
                continue
            if response.status_code >= 400:
                raise ProviderUnreachable(
                    f"provider returned HTTP {response.status_code}: {response.text[:200]}"
                )
            return response.json()
        raise ProviderUnreachable(f"provider unreachable after retries: {last_error}")

    def _extract_content(self, data: Mapping[str, Any]) -> Any:
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise SchemaViolation(f"malformed completion envelope: {exc}") from exc
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"completion is not JSON: {exc}") from exc

    def _complete(self, request: LmRequest) -> LmResponse:
        system = (
            request.system_prompt
            + "\nRespond with a single JSON object and nothing else."
        )
        messages = [
            {"role": "system", "content": system},
            {"role": "user", "content": request.payload_bytes().decode()},
        ]
        body = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "response_format": {"type": "json_object"},
        }

        data = self._post(body)
        try:
            content = self._extract_content(data)
            validate_task_content(request.task, content)
        except SchemaViolation as exc:
            # One repair re-prompt that echoes the validation error.
            logger.warning("repair re-prompt for %s task: %s", request.task, exc)
            repair_messages = messages + [
                {"role": "assistant", "content": json.dumps(data.get("choices", ""))[:2000]},
                {
                    "role": "user",
                    "content": (
                        f"Your previous reply failed validation: {exc}. "
                        "Reply again with only a valid JSON object matching the instructions."
                    ),
                },
            ]
            data = self._post({**body, "messages": repair_messages})
            content = self._extract_content(data)
            validate_task_content(request.task, content)
        return LmResponse(content=content, provider_meta={"provider": "http", "model": self.model})
