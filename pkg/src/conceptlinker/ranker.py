"""Prompt construction, strict response parsing, and the ranking loop.

The prompt lists retrieved candidates as numbered options (retrieval order,
never shuffled), optionally with their descriptions and the query's source
context, and always offers a final none-of-the-above option. The response
grammar accepts "option N", a standalone "N:"/"N" line, or the none label,
in that priority; anything else is a ParseFailure and triggers one terse
re-ask before giving up.
"""

from __future__ import annotations

import hashlib
import re
import time
from dataclasses import dataclass, replace
from enum import Enum

from .errors import (
    EmptyCandidates,
    PromptBudgetExceeded,
    ServiceError,
    UnresolvableCandidate,
)
from .memory import Candidate
from .ontology import Ontology, Query
from .textutil import truncate_at_word

TEMPLATE_V1 = "v1"

# line markers shared with the template-aware mock endpoints
QUERY_MARKER = "Query term: "
OPTIONS_MARKER = "Options:"
ABSTRACT_OPEN = "<abstract>"
ABSTRACT_CLOSE = "</abstract>"
OPTION_SEP = " | "

_OPTION_WORD = re.compile(r"\boption\s+(\d+)", re.IGNORECASE)
_LINE_PREFIX = re.compile(r"^[ \t]*(\d+)[ \t]*:", re.MULTILINE)
_LINE_EXACT = re.compile(r"^[ \t]*(\d+)[ \t]*$", re.MULTILINE)


class SelectionKind(Enum):
    OPTION = "option"
    NONE_OF_THE_ABOVE = "none"
    PARSE_FAILURE = "parse_failure"
    TRANSPORT_ERROR = "transport_error"


@dataclass(frozen=True)
class Selection:
    """What the model picked, plus the raw text it said."""

    kind: SelectionKind
    raw_response: str
    index: int | None = None

    def __post_init__(self) -> None:
        if (self.kind is SelectionKind.OPTION) != (self.index is not None):
            raise ValueError("index is present exactly when kind is OPTION")


@dataclass(frozen=True)
class LinkResult:
    query_id: str
    selection: Selection
    resolved: str | None
    prompt_digest: str
    attempts: int
    latency: float

    def __post_init__(self) -> None:
        if (self.selection.kind is SelectionKind.OPTION) != (self.resolved is not None):
            raise ValueError("resolved is present exactly when an option was chosen")


@dataclass(frozen=True)
class OneShotExample:
    """A worked example block: query text, its options text, the answer."""

    query: str
    options: str
    answer: str


@dataclass(frozen=True)
class PromptConfig:
    include_source_context: bool = True
    include_candidate_context: bool = True
    one_shot: OneShotExample | None = None
    none_label: str = "None"
    max_option_context_chars: int = 600
    template_id: str = TEMPLATE_V1

    def __post_init__(self) -> None:
        label = self.none_label.strip()
        if not label:
            raise ValueError("none_label must be non-empty")
        if label.isdigit():
            raise ValueError("none_label must be distinct from option index tokens")
        if self.max_option_context_chars < 50:
            raise ValueError("max_option_context_chars must be at least 50")
        if self.template_id != TEMPLATE_V1:
            raise ValueError(f"unknown template {self.template_id!r}")


def build_prompt(
    query: Query,
    candidates: list[Candidate],
    ontology: Ontology,
    config: PromptConfig,
) -> str:
    """Render the ranking prompt; deterministic for identical inputs."""
    if not candidates:
        raise EmptyCandidates()
    concepts = []
    for cand in candidates:
        if cand.concept_id not in ontology:
            raise UnresolvableCandidate(cand.concept_id)
        concepts.append(ontology.get(cand.concept_id))

    none_label = config.none_label
    lines: list[str] = [
        "Task: identify which numbered option denotes the same concept as "
        f"the query term. If no option matches, answer {none_label}.",
        "",
    ]
    if config.one_shot is not None:
        ex = config.one_shot
        lines += [
            "Example:",
            f"{QUERY_MARKER}{ex.query}",
            OPTIONS_MARKER,
            ex.options,
            f"Answer: {ex.answer}",
            "",
        ]
    lines.append(f"{QUERY_MARKER}{query.mention}")
    if config.include_source_context and query.context:
        lines += [ABSTRACT_OPEN, query.context, ABSTRACT_CLOSE]
    lines += ["", OPTIONS_MARKER]
    for i, concept in enumerate(concepts):
        option = f"{i}: {concept.name}"
        if config.include_candidate_context and concept.description:
            option += OPTION_SEP + truncate_at_word(
                concept.description, config.max_option_context_chars
            )
        lines.append(option)
    lines += [
        f"{none_label}: none of the above options match",
        "",
        f"Answer with exactly one option number or {none_label}, "
        "then briefly justify your choice.",
    ]
    return "\n".join(lines)


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def parse_response(text: str, n_options: int, none_label: str = "None") -> Selection:
    """Map a raw model response to a Selection; total, never raises.

    Priority: (1) "option N" anywhere, case-insensitive; (2) a standalone
    line "N:" or exactly "N"; (3) the none label as a whole word,
    case-insensitive. Within a rule the earliest text position wins;
    indices >= n_options never match. No rule firing means ParseFailure.
    """
    if n_options < 1:
        raise ValueError(f"n_options must be >= 1, got {n_options}")

    for match in _OPTION_WORD.finditer(text):
        index = int(match.group(1))
        if index < n_options:
            return Selection(SelectionKind.OPTION, text, index=index)

    line_hits = [
        (m.start(), int(m.group(1)))
        for pattern in (_LINE_PREFIX, _LINE_EXACT)
        for m in pattern.finditer(text)
    ]
    for _, index in sorted(line_hits):
        if index < n_options:
            return Selection(SelectionKind.OPTION, text, index=index)

    none_word = re.compile(rf"\b{re.escape(none_label)}\b", re.IGNORECASE)
    if none_word.search(text):
        return Selection(SelectionKind.NONE_OF_THE_ABOVE, text)

    return Selection(SelectionKind.PARSE_FAILURE, text)


def estimate_tokens(text: str) -> int:
    """Crude chars/4 token estimate used for the prompt budget guard."""
    return len(text) // 4 + 1


def complete(endpoint, prompt: str) -> str:
    """Send one prompt to a completion endpoint and return the raw text.

    Enforces the endpoint's token budget, when it advertises one, before
    sending anything.
    """
    if not prompt:
        raise ValueError("prompt must be non-empty")
    budget = getattr(endpoint, "token_budget", None)
    if budget is not None:
        estimate = estimate_tokens(prompt)
        if estimate > budget:
            raise PromptBudgetExceeded(estimate, budget)
    return endpoint.complete(prompt)


def fit_prompt(
    query: Query,
    candidates: list[Candidate],
    ontology: Ontology,
    config: PromptConfig,
    budget: int | None = None,
) -> str:
    """Build the prompt, progressively shedding candidate context to fit.

    Halves the per-option description budget down to the 50-char floor,
    then drops descriptions entirely; raises PromptBudgetExceeded only
    when even the bare prompt does not fit.
    """
    prompt = build_prompt(query, candidates, ontology, config)
    if budget is None or estimate_tokens(prompt) <= budget:
        return prompt

    chars = config.max_option_context_chars
    while config.include_candidate_context and chars >= 100:
        chars //= 2
        prompt = build_prompt(
            query, candidates, ontology,
            replace(config, max_option_context_chars=max(chars, 50)),
        )
        if estimate_tokens(prompt) <= budget:
            return prompt
    prompt = build_prompt(
        query, candidates, ontology, replace(config, include_candidate_context=False)
    )
    if estimate_tokens(prompt) <= budget:
        return prompt
    raise PromptBudgetExceeded(estimate_tokens(prompt), budget)


def rank(
    query: Query,
    candidates: list[Candidate],
    ontology: Ontology,
    config: PromptConfig,
    endpoint,
    *,
    reask_limit: int = 1,
) -> LinkResult:
    """Run one query through prompt, completion, and parsing.

    An empty candidate list short-circuits to none-of-the-above without
    touching the endpoint. A ParseFailure earns up to ``reask_limit``
    re-asks with an appended answer-format reminder. Transport failures
    become a distinct failure kind in the result, never a silent none.
    """
    if not candidates:
        return LinkResult(
            query_id=query.id,
            selection=Selection(SelectionKind.NONE_OF_THE_ABOVE, ""),
            resolved=None,
            prompt_digest=prompt_digest(""),
            attempts=0,
            latency=0.0,
        )

    budget = getattr(endpoint, "token_budget", None)
    prompt = fit_prompt(query, candidates, ontology, config, budget)
    digest = prompt_digest(prompt)

    started = time.monotonic()
    attempts = 0
    selection = Selection(SelectionKind.PARSE_FAILURE, "")
    ask = prompt
    while attempts <= reask_limit:
        attempts += 1
        try:
            raw = complete(endpoint, ask)
        except ServiceError as exc:
            selection = Selection(SelectionKind.TRANSPORT_ERROR, str(exc))
            break
        selection = parse_response(raw, len(candidates), config.none_label)
        if selection.kind is not SelectionKind.PARSE_FAILURE:
            break
        ask = (
            prompt
            + f"\nAnswer with only the option number or {config.none_label}."
        )
    latency = time.monotonic() - started

    resolved = None
    if selection.kind is SelectionKind.OPTION:
        assert selection.index is not None
        resolved = candidates[selection.index].concept_id
    return LinkResult(
        query_id=query.id,
        selection=selection,
        resolved=resolved,
        prompt_digest=digest,
        attempts=attempts,
        latency=latency,
    )
