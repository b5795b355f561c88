"""End-to-end plumbing: embed queries, retrieve, and rank with resume.

Linking keeps a JSON Lines journal beside its output. Each completed query
appends one row keyed by (query_id, prompt digest); a re-run skips every
journaled query whose prompt is unchanged, so an interrupted batch resumes
without repeating endpoint calls. Transport failures are deliberately not
journaled, which makes them retryable.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .memory import Candidate, Memory, query_text, retrieve_top_k
from .ontology import Ontology, Query
from .ranker import (
    LinkResult,
    PromptConfig,
    Selection,
    SelectionKind,
    fit_prompt,
    prompt_digest,
    rank,
)

logger = logging.getLogger(__name__)

DEFAULT_CONCURRENCY = 4


def embed_queries(queries: list[Query], provider) -> list[np.ndarray]:
    """Embed every query's mention-plus-context text, in input order."""
    return provider.embed_batch([query_text(q) for q in queries])


def retrieve_for_queries(
    memory: Memory, queries: list[Query], provider, k: int
) -> list[list[Candidate]]:
    """Top-k candidates for each query, in input order."""
    vectors = embed_queries(queries, provider)
    return [retrieve_top_k(memory, v, k) for v in vectors]


class LinkJournal:
    """Append-only per-query detail log that doubles as resume state.

    Rows carry the prompt digest, the selection, the raw response, and the
    candidate slate, so a journaled query can be replayed into a LinkResult
    without touching the endpoint. A truncated final line (killed process)
    is skipped on load.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._rows: dict[tuple[str, str], dict] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    key = (row["query_id"], row["digest"])
                except (ValueError, KeyError, TypeError):
                    logger.warning("skipping malformed journal line in %s", self.path)
                    continue
                self._rows[key] = row

    def __len__(self) -> int:
        return len(self._rows)

    def get(self, query_id: str, digest: str) -> dict | None:
        return self._rows.get((query_id, digest))

    def append(self, row: dict) -> None:
        with self._lock:
            self._rows[(row["query_id"], row["digest"])] = row
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(row) + "\n")


def journal_row(result: LinkResult, candidates: list[Candidate]) -> dict:
    return {
        "query_id": result.query_id,
        "digest": result.prompt_digest,
        "kind": result.selection.kind.value,
        "index": result.selection.index,
        "resolved": result.resolved,
        "raw_response": result.selection.raw_response,
        "attempts": result.attempts,
        "latency": round(result.latency, 6),
        "candidates": [
            {"cid": c.concept_id, "score": round(c.score, 6)} for c in candidates
        ],
    }


def result_from_row(row: dict) -> LinkResult:
    kind = SelectionKind(row["kind"])
    selection = Selection(kind, row["raw_response"], index=row["index"])
    return LinkResult(
        query_id=row["query_id"],
        selection=selection,
        resolved=row["resolved"],
        prompt_digest=row["digest"],
        attempts=row["attempts"],
        latency=row["latency"],
    )


def link_queries(
    queries: list[Query],
    candidates: list[list[Candidate]],
    ontology: Ontology,
    config: PromptConfig,
    endpoint,
    *,
    concurrency: int = DEFAULT_CONCURRENCY,
    journal: LinkJournal | None = None,
) -> list[LinkResult]:
    """Rank every query against its candidate slate; results in input order.

    Queries are ranked concurrently up to ``concurrency``; the journal, when
    given, is consulted before and appended after each query.
    """
    if len(queries) != len(candidates):
        raise ValueError(
            f"{len(queries)} queries but {len(candidates)} candidate lists"
        )
    if concurrency < 1:
        raise ValueError("concurrency must be >= 1")

    budget = getattr(endpoint, "token_budget", None)
    results: list[LinkResult | None] = [None] * len(queries)
    pending: list[int] = []
    for i, (query, slate) in enumerate(zip(queries, candidates)):
        digest = prompt_digest(
            fit_prompt(query, slate, ontology, config, budget) if slate else ""
        )
        row = journal.get(query.id, digest) if journal is not None else None
        if row is not None:
            results[i] = result_from_row(row)
        else:
            pending.append(i)

    def run_one(i: int) -> LinkResult:
        result = rank(queries[i], candidates[i], ontology, config, endpoint)
        if journal is not None and result.selection.kind is not SelectionKind.TRANSPORT_ERROR:
            journal.append(journal_row(result, candidates[i]))
        return result

    if pending:
        workers = min(concurrency, len(pending))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for i, result in zip(pending, pool.map(run_one, pending)):
                results[i] = result

    assert all(r is not None for r in results)
    return results  # type: ignore[return-value]
