"""Scoring and reporting: accuracy, precision/recall/F1, hits@k, ablation.

Accuracy treats none-of-the-above, parse failures, and transport errors as
incorrect. Precision counts only queries where a concept id was actually
predicted; recall divides by the gold count; both raw counts ride along in
every report so alternative denominators can be recomputed. All metric
values are emitted at four decimal places.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import (
    EmptyFile,
    LinkerError,
    MalformedRecord,
    MissingPrediction,
    MissingRetrieval,
)
from .memory import Candidate, Memory
from .ontology import Ontology, Query
from .pipeline import link_queries, retrieve_for_queries
from .ranker import LinkResult, OneShotExample, PromptConfig, SelectionKind

logger = logging.getLogger(__name__)

DEFAULT_HITS_KS = (1, 5, 10)

# gold targets holding several ids joined by | are out of scope and skipped
COMPOSITE_SEP = "|"


@dataclass(frozen=True)
class GoldPair:
    source_id: str
    target_id: str


@dataclass(frozen=True)
class Prediction:
    """A prediction reloaded from a file; enough of a LinkResult to score."""

    query_id: str
    resolved: str | None


# scoring only reads .query_id and .resolved, present on both
Linked = LinkResult | Prediction


@dataclass(frozen=True)
class MetricsReport:
    """One scored run: whichever metrics apply, plus the raw counts."""

    accuracy: float | None = None
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    hits_at: dict[int, float] = field(default_factory=dict)
    n_queries: int = 0
    n_predicted: int = 0
    n_correct: int = 0
    n_gold: int = 0

    def __post_init__(self) -> None:
        ks = list(self.hits_at)
        if ks != sorted(ks):
            raise ValueError("hits_at keys must be ascending")
        values = list(self.hits_at.values())
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("hits_at must be non-decreasing in k")

    def to_dict(self) -> dict:
        def fmt(x: float | None) -> float | None:
            return None if x is None else round(x, 4)

        return {
            "accuracy": fmt(self.accuracy),
            "precision": fmt(self.precision),
            "recall": fmt(self.recall),
            "f1": fmt(self.f1),
            "hits_at": {str(k): fmt(v) for k, v in self.hits_at.items()},
            "counts": {
                "n_queries": self.n_queries,
                "n_predicted": self.n_predicted,
                "n_correct": self.n_correct,
                "n_gold": self.n_gold,
            },
        }


def f1_from(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when both sides are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def gold_map(pairs: list[GoldPair]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        if pair.source_id in out and out[pair.source_id] != pair.target_id:
            raise ValueError(f"gold maps query {pair.source_id!r} to two targets")
        out[pair.source_id] = pair.target_id
    return out


def accuracy(results: Sequence[Linked], gold: dict[str, str]) -> float:
    """Fraction of gold queries whose resolved id matches the gold id.

    Every gold query must have a result; a result that resolved nothing
    (none-of-the-above, parse failure, transport error) counts as wrong.
    """
    if not gold:
        raise ValueError("gold is empty")
    by_id = {r.query_id: r for r in results}
    correct = 0
    for query_id, target in gold.items():
        result = by_id.get(query_id)
        if result is None:
            raise MissingPrediction(query_id)
        correct += result.resolved == target
    return correct / len(gold)


def prf1(
    results: Sequence[Linked], gold: list[GoldPair]
) -> tuple[float, float, float]:
    """Precision over resolved predictions, recall over gold, and their F1."""
    wanted = {(p.source_id, p.target_id) for p in gold}
    resolved = [r for r in results if r.resolved is not None]
    tp = sum((r.query_id, r.resolved) in wanted for r in resolved)
    precision = tp / len(resolved) if resolved else 0.0
    recall = tp / len(gold) if gold else 0.0
    return precision, recall, f1_from(precision, recall)


def hits_at_k(
    retrievals: dict[str, list[str]],
    gold: dict[str, str],
    ks: list[int],
) -> dict[int, float]:
    """Fraction of gold queries whose gold id is in the top k, for each k."""
    if not gold:
        raise ValueError("gold is empty")
    if not ks or ks != sorted(ks) or ks[0] < 1:
        raise ValueError(f"ks must be positive and ascending, got {ks}")
    ranks: list[int | None] = []
    for query_id, target in gold.items():
        ranked = retrievals.get(query_id)
        if ranked is None:
            raise MissingRetrieval(query_id)
        ranks.append(ranked.index(target) if target in ranked else None)
    return {
        k: sum(r is not None and r < k for r in ranks) / len(ranks) for k in ks
    }


def score_predictions(results: Sequence[Linked], gold: list[GoldPair]) -> MetricsReport:
    wanted = {(p.source_id, p.target_id) for p in gold}
    precision, recall, f1 = prf1(results, gold)
    resolved = [r for r in results if r.resolved is not None]
    return MetricsReport(
        accuracy=accuracy(results, gold_map(gold)),
        precision=precision,
        recall=recall,
        f1=f1,
        n_queries=len(results),
        n_predicted=len(resolved),
        n_correct=sum((r.query_id, r.resolved) in wanted for r in resolved),
        n_gold=len(gold),
    )


def score_retrievals(
    retrievals: dict[str, list[str]],
    gold: dict[str, str],
    ks: list[int] | None = None,
) -> MetricsReport:
    ks = list(DEFAULT_HITS_KS) if ks is None else ks
    hits = hits_at_k(retrievals, gold, ks)
    top = max(ks)
    n_correct = round(hits[top] * len(gold))
    return MetricsReport(
        hits_at=hits,
        n_queries=len(gold),
        n_predicted=len(retrievals),
        n_correct=n_correct,
        n_gold=len(gold),
    )


# --- gold files -------------------------------------------------------------

def parse_gold(path: str | Path) -> list[GoldPair]:
    """Read JSON Lines ``{"source", "target"}`` pairs.

    Composite targets (several ids joined by ``|``) and conflicting
    duplicate sources are out of scope: they are skipped with a logged
    count rather than scored.
    """
    pairs: list[GoldPair] = []
    seen: dict[str, str] = {}
    skipped = 0
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise MalformedRecord(lineno, f"invalid JSON: {exc}") from None
            if not isinstance(record, dict):
                raise MalformedRecord(lineno, "expected a JSON object")
            try:
                source = str(record["source"]).strip()
                target = str(record["target"]).strip()
            except KeyError as exc:
                raise MalformedRecord(lineno, f"missing field {exc}") from None
            if not source or not target:
                raise MalformedRecord(lineno, "empty source or target")
            if COMPOSITE_SEP in target:
                skipped += 1
                continue
            if source in seen:
                if seen[source] != target:
                    skipped += 1
                continue
            seen[source] = target
            pairs.append(GoldPair(source, target))
    if skipped:
        logger.warning("skipped %d composite or conflicting gold records", skipped)
    return pairs


def write_gold(path: str | Path, pairs: list[GoldPair]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pair in pairs:
            handle.write(
                json.dumps({"source": pair.source_id, "target": pair.target_id}) + "\n"
            )


# --- prediction and retrieval files -----------------------------------------

PREDICTION_NONE = "NONE"


def _atomic_text(path: str | Path, text: str) -> None:
    # readers never see a partial file, and an interrupted write leaves
    # the previous version in place
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_predictions(
    path: str | Path,
    results: Sequence[LinkResult],
    candidates: Sequence[list[Candidate]],
) -> None:
    """Write the tab-separated predictions table, one row per query.

    Columns: query id, predicted concept id (or ``NONE``), retrieval score
    of the chosen candidate (top candidate when nothing was chosen), and
    the selection kind.
    """
    lines = []
    for result, slate in zip(results, candidates):
        if result.selection.index is not None:
            score = slate[result.selection.index].score
        elif slate:
            score = slate[0].score
        else:
            score = 0.0
        lines.append(
            "\t".join(
                [
                    result.query_id,
                    result.resolved or PREDICTION_NONE,
                    format(score, ".6f"),
                    result.selection.kind.value,
                ]
            )
        )
    _atomic_text(path, "".join(line + "\n" for line in lines))


def parse_predictions(path: str | Path) -> list[Prediction]:
    """Read a predictions table back for scoring."""
    out: list[Prediction] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise MalformedRecord(lineno, f"expected 4 columns, got {len(parts)}")
            query_id, predicted, score, kind = parts
            try:
                float(score)
                resolved_kind = SelectionKind(kind)
            except ValueError as exc:
                raise MalformedRecord(lineno, str(exc)) from None
            resolved = None if predicted == PREDICTION_NONE else predicted
            if (resolved_kind is SelectionKind.OPTION) != (resolved is not None):
                raise MalformedRecord(lineno, f"kind {kind} contradicts {predicted!r}")
            out.append(Prediction(query_id, resolved))
    return out


def write_retrievals(
    path: str | Path, rows: Sequence[tuple[str, list[Candidate]]]
) -> None:
    """Write ranked candidates per query as JSON Lines, for hits@k scoring."""
    lines = [
        json.dumps(
            {
                "query_id": query_id,
                "candidates": [
                    {"cid": c.concept_id, "score": round(c.score, 6)} for c in slate
                ],
            }
        )
        for query_id, slate in rows
    ]
    _atomic_text(path, "".join(line + "\n" for line in lines))


def parse_retrievals(path: str | Path) -> dict[str, list[str]]:
    """Read a retrieval file back to ranked id lists keyed by query id."""
    out: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                query_id = record["query_id"]
                ranked = [c["cid"] for c in record["candidates"]]
            except (ValueError, KeyError, TypeError) as exc:
                raise MalformedRecord(lineno, str(exc)) from None
            if query_id in out:
                raise MalformedRecord(lineno, f"duplicate query id {query_id!r}")
            out[query_id] = ranked
    return out


# --- ablation ---------------------------------------------------------------

@dataclass(frozen=True)
class AblationArm:
    """One grid row: a label plus the prompt configuration it exercises."""

    label: str
    config: PromptConfig


def parse_grid(path: str | Path) -> list[AblationArm]:
    """Read a JSON Lines ablation grid.

    Each row holds an optional ``label`` plus prompt-configuration fields
    by their own names, e.g. ``{"label": "no context",
    "include_source_context": false, "include_candidate_context": false}``.
    A ``one_shot`` field takes an object with query, options, and answer.
    """
    arms: list[AblationArm] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                record = json.loads(line)
            except ValueError as exc:
                raise MalformedRecord(lineno, f"invalid JSON: {exc}") from None
            if not isinstance(record, dict):
                raise MalformedRecord(lineno, "expected a JSON object")
            label = str(record.pop("label", f"arm-{len(arms)}"))
            one_shot = record.pop("one_shot", None)
            if one_shot is not None:
                try:
                    one_shot = OneShotExample(**one_shot)
                except TypeError as exc:
                    raise MalformedRecord(lineno, f"bad one_shot: {exc}") from None
            try:
                config = PromptConfig(one_shot=one_shot, **record)
            except (TypeError, ValueError) as exc:
                raise MalformedRecord(lineno, str(exc)) from None
            arms.append(AblationArm(label, config))
    if not arms:
        raise EmptyFile(str(path))
    return arms


@dataclass(frozen=True)
class AblationRow:
    label: str
    config: PromptConfig
    report: MetricsReport | None
    error: str | None
    retrieval_digest: str

    def to_dict(self) -> dict:
        config = asdict(self.config)
        return {
            "label": self.label,
            "config": config,
            "metrics": self.report.to_dict() if self.report else None,
            "error": self.error,
            "retrieval_digest": self.retrieval_digest,
        }


def retrieval_digest(candidates: list[list[Candidate]]) -> str:
    """Stable fingerprint of a full retrieval pass, for sharing checks."""
    blob = json.dumps(
        [
            [{"cid": c.concept_id, "score": format(c.score, ".6f")} for c in slate]
            for slate in candidates
        ],
        sort_keys=True,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def run_ablation(
    queries: list[Query],
    gold: list[GoldPair],
    ontology: Ontology,
    memory: Memory,
    provider,
    endpoint,
    grid: list[AblationArm | PromptConfig],
    *,
    k: int,
    concurrency: int = 1,
) -> list[AblationRow]:
    """Score one prompt configuration per grid entry, sharing retrieval.

    Retrieval runs once; only the prompt stage varies across rows. A row
    that fails is recorded with its error and the remaining rows still
    run. Rows come back in grid order.
    """
    if not grid:
        raise ValueError("grid is empty")
    arms = [
        arm if isinstance(arm, AblationArm) else AblationArm(f"arm-{i}", arm)
        for i, arm in enumerate(grid)
    ]
    candidates = retrieve_for_queries(memory, queries, provider, k)
    digest = retrieval_digest(candidates)

    rows: list[AblationRow] = []
    for arm in arms:
        try:
            results = link_queries(
                queries, candidates, ontology, arm.config, endpoint,
                concurrency=concurrency,
            )
            report = score_predictions(results, gold)
            rows.append(AblationRow(arm.label, arm.config, report, None, digest))
        except LinkerError as exc:
            logger.warning("ablation row %r failed: %s", arm.label, exc)
            rows.append(AblationRow(arm.label, arm.config, None, str(exc), digest))
    return rows


# --- report files -----------------------------------------------------------

def write_report(path: str | Path, report: dict) -> None:
    """Write a report object as one pretty-printed JSON document."""
    _atomic_text(path, json.dumps(report, indent=2, sort_keys=True) + "\n")


def render_report(report: dict) -> str:
    """Aligned text table of the rows in a report object."""
    rows = report.get("rows", [])
    hit_ks: list[str] = sorted(
        {k for row in rows for k in (row.get("metrics") or {}).get("hits_at", {})},
        key=int,
    )
    header = ["row", "acc", "P", "R", "F1"] + [f"hits@{k}" for k in hit_ks] + ["note"]

    def cell(value: float | None) -> str:
        return "-" if value is None else f"{value:.4f}"

    table = [header]
    for row in rows:
        metrics = row.get("metrics") or {}
        hits = metrics.get("hits_at", {})
        table.append(
            [
                row.get("label", "?"),
                cell(metrics.get("accuracy")),
                cell(metrics.get("precision")),
                cell(metrics.get("recall")),
                cell(metrics.get("f1")),
                *[cell(hits.get(k)) for k in hit_ks],
                row.get("error") or "",
            ]
        )
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip()
        for row in table
    ]
    return "\n".join(lines)
