"""Persistent dual-variant vector memory and exact top-k retrieval.

Every concept contributes a name-only embedding, plus a name+description
embedding when it has a description. Retrieval scores a query against all
entries by cosine similarity, keeps each concept's best variant, and
returns the k best distinct concepts. The scan is exhaustive and exact;
ties break on ascending concept id so runs are reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .embedding import Provider, ProviderSpec, embed_batch
from .errors import (
    BadMagic,
    DimMismatch,
    EmptyOntology,
    FingerprintMismatch,
    MemoryBuildError,
    VersionMismatch,
)
from .errors import LinkerError
from .ontology import Ontology, Query

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class Variant(str, Enum):
    """Which text form of the concept an entry embeds."""

    NAME_ONLY = "n"
    NAME_WITH_CONTEXT = "nc"


@dataclass(frozen=True, eq=False)
class MemoryEntry:
    concept_id: str
    variant: Variant
    vector: np.ndarray  # unit-norm float32

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector", np.asarray(self.vector, dtype=np.float32))


@dataclass(frozen=True)
class Candidate:
    """One retrieval hit: a concept, its best score, and the winning variant."""

    concept_id: str
    score: float
    variant: Variant


class Memory:
    """Immutable store of embedding entries sharing one dim and provider."""

    def __init__(self, entries: list[MemoryEntry], dim: int,
                 provider_fingerprint: tuple[str, str], ontology_tag: str):
        for e in entries:
            if e.vector.shape != (dim,):
                raise DimMismatch(dim, e.vector.shape[0])
        self.entries = tuple(entries)
        self.dim = dim
        self.provider_fingerprint = tuple(provider_fingerprint)
        self.ontology_tag = ontology_tag
        # float64 copies for scoring; float32 stays canonical for persistence
        if entries:
            self._matrix = np.stack([e.vector for e in entries]).astype(np.float64)
            self._norms = np.linalg.norm(self._matrix, axis=1)
        else:
            self._matrix = np.zeros((0, dim), dtype=np.float64)
            self._norms = np.zeros(0, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.entries)


def concept_text(name: str, description: str | None) -> str:
    """The name+context form embedded for the NameWithContext variant."""
    return f"{name}: {description}" if description else name


def query_text(query: Query) -> str:
    """The text embedded for a query: mention alone, or mention + context."""
    return f"{query.mention}: {query.context}" if query.context else query.mention


def build_memory(ontology: Ontology, provider: Provider) -> Memory:
    """Embed an ontology into a memory store.

    Entry order is the ontology's file order, name-only first then
    name+context per concept, so identical inputs always produce an
    identical store. Entry count is N + M for N concepts of which M carry
    a description.
    """
    concepts = list(ontology)
    if not concepts:
        raise EmptyOntology(ontology.tag)

    name_texts = [c.name for c in concepts]
    described = [c for c in concepts if c.description]
    context_texts = [concept_text(c.name, c.description) for c in described]

    try:
        name_vecs = embed_batch(provider, name_texts)
    except LinkerError as exc:
        raise MemoryBuildError(_offending(concepts, exc), str(exc)) from exc
    try:
        context_vecs = embed_batch(provider, context_texts) if context_texts else []
    except LinkerError as exc:
        raise MemoryBuildError(_offending(described, exc), str(exc)) from exc

    by_id = {c.id: v for c, v in zip(described, context_vecs)}
    entries: list[MemoryEntry] = []
    for concept, vec in zip(concepts, name_vecs):
        entries.append(MemoryEntry(concept.id, Variant.NAME_ONLY, vec))
        if concept.id in by_id:
            entries.append(
                MemoryEntry(concept.id, Variant.NAME_WITH_CONTEXT, by_id[concept.id])
            )

    spec: ProviderSpec = provider.spec
    return Memory(entries, dim=spec.dim, provider_fingerprint=spec.fingerprint,
                  ontology_tag=ontology.tag)


def _offending(concepts: list, exc: LinkerError) -> str:
    index = getattr(exc, "index", None)
    if index is not None and 0 <= index < len(concepts):
        return concepts[index].id
    return "<unknown>"


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1], computed in float64.

    Divides by both norms rather than trusting unit inputs: float32
    storage leaves norms a hair off 1, and self-similarity must stay at
    exactly 1.0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(a.shape[0], b.shape[0])
    value = float(a @ b) / (float(np.linalg.norm(a)) * float(np.linalg.norm(b)))
    return min(1.0, max(-1.0, value))


def retrieve_top_k(memory: Memory, query: np.ndarray, k: int) -> list[Candidate]:
    """The k distinct best-scoring concepts, best variant each, scores descending.

    Per-concept score is the max over that concept's entries; the reported
    variant is the arg-max (earlier entry on an exact tie). Concepts tie-break
    by ascending id. Returns all concepts when fewer than k exist.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (memory.dim,):
        raise DimMismatch(memory.dim, query.shape[0])

    qnorm = float(np.linalg.norm(query))
    scores = (memory._matrix @ query) / (memory._norms * qnorm)
    np.clip(scores, -1.0, 1.0, out=scores)

    best: dict[str, tuple[float, Variant]] = {}
    for entry, score in zip(memory.entries, scores):
        score = float(score)
        prev = best.get(entry.concept_id)
        if prev is None or score > prev[0]:
            best[entry.concept_id] = (score, entry.variant)

    ranked = sorted(best.items(), key=lambda item: (-item[1][0], item[0]))
    return [
        Candidate(concept_id=cid, score=score, variant=variant)
        for cid, (score, variant) in ranked[:k]
    ]


def _format_vector(vec: np.ndarray) -> str:
    # 9 significant digits round-trips float32 exactly
    return "[" + ", ".join(format(float(x), ".9g") for x in vec) + "]"


def save_memory(memory: Memory, path: str | Path) -> None:
    """Write the store: one JSON header line, one JSON line per entry.

    The write is atomic (temp file + rename) and byte-deterministic for a
    given memory.
    """
    path = str(path)
    header = json.dumps(
        {
            "format_version": FORMAT_VERSION,
            "dim": memory.dim,
            "provider_id": memory.provider_fingerprint[0],
            "model_id": memory.provider_fingerprint[1],
            "ontology_tag": memory.ontology_tag,
            "entry_count": len(memory.entries),
        },
        ensure_ascii=False,
    )
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".memtmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for e in memory.entries:
                fh.write(
                    '{"cid": %s, "variant": %s, "v": %s}\n'
                    % (
                        json.dumps(e.concept_id, ensure_ascii=False),
                        json.dumps(e.variant.value),
                        _format_vector(e.vector),
                    )
                )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_memory(
    path: str | Path,
    *,
    expected_provider: tuple[str, str] | None = None,
    strict: bool = False,
) -> Memory:
    """Read a store written by :func:`save_memory`; never yields a partial Memory.

    When ``expected_provider`` differs from the stored fingerprint this warns,
    or raises :class:`FingerprintMismatch` under ``strict``.
    """
    with open(path, encoding="utf-8") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
            if not isinstance(header, dict):
                raise ValueError("header is not an object")
        except ValueError as exc:
            raise BadMagic(f"not a memory file: {exc}") from None
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise VersionMismatch(FORMAT_VERSION, version)
        try:
            dim = int(header["dim"])
            fingerprint = (str(header["provider_id"]), str(header["model_id"]))
            tag = str(header["ontology_tag"])
            entry_count = int(header["entry_count"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BadMagic(f"memory header incomplete: {exc}") from None

        entries: list[MemoryEntry] = []
        for raw in fh:
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
                entry = MemoryEntry(
                    concept_id=obj["cid"],
                    variant=Variant(obj["variant"]),
                    vector=np.asarray(obj["v"], dtype=np.float32),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise BadMagic(f"bad memory entry: {exc}") from None
            if entry.vector.shape != (dim,):
                raise BadMagic(
                    f"entry for {entry.concept_id!r} has dim {entry.vector.shape[0]}, "
                    f"header says {dim}"
                )
            entries.append(entry)

    if len(entries) != entry_count:
        raise BadMagic(
            f"memory file truncated: header promises {entry_count} entries, "
            f"found {len(entries)}"
        )

    if expected_provider is not None and tuple(expected_provider) != fingerprint:
        if strict:
            raise FingerprintMismatch(fingerprint, tuple(expected_provider))
        logger.warning(
            "memory %s was built with provider %s but the run uses %s",
            path, fingerprint, expected_provider,
        )
    return Memory(entries, dim=dim, provider_fingerprint=fingerprint, ontology_tag=tag)
