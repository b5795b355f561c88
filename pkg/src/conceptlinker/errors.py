"""Exception hierarchy shared across the package.

Every error raised on a user-facing path derives from :class:`LinkerError`
so callers (and the CLI exit-code mapping) can distinguish bad input
(:class:`ValidationError`) from failing external services
(:class:`ServiceError`).
"""

from __future__ import annotations


class LinkerError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(LinkerError):
    """Bad user input: malformed files, broken invariants, bad config."""


class ServiceError(LinkerError):
    """An external service (embedding or completion endpoint) failed."""


# --- ontology / query files -------------------------------------------------

class MalformedRecord(ValidationError):
    def __init__(self, line: int, detail: str):
        super().__init__(f"line {line}: malformed record: {detail}")
        self.line = line
        self.detail = detail


class MissingField(ValidationError):
    def __init__(self, field: str, line: int):
        super().__init__(f"line {line}: missing or empty required field {field!r}")
        self.field = field
        self.line = line


class DuplicateId(ValidationError):
    def __init__(self, concept_id: str, line: int):
        super().__init__(f"line {line}: duplicate concept id {concept_id!r}")
        self.concept_id = concept_id
        self.line = line


class EmptyFile(ValidationError):
    def __init__(self, path: str):
        super().__init__(f"no records found in {path}")
        self.path = path


class EmptyMention(ValidationError):
    def __init__(self, line: int):
        super().__init__(f"line {line}: query mention is empty")
        self.line = line


class UnknownId(ValidationError):
    def __init__(self, concept_id: str):
        super().__init__(f"unknown concept id {concept_id!r}")
        self.concept_id = concept_id


# --- embedding --------------------------------------------------------------

class EmptyText(ValidationError):
    def __init__(self, index: int | None = None):
        at = "" if index is None else f" at index {index}"
        super().__init__(f"cannot embed empty text{at}")
        self.index = index


class DimMismatch(ValidationError):
    def __init__(self, expected: int, got: int, index: int | None = None):
        at = "" if index is None else f" at index {index}"
        super().__init__(f"dimension mismatch{at}: expected {expected}, got {got}")
        self.expected = expected
        self.got = got
        self.index = index


class TransportError(ServiceError):
    def __init__(self, status: int | None, detail: str):
        where = "transport" if status is None else f"HTTP {status}"
        super().__init__(f"{where}: {detail}")
        self.status = status
        self.detail = detail


class Timeout(ServiceError):
    def __init__(self, detail: str):
        super().__init__(f"timed out: {detail}")
        self.detail = detail


class CacheError(ValidationError):
    """On-disk vector cache entry is unreadable."""


# --- memory store -----------------------------------------------------------

class EmptyOntology(ValidationError):
    def __init__(self, tag: str):
        super().__init__(f"ontology {tag!r} has no concepts")
        self.tag = tag


class MemoryBuildError(LinkerError):
    """Embedding failed while building the memory; names the concept."""

    def __init__(self, concept_id: str, detail: str):
        super().__init__(f"embedding failed for concept {concept_id!r}: {detail}")
        self.concept_id = concept_id


class BadMagic(ValidationError):
    """Memory file is not one of ours, or is truncated/corrupt."""


class VersionMismatch(ValidationError):
    def __init__(self, expected: int, got: object):
        super().__init__(f"memory format version {got!r}, expected {expected}")
        self.expected = expected
        self.got = got


class FingerprintMismatch(ValidationError):
    def __init__(self, stored: tuple[str, str], requested: tuple[str, str]):
        super().__init__(
            f"memory was built with provider {stored}, run requests {requested}"
        )
        self.stored = stored
        self.requested = requested


# --- ranker -----------------------------------------------------------------

class EmptyCandidates(ValidationError):
    def __init__(self) -> None:
        super().__init__("cannot build a prompt with no candidates")


class UnresolvableCandidate(ValidationError):
    def __init__(self, concept_id: str):
        super().__init__(f"candidate {concept_id!r} does not resolve in the ontology")
        self.concept_id = concept_id


class PromptBudgetExceeded(ValidationError):
    def __init__(self, estimated: int, budget: int):
        super().__init__(
            f"prompt estimated at {estimated} tokens exceeds the endpoint budget of {budget}"
        )
        self.estimated = estimated
        self.budget = budget


class TranscriptMiss(ValidationError):
    """Replay-only endpoint has no recorded response for a prompt digest."""

    def __init__(self, digest: str):
        super().__init__(f"no recorded response for prompt digest {digest}")
        self.digest = digest


# --- evaluation -------------------------------------------------------------

class MissingPrediction(ValidationError):
    def __init__(self, query_id: str):
        super().__init__(f"no prediction for gold query {query_id!r}")
        self.query_id = query_id


class MissingRetrieval(ValidationError):
    def __init__(self, query_id: str):
        super().__init__(f"no retrieval list for gold query {query_id!r}")
        self.query_id = query_id
