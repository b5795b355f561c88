"""Batch linking: ordering, concurrency, and journal-backed resume."""

from __future__ import annotations

import hashlib
import json

import pytest

from conceptlinker import (
    ExactMatchMockEndpoint,
    LinkJournal,
    PromptConfig,
    SelectionKind,
    build_memory,
    embed_queries,
    link_queries,
    query_text,
    retrieve_for_queries,
)
from conceptlinker.errors import TransportError
from conceptlinker.pipeline import journal_row, result_from_row

from .conftest import local_provider, queries_for, synthetic_ontology


class CountingExactMatch(ExactMatchMockEndpoint):
    """Exact-match mock that counts how many completions were issued."""

    def __init__(self):
        self.calls = 0

    def complete(self, prompt):
        self.calls += 1
        return super().complete(prompt)


class FlakyEndpoint(ExactMatchMockEndpoint):
    """Fails the first ``failures`` calls, then behaves."""

    def __init__(self, failures: int):
        self.failures = failures
        self.calls = 0

    def complete(self, prompt):
        self.calls += 1
        if self.calls <= self.failures:
            raise TransportError(503, "flaky")
        return super().complete(prompt)


def stable_fields(results):
    """Everything except latency, which is wall-clock noise."""
    return [
        (r.query_id, r.selection, r.resolved, r.prompt_digest, r.attempts)
        for r in results
    ]


@pytest.fixture
def setting(rng):
    ontology = synthetic_ontology(rng, 40)
    queries, gold = queries_for(ontology, rng, 8)
    provider = local_provider()
    memory = build_memory(ontology, provider)
    candidates = retrieve_for_queries(memory, queries, provider, 5)
    return ontology, queries, gold, provider, memory, candidates


class TestEmbedAndRetrieve:
    def test_embed_queries_in_order(self, setting):
        ontology, queries, _, provider, _, _ = setting
        vectors = embed_queries(queries, provider)
        assert len(vectors) == len(queries)
        singles = [provider.embed_batch([query_text(q)])[0] for q in queries]
        for got, want in zip(vectors, singles):
            assert (got == want).all()

    def test_retrieve_for_queries_shape(self, setting):
        _, queries, _, _, _, candidates = setting
        assert len(candidates) == len(queries)
        assert all(len(slate) == 5 for slate in candidates)


class TestLinkQueries:
    def test_input_order_and_resolution(self, setting):
        ontology, queries, gold, _, _, candidates = setting
        results = link_queries(
            queries, candidates, ontology, PromptConfig(), ExactMatchMockEndpoint()
        )
        assert [r.query_id for r in results] == [q.id for q in queries]
        # exact-name queries land on their gold concept
        for result in results:
            assert result.resolved == gold[result.query_id]

    def test_concurrency_matches_serial(self, setting):
        ontology, queries, _, _, _, candidates = setting
        serial = link_queries(
            queries, candidates, ontology, PromptConfig(), ExactMatchMockEndpoint(),
            concurrency=1,
        )
        threaded = link_queries(
            queries, candidates, ontology, PromptConfig(), ExactMatchMockEndpoint(),
            concurrency=4,
        )
        assert stable_fields(serial) == stable_fields(threaded)

    def test_length_mismatch(self, setting):
        ontology, queries, _, _, _, candidates = setting
        with pytest.raises(ValueError):
            link_queries(queries, candidates[:-1], ontology, PromptConfig(),
                         ExactMatchMockEndpoint())

    def test_concurrency_validated(self, setting):
        ontology, queries, _, _, _, candidates = setting
        with pytest.raises(ValueError):
            link_queries(queries, candidates, ontology, PromptConfig(),
                         ExactMatchMockEndpoint(), concurrency=0)

    def test_empty_batch(self, setting):
        ontology = setting[0]
        assert link_queries([], [], ontology, PromptConfig(),
                            ExactMatchMockEndpoint()) == []


class TestJournal:
    def test_row_round_trip(self, setting):
        ontology, queries, _, _, _, candidates = setting
        result = link_queries(
            queries[:1], candidates[:1], ontology, PromptConfig(),
            ExactMatchMockEndpoint(),
        )[0]
        row = journal_row(result, candidates[0])
        rebuilt = result_from_row(row)
        assert rebuilt.query_id == result.query_id
        assert rebuilt.resolved == result.resolved
        assert rebuilt.selection == result.selection
        assert rebuilt.prompt_digest == result.prompt_digest

    def test_full_resume_issues_no_calls(self, setting, tmp_path):
        ontology, queries, _, _, _, candidates = setting
        journal = LinkJournal(tmp_path / "run.jsonl")
        first = CountingExactMatch()
        results = link_queries(
            queries, candidates, ontology, PromptConfig(), first, journal=journal
        )
        assert first.calls == len(queries)

        resumed_journal = LinkJournal(tmp_path / "run.jsonl")
        second = CountingExactMatch()
        resumed = link_queries(
            queries, candidates, ontology, PromptConfig(), second,
            journal=resumed_journal,
        )
        assert second.calls == 0
        assert stable_fields(resumed) == stable_fields(results)

    def test_partial_resume_calls_only_missing(self, setting, tmp_path):
        ontology, queries, _, _, _, candidates = setting
        half = len(queries) // 2
        journal = LinkJournal(tmp_path / "run.jsonl")
        link_queries(
            queries[:half], candidates[:half], ontology, PromptConfig(),
            ExactMatchMockEndpoint(), journal=journal,
        )

        endpoint = CountingExactMatch()
        results = link_queries(
            queries, candidates, ontology, PromptConfig(), endpoint,
            journal=LinkJournal(tmp_path / "run.jsonl"),
        )
        assert endpoint.calls == len(queries) - half
        assert [r.query_id for r in results] == [q.id for q in queries]

    def test_config_change_invalidates_journal(self, setting, tmp_path):
        ontology, queries, _, _, _, candidates = setting
        journal = LinkJournal(tmp_path / "run.jsonl")
        link_queries(queries, candidates, ontology, PromptConfig(),
                     ExactMatchMockEndpoint(), journal=journal)

        endpoint = CountingExactMatch()
        link_queries(
            queries, candidates, ontology, PromptConfig(none_label="Nothing"),
            endpoint, journal=LinkJournal(tmp_path / "run.jsonl"),
        )
        # the label appears in every prompt, so every digest changes and
        # nothing can be reused
        assert endpoint.calls == len(queries)

    def test_transport_errors_not_journaled_then_retried(self, setting, tmp_path):
        ontology, queries, _, _, _, candidates = setting
        journal = LinkJournal(tmp_path / "run.jsonl")
        flaky = FlakyEndpoint(failures=3)
        results = link_queries(
            queries, candidates, ontology, PromptConfig(), flaky,
            concurrency=1, journal=journal,
        )
        failed = [r for r in results if r.selection.kind is SelectionKind.TRANSPORT_ERROR]
        assert len(failed) == 3
        assert len(journal) == len(queries) - 3

        endpoint = CountingExactMatch()
        retried = link_queries(
            queries, candidates, ontology, PromptConfig(), endpoint,
            journal=LinkJournal(tmp_path / "run.jsonl"),
        )
        assert endpoint.calls == 3
        assert all(
            r.selection.kind is not SelectionKind.TRANSPORT_ERROR for r in retried
        )

    def test_empty_slate_journaled_under_empty_digest(self, setting, tmp_path):
        ontology, queries, _, _, _, _ = setting
        journal = LinkJournal(tmp_path / "run.jsonl")
        results = link_queries(
            queries[:1], [[]], ontology, PromptConfig(),
            ExactMatchMockEndpoint(), journal=journal,
        )
        empty_digest = hashlib.sha256(b"").hexdigest()
        assert results[0].selection.kind is SelectionKind.NONE_OF_THE_ABOVE
        assert results[0].prompt_digest == empty_digest
        assert journal.get(queries[0].id, empty_digest) is not None

        endpoint = CountingExactMatch()
        link_queries(
            queries[:1], [[]], ontology, PromptConfig(), endpoint,
            journal=LinkJournal(tmp_path / "run.jsonl"),
        )
        assert endpoint.calls == 0

    def test_tolerates_truncated_tail(self, setting, tmp_path):
        ontology, queries, _, _, _, candidates = setting
        path = tmp_path / "run.jsonl"
        journal = LinkJournal(path)
        link_queries(queries[:2], candidates[:2], ontology, PromptConfig(),
                     ExactMatchMockEndpoint(), journal=journal)
        with open(path, "a", encoding="utf-8") as handle:
            handle.write('{"query_id": "q9999", "dig')

        reloaded = LinkJournal(path)
        assert len(reloaded) == 2

    def test_journal_rows_are_json_lines(self, setting, tmp_path):
        ontology, queries, _, _, _, candidates = setting
        path = tmp_path / "run.jsonl"
        link_queries(queries[:2], candidates[:2], ontology, PromptConfig(),
                     ExactMatchMockEndpoint(), journal=LinkJournal(path))
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 2
        for row in rows:
            assert {"query_id", "digest", "kind", "resolved", "candidates"} <= row.keys()
            assert all({"cid", "score"} == c.keys() for c in row["candidates"])
