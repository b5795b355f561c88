"""Concept and query file parsing, validation, and round-tripping."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conceptlinker import (
    Concept,
    Ontology,
    get_concept,
    parse_ontology,
    parse_queries,
    write_ontology,
    write_queries,
)
from conceptlinker.errors import (
    DuplicateId,
    EmptyFile,
    EmptyMention,
    MalformedRecord,
    MissingField,
    UnknownId,
)

from .conftest import queries_for, synthetic_ontology


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")


class TestParseOntology:
    def test_basic(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [
            {"id": "C1", "name": "Aspirin", "description": "pain reliever"},
            {"id": "C2", "name": "Heparin"},
        ])
        onto = parse_ontology(path, "demo")
        assert len(onto) == 2
        assert onto.get("C1").description == "pain reliever"
        assert onto.get("C2").description is None
        assert all(c.ontology_tag == "demo" for c in onto)

    def test_order_preserved(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [{"id": f"C{i}", "name": f"name {i}"} for i in (3, 1, 2)])
        assert [c.id for c in parse_ontology(path, "t")] == ["C3", "C1", "C2"]

    def test_blank_lines_and_comments_skipped(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        path.write_text(
            '# concepts\n\n{"id": "C1", "name": "Aspirin"}\n\n', encoding="utf-8"
        )
        assert len(parse_ontology(path, "t")) == 1

    def test_duplicate_id_names_line(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [
            {"id": "C1", "name": "a"}, {"id": "C2", "name": "b"}, {"id": "C1", "name": "c"},
        ])
        with pytest.raises(DuplicateId) as exc:
            parse_ontology(path, "t")
        assert exc.value.concept_id == "C1"
        assert exc.value.line == 3

    def test_missing_name(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [{"id": "C1"}])
        with pytest.raises(MissingField) as exc:
            parse_ontology(path, "t")
        assert exc.value.field == "name"

    def test_blank_name_is_missing(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [{"id": "C1", "name": "   "}])
        with pytest.raises(MissingField):
            parse_ontology(path, "t")

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        path.write_text('{"id": "C1", "name": "a"}\n{broken\n', encoding="utf-8")
        with pytest.raises(MalformedRecord) as exc:
            parse_ontology(path, "t")
        assert exc.value.line == 2

    def test_non_object_record(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        path.write_text('["not", "an", "object"]\n', encoding="utf-8")
        with pytest.raises(MalformedRecord):
            parse_ontology(path, "t")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        path.write_text("", encoding="utf-8")
        with pytest.raises(EmptyFile):
            parse_ontology(path, "t")

    def test_id_keeps_internal_whitespace(self, tmp_path):
        # ids are opaque strings; only surrounding whitespace is trimmed
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [{"id": "  odd id  ", "name": "x"}])
        assert parse_ontology(path, "t").get("odd id").id == "odd id"

    def test_name_whitespace_collapsed(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [{"id": "C1", "name": "  two\t spaces \n here "}])
        assert parse_ontology(path, "t").get("C1").name == "two spaces here"

    def test_description_truncated_at_word(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        long = "alpha beta gamma delta epsilon"
        write_jsonl(path, [{"id": "C1", "name": "x", "description": long}])
        onto = parse_ontology(path, "t", max_description_chars=12)
        assert onto.get("C1").description == "alpha beta"

    def test_synonyms_deduped_and_name_dropped(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [{
            "id": "C1", "name": "Aspirin",
            "synonyms": ["ASA", "Aspirin", "ASA", "  acetylsalicylic  acid "],
        }])
        onto = parse_ontology(path, "t")
        assert onto.get("C1").synonyms == ("ASA", "acetylsalicylic acid")

    def test_bad_synonyms_type(self, tmp_path):
        path = tmp_path / "onto.jsonl"
        write_jsonl(path, [{"id": "C1", "name": "x", "synonyms": "ASA"}])
        with pytest.raises(MalformedRecord):
            parse_ontology(path, "t")


class TestOntologyContainer:
    def test_lookup_and_membership(self):
        onto = Ontology("t", [Concept(id="C1", name="a"), Concept(id="C2", name="b")])
        assert "C1" in onto and "C9" not in onto
        assert onto.get("C2").name == "b"
        assert get_concept(onto, "C1").id == "C1"

    def test_unknown_id(self):
        onto = Ontology("t", [Concept(id="C1", name="a")])
        with pytest.raises(UnknownId):
            onto.get("missing")

    def test_programmatic_duplicates_rejected(self):
        with pytest.raises(ValueError):
            Ontology("t", [Concept(id="C1", name="a"), Concept(id="C1", name="b")])


class TestParseQueries:
    def test_basic(self, tmp_path):
        path = tmp_path / "q.jsonl"
        write_jsonl(path, [
            {"id": "q1", "mention": "aspirin", "context": "took aspirin", "gold": "C1"},
            {"id": "q2", "mention": "heparin"},
        ])
        queries = parse_queries(path)
        assert [q.id for q in queries] == ["q1", "q2"]
        assert queries[0].gold == "C1"
        assert queries[1].context is None and queries[1].gold is None

    def test_empty_file_is_empty_list(self, tmp_path):
        path = tmp_path / "q.jsonl"
        path.write_text("", encoding="utf-8")
        assert parse_queries(path) == []

    def test_empty_mention_rejected(self, tmp_path):
        path = tmp_path / "q.jsonl"
        write_jsonl(path, [{"id": "q1", "mention": "  "}])
        with pytest.raises(EmptyMention) as exc:
            parse_queries(path)
        assert exc.value.line == 1

    def test_missing_mention(self, tmp_path):
        path = tmp_path / "q.jsonl"
        write_jsonl(path, [{"id": "q1"}])
        with pytest.raises(MissingField):
            parse_queries(path)

    def test_blank_context_dropped(self, tmp_path):
        path = tmp_path / "q.jsonl"
        write_jsonl(path, [{"id": "q1", "mention": "x", "context": "   "}])
        assert parse_queries(path)[0].context is None

    def test_empty_gold_rejected(self, tmp_path):
        path = tmp_path / "q.jsonl"
        write_jsonl(path, [{"id": "q1", "mention": "x", "gold": " "}])
        with pytest.raises(MalformedRecord):
            parse_queries(path)


class TestRoundTrip:
    def test_ontology_round_trip(self, tmp_path, rng):
        onto = synthetic_ontology(rng, 40)
        path = tmp_path / "onto.jsonl"
        write_ontology(path, onto)
        again = parse_ontology(path, onto.tag)
        assert [c for c in again] == [c for c in onto]

    def test_queries_round_trip(self, tmp_path, rng):
        onto = synthetic_ontology(rng, 20)
        queries, _ = queries_for(onto, rng, 15)
        path = tmp_path / "q.jsonl"
        write_queries(path, queries)
        assert parse_queries(path) == queries

    @settings(max_examples=40, deadline=None)
    @given(
        names=st.lists(
            st.text(st.characters(codec="utf-8", exclude_categories=["Cs", "Zl", "Zp"]),
                    min_size=1, max_size=30).filter(lambda t: t.split()),
            min_size=1, max_size=8, unique=True,
        )
    )
    def test_any_printable_names_round_trip(self, tmp_path_factory, names):
        tmp = tmp_path_factory.mktemp("ontorr")
        concepts = [
            Concept(id=f"C{i}", name=" ".join(name.split()), ontology_tag="t")
            for i, name in enumerate(names)
        ]
        path = tmp / "o.jsonl"
        write_ontology(path, Ontology("t", concepts))
        assert [c.name for c in parse_ontology(path, "t")] == [c.name for c in concepts]
