"""Shared fixtures: synthetic corpora, providers, and acceptance reporting."""

from __future__ import annotations

import random
import string

import pytest

from conceptlinker import (
    LOCAL_PROVIDER_ID,
    Concept,
    LocalTrigramProvider,
    Ontology,
    ProviderSpec,
    Query,
)

MASTER_SEED = 20260823


@pytest.fixture
def rng() -> random.Random:
    return random.Random(MASTER_SEED)


def make_word(rng: random.Random, low: int = 4, high: int = 9) -> str:
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(rng.randint(low, high)))


def make_sentence(rng: random.Random, n_words: int) -> str:
    return " ".join(make_word(rng) for _ in range(n_words))


def synthetic_ontology(
    rng: random.Random,
    n_concepts: int,
    described_fraction: float = 0.6,
    tag: str = "synthetic",
) -> Ontology:
    """Random distinct two-word names; a fraction carry descriptions."""
    concepts = []
    names: set[str] = set()
    for i in range(n_concepts):
        while True:
            name = f"{make_word(rng)} {make_word(rng)}"
            if name not in names:
                names.add(name)
                break
        description = (
            make_sentence(rng, rng.randint(6, 14))
            if rng.random() < described_fraction
            else None
        )
        concepts.append(
            Concept(id=f"C{i:04d}", name=name, description=description, ontology_tag=tag)
        )
    return Ontology(tag, concepts)


def perturb(rng: random.Random, text: str) -> str:
    """Light noise: drop a character or swap two adjacent ones."""
    if len(text) < 4:
        return text
    i = rng.randrange(1, len(text) - 2)
    if rng.random() < 0.5:
        return text[:i] + text[i + 1 :]
    return text[:i] + text[i + 1] + text[i] + text[i + 2 :]


def queries_for(
    ontology: Ontology,
    rng: random.Random,
    n_queries: int,
    *,
    with_context: bool = True,
    noisy: bool = False,
) -> tuple[list[Query], dict[str, str]]:
    """Queries drawn from concept names, plus the gold map they imply."""
    concepts = list(ontology)
    queries: list[Query] = []
    gold: dict[str, str] = {}
    for i in range(n_queries):
        concept = rng.choice(concepts)
        mention = perturb(rng, concept.name) if noisy else concept.name
        context = concept.description if with_context and concept.description else None
        query_id = f"q{i:04d}"
        queries.append(Query(id=query_id, mention=mention, context=context))
        gold[query_id] = concept.id
    return queries, gold


def local_provider(dim: int = 64, seed: int = 0) -> LocalTrigramProvider:
    spec = ProviderSpec(LOCAL_PROVIDER_ID, f"trigram-d{dim}-s{seed}", dim, seed=seed)
    return LocalTrigramProvider(spec)


# --- acceptance criteria reporting ------------------------------------------

_config = None


def pytest_configure(config):
    # the terminal reporter registers after conftest hooks run, so it has
    # to be looked up lazily at report time
    global _config
    _config = config


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when != "call" or "test_acceptance" not in report.nodeid or _config is None:
        return
    terminal = _config.pluginmanager.get_plugin("terminalreporter")
    if terminal is None:
        return
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    terminal.write_line(f"ACCEPTANCE {status}: {report.nodeid.split('::')[-1]}")
