"""Retrieve-and-rank concept linking over ontology embeddings.

Concepts are embedded in two variants (name alone, and name with its
description), stored in a persistent vector memory, retrieved by cosine
similarity, and re-ranked by a completion endpoint choosing among numbered
options with a none-of-the-above escape. Evaluation covers accuracy,
precision/recall/F1, hits@k, and prompt-configuration ablations.
"""

from .embedding import (
    API_KEY_ENV,
    LOCAL_PROVIDER_ID,
    REMOTE_PROVIDER_ID,
    LocalTrigramProvider,
    ProviderSpec,
    RemoteProvider,
    VectorCache,
    embed_batch,
    embed_text,
    local_embed,
    make_provider,
)
from .errors import (
    LinkerError,
    ServiceError,
    TranscriptMiss,
    TransportError,
    ValidationError,
)
from .evaluation import (
    AblationArm,
    AblationRow,
    GoldPair,
    MetricsReport,
    Prediction,
    accuracy,
    f1_from,
    gold_map,
    hits_at_k,
    parse_gold,
    parse_grid,
    parse_predictions,
    parse_retrievals,
    prf1,
    render_report,
    retrieval_digest,
    run_ablation,
    score_predictions,
    score_retrievals,
    write_gold,
    write_predictions,
    write_report,
    write_retrievals,
)
from .llm import (
    ExactMatchMockEndpoint,
    HttpCompletionEndpoint,
    KeywordMockEndpoint,
    ReplayEndpoint,
    ScriptedEndpoint,
    TranscriptStore,
    parse_prompt,
)
from .memory import (
    Candidate,
    Memory,
    MemoryEntry,
    Variant,
    build_memory,
    concept_text,
    cosine,
    load_memory,
    query_text,
    retrieve_top_k,
    save_memory,
)
from .ontology import (
    Concept,
    Ontology,
    Query,
    get_concept,
    parse_ontology,
    parse_queries,
    write_ontology,
    write_queries,
)
from .pipeline import LinkJournal, embed_queries, link_queries, retrieve_for_queries
from .ranker import (
    LinkResult,
    OneShotExample,
    PromptConfig,
    Selection,
    SelectionKind,
    build_prompt,
    fit_prompt,
    parse_response,
    prompt_digest,
    rank,
)

__version__ = "0.1.0"

__all__ = [
    "API_KEY_ENV",
    "AblationArm",
    "AblationRow",
    "Candidate",
    "Concept",
    "ExactMatchMockEndpoint",
    "GoldPair",
    "HttpCompletionEndpoint",
    "KeywordMockEndpoint",
    "LinkJournal",
    "LinkResult",
    "LinkerError",
    "LocalTrigramProvider",
    "LOCAL_PROVIDER_ID",
    "Memory",
    "MemoryEntry",
    "MetricsReport",
    "OneShotExample",
    "Ontology",
    "Prediction",
    "PromptConfig",
    "ProviderSpec",
    "Query",
    "REMOTE_PROVIDER_ID",
    "RemoteProvider",
    "ReplayEndpoint",
    "ScriptedEndpoint",
    "Selection",
    "SelectionKind",
    "ServiceError",
    "TranscriptMiss",
    "TranscriptStore",
    "TransportError",
    "ValidationError",
    "Variant",
    "VectorCache",
    "accuracy",
    "build_memory",
    "build_prompt",
    "concept_text",
    "cosine",
    "embed_batch",
    "embed_queries",
    "embed_text",
    "f1_from",
    "fit_prompt",
    "get_concept",
    "gold_map",
    "hits_at_k",
    "link_queries",
    "load_memory",
    "local_embed",
    "make_provider",
    "parse_gold",
    "parse_grid",
    "parse_ontology",
    "parse_predictions",
    "parse_prompt",
    "parse_queries",
    "parse_response",
    "parse_retrievals",
    "prf1",
    "prompt_digest",
    "query_text",
    "rank",
    "render_report",
    "retrieval_digest",
    "retrieve_for_queries",
    "retrieve_top_k",
    "run_ablation",
    "save_memory",
    "score_predictions",
    "score_retrievals",
    "write_gold",
    "write_ontology",
    "write_predictions",
    "write_queries",
    "write_report",
    "write_retrievals",
]
