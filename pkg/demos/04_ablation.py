"""
Ablating the prompt configuration
=================================

One retrieval pass, several prompt configurations: each grid row toggles
what the ranking prompt gets to see. Hiding candidate descriptions or
the query's context measurably hurts a ranker that depends on them,
which is exactly what the ablation table makes visible.
"""

import json
import tempfile
from pathlib import Path

from conceptlinker import (
    LOCAL_PROVIDER_ID,
    KeywordMockEndpoint,
    LocalTrigramProvider,
    ProviderSpec,
    build_memory,
    parse_gold,
    parse_grid,
    parse_ontology,
    parse_queries,
    render_report,
    run_ablation,
    write_report,
)

DATA = Path(__file__).parent / "data"

provider = LocalTrigramProvider(ProviderSpec(LOCAL_PROVIDER_ID, "trigram-d256-s0", 256))
ontology = parse_ontology(DATA / "ontology.jsonl", tag="demo")
memory = build_memory(ontology, provider)
queries = parse_queries(DATA / "queries.jsonl")
gold = parse_gold(DATA / "gold.jsonl")
grid = parse_grid(DATA / "grid.jsonl")

rows = run_ablation(queries, gold, ontology, memory, provider,
                    KeywordMockEndpoint(), grid, k=5)

# Every row shares one retrieval pass; the digest proves it.
assert len({row.retrieval_digest for row in rows}) == 1

report = {
    "k": 5,
    "retrieval_digest": rows[0].retrieval_digest,
    "rows": [row.to_dict() for row in rows],
}
print(render_report(report))

with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp) / "ablation.json"
    write_report(out, report)
    stored = json.loads(out.read_text())
    print(f"\nwrote {len(stored['rows'])} rows to {out.name} "
          f"(digest {stored['retrieval_digest'][:12]}...)")
