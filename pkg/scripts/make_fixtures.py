#!/usr/bin/env python3
"""Regenerate the replay fixtures from the editable sources.

Reads the hand-written response material under scripts/fixture_sources/
(one directory per corpus source: graph.ttl for the extraction answer,
enrichment.jsonl for the enrichment answer), wraps it the way a chat
model would return it, and writes keyed fixture files into
data/fixtures/replay/ plus an index.json mapping human names to keys.

Token counts are estimated from the real assembled prompt and response
lengths so the cost report stays plausible.  Run after editing any
transcript, template, or fixture source:

    python3 scripts/make_fixtures.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from tacitkg.gateway import (  # noqa: E402
    STAGE_ENRICHMENT,
    STAGE_EXTRACTION,
    assemble_prompt,
    fixture_key,
)
from tacitkg.pipeline import load_sources  # noqa: E402
from tacitkg.rdf import parse_turtle, serialize_turtle  # noqa: E402

MODEL_ID = "Gemini 3.1 Pro"

EXTRACTION_PROSE = """\
I read the transcript as one linear procedure and mapped every narrated
action to an operation, keeping only individuals that instantiate the
reference ontology. Tools are attached only where the narrator names
them explicitly.

```turtle
{turtle}
```

Every step is chained in both directions and the process declares its
first and last step.
"""


def estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4)


def main() -> int:
    fixtures_dir = REPO / "data" / "fixtures" / "replay"
    fixtures_dir.mkdir(parents=True, exist_ok=True)
    ontology_text = (REPO / "src/tacitkg/resources/ontology.ttl").read_text(encoding="utf-8")
    sources = load_sources(REPO / "data" / "sources.toml")

    index: dict[str, str] = {}
    for entry in sources:
        source = entry.source
        src_dir = REPO / "scripts" / "fixture_sources" / source.source_id
        turtle = (src_dir / "graph.ttl").read_text(encoding="utf-8").strip()
        # Normalise through the parser so the fixture is guaranteed well formed.
        graph = parse_turtle(turtle)

        extraction_text = EXTRACTION_PROSE.format(turtle=turtle)
        bundle = assemble_prompt(ontology_text, source, STAGE_EXTRACTION)
        key = fixture_key(MODEL_ID, STAGE_EXTRACTION, source)
        (fixtures_dir / f"{key}.json").write_text(
            json.dumps(
                {
                    "text": extraction_text,
                    "input_tokens": estimate_tokens(bundle.system_text),
                    "output_tokens": estimate_tokens(extraction_text),
                    "model_id": MODEL_ID,
                    "latency_ms": 2400,
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        index[f"{source.source_id}/{STAGE_EXTRACTION}"] = key

        jsonl = (src_dir / "enrichment.jsonl").read_text(encoding="utf-8").strip()
        enrichment_text = f"```jsonl\n{jsonl}\n```\n"
        bundle = assemble_prompt(
            ontology_text,
            source,
            STAGE_ENRICHMENT,
            base_graph_text=serialize_turtle(graph),
        )
        key = fixture_key(MODEL_ID, STAGE_ENRICHMENT, source)
        (fixtures_dir / f"{key}.json").write_text(
            json.dumps(
                {
                    "text": enrichment_text,
                    "input_tokens": estimate_tokens(bundle.system_text),
                    "output_tokens": estimate_tokens(enrichment_text),
                    "model_id": MODEL_ID,
                    "latency_ms": 3100,
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        index[f"{source.source_id}/{STAGE_ENRICHMENT}"] = key

    (fixtures_dir / "index.json").write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {len(index)} fixtures to {fixtures_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
