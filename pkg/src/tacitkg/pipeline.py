"""Extraction pipeline: source -> prompt -> model -> parse -> checks -> store.

Each run is an independent unit: it assembles the extraction prompt around
the reference ontology, calls the backend, parses the returned Turtle, and
gates the graph through the schema closure check, shape validation, and the
global consistency check.  Only graphs that pass all three are skolemized
and stored; any failure surfaces as a :class:`StageFailure` naming the
stage, and a fatal global report stores nothing.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .costs import TokenUsage
from .gateway import (
    BackendConfig,
    GatewayError,
    RateLimiter,
    Source,
    TranscriptSource,
    VideoSource,
    assemble_prompt,
    complete,
    extract_turtle_block,
)
from .ontology import ComplianceReport, OntologySchema, schema_closure_check
from .rdf import RdfGraph, TurtleParseError, parse_turtle, term_key
from .rdf.isomorphism import skolemize_blank_nodes
from .shapes import ShapeSet, ValidationReport, global_consistency, validate
from .store import QuadStore

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

STAGE_PROMPT = "prompt"
STAGE_TRANSPORT = "transport"
STAGE_PARSE = "parse"
STAGE_COMPLIANCE = "compliance"
STAGE_SHAPES = "shapes"
STAGE_GLOBAL = "global"

_TIMESTAMP_PREFIX = re.compile(r"^\[\d{1,2}:\d{2}(?::\d{2})?\]\s*", re.MULTILINE)
_SLUG_RE = re.compile(r"[^a-z0-9]+")


class StageFailure(Exception):
    """A pipeline stage failed; carries the stage name for status mapping."""

    def __init__(self, stage: str, message: str, source_id: str = "", run_id: str = "") -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message
        self.source_id = source_id
        self.run_id = run_id


@dataclass(frozen=True)
class ExtractionRun:
    """One validated, stored extraction result."""

    run_id: str
    source_id: str
    model_id: str
    modality: str
    graph: RdfGraph
    compliance: ComplianceReport
    shapes_report: ValidationReport
    global_report: ValidationReport
    usage: TokenUsage
    started: float
    finished: float


@dataclass(frozen=True)
class RunFailure:
    run_id: str
    source_id: str
    stage: str
    message: str


@dataclass(frozen=True)
class BatchResult:
    runs: tuple[ExtractionRun, ...]
    failures: tuple[RunFailure, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def observed_graph_name(run_id: str) -> str:
    return f"run:{run_id}:observed"


def inferred_graph_name(run_id: str) -> str:
    return f"run:{run_id}:inferred"


def slugify(text: str) -> str:
    """Lowercased, hyphen-separated form safe for run ids and graph names."""
    slug = _SLUG_RE.sub("-", text.lower()).strip("-")
    return slug or "x"


def make_run_id(source_id: str, model_id: str, repetition: int) -> str:
    return f"{slugify(source_id)}-{slugify(model_id)}-r{repetition}"


def strip_timestamp_prefixes(text: str) -> str:
    """Drop leading `[mm:ss]` markers; prompt assembly ignores them."""
    return _TIMESTAMP_PREFIX.sub("", text)


def stable_skolem_key(source_id: str, model_id: str, graph: RdfGraph) -> str:
    """Content-derived skolem key, identical across repeated identical runs.

    Derived from the source, the model, and the parsed graph content (not
    from the run id), so repetitions of a deterministic backend yield
    byte-identical stored graphs.
    """
    lines = "\n".join(
        f"{term_key(t.subject)} {term_key(t.predicate)} {term_key(t.object)}"
        for t in graph.sorted_triples()
    )
    material = f"{source_id}\n{model_id}\n{lines}"
    return hashlib.sha256(material.encode("utf-8")).hexdigest()[:12]


def run_extraction(
    source: Source,
    config: BackendConfig,
    schema: OntologySchema,
    shapes: ShapeSet,
    store: QuadStore,
    run_id: Optional[str] = None,
    retries_on_invalid: int = 0,
    limiter: Optional[RateLimiter] = None,
) -> ExtractionRun:
    """Run the extraction chain for one source and store the result.

    By default an invalid model output fails the run immediately;
    `retries_on_invalid` opts in to re-generation (useless on the replay
    backend, which is deterministic).
    """
    run_id = run_id or make_run_id(source.source_id, config.model_id, 1)
    started = time.time()

    try:
        bundle = assemble_prompt(schema.source_text, source, "extraction")
    except ValueError as exc:
        raise StageFailure(STAGE_PROMPT, str(exc), source.source_id, run_id) from exc

    usage = TokenUsage()
    last_invalid: Optional[StageFailure] = None
    for attempt in range(retries_on_invalid + 1):
        try:
            response = complete(config, bundle, limiter=limiter)
        except GatewayError as exc:
            raise StageFailure(STAGE_TRANSPORT, str(exc), source.source_id, run_id) from exc
        usage = usage + TokenUsage(response.input_tokens, response.output_tokens)

        try:
            graph = parse_turtle(extract_turtle_block(response.text))
        except TurtleParseError as exc:
            last_invalid = StageFailure(STAGE_PARSE, str(exc), source.source_id, run_id)
            continue

        compliance = schema_closure_check(graph, schema)
        if not compliance.compliant:
            undefined = sorted(compliance.undefined_classes | compliance.undefined_properties)
            last_invalid = StageFailure(
                STAGE_COMPLIANCE,
                "graph uses terms outside the reference ontology: " + ", ".join(undefined),
                source.source_id,
                run_id,
            )
            continue

        shapes_report = validate(graph, shapes)
        if not shapes_report.conforms:
            first = "; ".join(v.message for v in shapes_report.violations[:3])
            last_invalid = StageFailure(
                STAGE_SHAPES,
                f"{len(shapes_report.violations)} shape violation(s): {first}",
                source.source_id,
                run_id,
            )
            continue

        global_report = global_consistency(graph, schema)
        if global_report.fatal:
            # Fatal: the run is interrupted and nothing reaches the store.
            last_invalid = StageFailure(
                STAGE_GLOBAL, global_report.violations[0].message, source.source_id, run_id
            )
            continue

        key = stable_skolem_key(source.source_id, config.model_id, graph)
        stored_graph = skolemize_blank_nodes(graph, key)
        store.put_graph(observed_graph_name(run_id), stored_graph)
        finished = time.time()
        logger.info(
            "run %s: stored %d triples (attempt %d)", run_id, len(stored_graph), attempt + 1
        )
        return ExtractionRun(
            run_id=run_id,
            source_id=source.source_id,
            model_id=config.model_id,
            modality=config.modality,
            graph=stored_graph,
            compliance=compliance,
            shapes_report=shapes_report,
            global_report=global_report,
            usage=usage,
            started=started,
            finished=finished,
        )
    assert last_invalid is not None
    raise last_invalid


def run_batch(
    sources: Sequence[Source],
    config: BackendConfig,
    schema: OntologySchema,
    shapes: ShapeSet,
    store: QuadStore,
    repetitions: int = 5,
    retries_on_invalid: int = 0,
    diagnostics_dir: Optional[Union[str, Path]] = None,
    limiter: Optional[RateLimiter] = None,
) -> BatchResult:
    """Run every (source x repetition) independently.

    A failed run never aborts the others; failures are collected (and
    written to the diagnostics directory when one is given) while results
    keep (source, repetition) order.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    runs: list[ExtractionRun] = []
    failures: list[RunFailure] = []
    for source in sources:
        for rep in range(1, repetitions + 1):
            run_id = make_run_id(source.source_id, config.model_id, rep)
            try:
                runs.append(
                    run_extraction(
                        source,
                        config,
                        schema,
                        shapes,
                        store,
                        run_id=run_id,
                        retries_on_invalid=retries_on_invalid,
                        limiter=limiter,
                    )
                )
            except StageFailure as exc:
                logger.warning("run %s failed: %s", run_id, exc)
                failure = RunFailure(
                    run_id=run_id,
                    source_id=source.source_id,
                    stage=exc.stage,
                    message=exc.message,
                )
                failures.append(failure)
                if diagnostics_dir is not None:
                    _write_diagnostic(Path(diagnostics_dir), failure)
    return BatchResult(runs=tuple(runs), failures=tuple(failures))


def _write_diagnostic(directory: Path, failure: RunFailure) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{failure.run_id}.json"
    path.write_text(
        json.dumps(
            {
                "run_id": failure.run_id,
                "source_id": failure.source_id,
                "stage": failure.stage,
                "message": failure.message,
                "recorded_at": time.time(),
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


@dataclass(frozen=True)
class LoadedSource:
    """One manifest entry: the source plus its video length in minutes."""

    source: Source
    minutes: float = 1.0


def load_sources(manifest_path: Union[str, Path]) -> list[LoadedSource]:
    """Read a TOML source manifest.

    Each `[[sources]]` entry names an id plus either a `transcript` file
    path (relative to the manifest) or a `video` reference.  Timestamp
    prefixes in transcripts are stripped for prompting.
    """
    manifest_path = Path(manifest_path)
    with open(manifest_path, "rb") as handle:
        data = tomllib.load(handle)
    entries = data.get("sources")
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"{manifest_path}: no [[sources]] entries found")
    loaded: list[LoadedSource] = []
    for entry in entries:
        source_id = entry.get("id")
        if not source_id:
            raise ValueError(f"{manifest_path}: source entry without an id")
        minutes = float(entry.get("minutes", 1.0))
        if "transcript" in entry:
            text = (manifest_path.parent / entry["transcript"]).read_text(encoding="utf-8")
            source: Source = TranscriptSource(source_id, strip_timestamp_prefixes(text))
        elif "video" in entry:
            source = VideoSource(
                source_id, entry["video"], entry.get("media_type", "video/mp4")
            )
        else:
            raise ValueError(
                f"{manifest_path}: source {source_id!r} needs a transcript or video field"
            )
        loaded.append(LoadedSource(source=source, minutes=minutes))
    return loaded
