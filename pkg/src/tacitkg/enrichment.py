"""Tacit-knowledge enrichment over a validated base graph.

A dedicated reasoning prompt walks the model through four phases
(observation, hidden-state inference, policy reconstruction, affordance
reasoning); the response is a line-delimited list of assertion records,
each carrying its phase, anchor, prior belief, justification, confidence,
and a small Turtle snippet.  Accepted assertions land in the run's
`:inferred` named graph — never in the observed graph — together with
per-assertion provenance that makes every inferred triple traceable back
to exactly one assertion record.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .costs import TokenUsage
from .gateway import (
    BackendConfig,
    GatewayError,
    RateLimiter,
    TranscriptSource,
    assemble_prompt,
    complete,
)
from .namespaces import ENR, RDF_TYPE, WELL_KNOWN_PREFIXES, XSD_DECIMAL
from .ontology import OntologySchema, schema_closure_check
from .pipeline import (
    STAGE_TRANSPORT,
    ExtractionRun,
    StageFailure,
    inferred_graph_name,
    observed_graph_name,
)
from .rdf import Iri, Literal, RdfGraph, Term, Triple, TurtleParseError, parse_turtle, term_key
from .shapes import ShapeViolation  # noqa: F401  (re-exported for report consumers)
from .store import QuadStore

logger = logging.getLogger(__name__)

PHASE_OBSERVATION = "observation"
PHASE_HIDDEN_STATE = "hidden_state"
PHASE_POLICY = "policy"
PHASE_AFFORDANCE = "affordance"
PHASES = (PHASE_OBSERVATION, PHASE_HIDDEN_STATE, PHASE_POLICY, PHASE_AFFORDANCE)

# The prompt spells the phases out in full; responses may use either form.
_PHASE_ALIASES = {
    "observation": PHASE_OBSERVATION,
    "hidden state inference": PHASE_HIDDEN_STATE,
    "hidden_state": PHASE_HIDDEN_STATE,
    "policy reconstruction": PHASE_POLICY,
    "policy": PHASE_POLICY,
    "affordance reasoning": PHASE_AFFORDANCE,
    "affordance": PHASE_AFFORDANCE,
}

MINT_PLACEHOLDER_PREFIX = "urn:tacit:new:"

ENR_TACIT_ASSERTION = Iri(ENR + "TacitAssertion")
ENR_STATEMENT = Iri(ENR + "Statement")
ENR_PHASE = Iri(ENR + "phase")
ENR_PRIOR_BELIEF = Iri(ENR + "priorBelief")
ENR_JUSTIFICATION = Iri(ENR + "justification")
ENR_CONFIDENCE = Iri(ENR + "confidence")
ENR_ANCHOR = Iri(ENR + "anchor")
ENR_ASSERTS = Iri(ENR + "asserts")
ENR_STMT_SUBJECT = Iri(ENR + "statementSubject")
ENR_STMT_PREDICATE = Iri(ENR + "statementPredicate")
ENR_STMT_OBJECT = Iri(ENR + "statementObject")

_SNIPPET_PREAMBLE = "".join(
    f"@prefix {p}: <{ns}> .\n" for p, ns in sorted(WELL_KNOWN_PREFIXES.items())
)


@dataclass(frozen=True)
class TacitAssertion:
    """One confidence-scored inference attached to a base-graph node."""

    triples: tuple[Triple, ...]
    phase: str
    prior_belief: str
    justification: str
    confidence: float
    anchor: Iri

    def __post_init__(self) -> None:
        if not self.triples:
            raise ValueError("an assertion needs at least one triple")
        if self.phase not in PHASES:
            raise ValueError(f"unknown phase: {self.phase!r}")
        if not self.prior_belief.strip():
            raise ValueError("prior_belief must be non-empty")
        if not self.justification.strip():
            raise ValueError("justification must be non-empty")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence out of [0,1]")


@dataclass(frozen=True)
class RejectedRecord:
    """A response record that failed an invariant, with the reason."""

    line_no: int
    reason: str
    raw: str = ""


@dataclass(frozen=True)
class EnrichedRun:
    base_run_id: str
    assertions: tuple[TacitAssertion, ...]
    inferred_graph: RdfGraph
    usage: TokenUsage
    rejections: tuple[RejectedRecord, ...] = ()


def statement_iri(triple: Triple) -> Iri:
    """Deterministic statement identifier derived from triple content."""
    material = f"{term_key(triple.subject)} {term_key(triple.predicate)} {term_key(triple.object)}"
    digest = hashlib.sha256(material.encode("utf-8")).hexdigest()[:16]
    return Iri(f"urn:stmt:{digest}")


def _strip_fences(text: str) -> str:
    stripped = text.strip()
    if stripped.startswith("```"):
        lines = stripped.splitlines()
        if lines and lines[0].startswith("```"):
            lines = lines[1:]
        if lines and lines[-1].strip() == "```":
            lines = lines[:-1]
        return "\n".join(lines)
    return text


def parse_tacit_response(text: str) -> tuple[list[TacitAssertion], list[RejectedRecord]]:
    """Parse a line-delimited assertion response.

    Each line is one JSON record with fields phase, anchor, prior_belief,
    justification, confidence, and triples (a Turtle snippet; well-known
    prefixes are pre-declared).  Records failing any field invariant are
    rejected individually with a reason; good records are never lost to a
    bad neighbour.
    """
    accepted: list[TacitAssertion] = []
    rejected: list[RejectedRecord] = []
    for line_no, raw_line in enumerate(_strip_fences(text).splitlines(), start=1):
        line = raw_line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            rejected.append(RejectedRecord(line_no, f"invalid JSON: {exc.msg}", line[:120]))
            continue
        if not isinstance(record, dict):
            rejected.append(RejectedRecord(line_no, "record is not an object", line[:120]))
            continue

        missing = [
            name
            for name in ("phase", "anchor", "prior_belief", "justification", "confidence", "triples")
            if name not in record
        ]
        if missing:
            rejected.append(
                RejectedRecord(line_no, "missing field(s): " + ", ".join(missing), line[:120])
            )
            continue

        phase = _PHASE_ALIASES.get(str(record["phase"]).strip().lower())
        if phase is None:
            rejected.append(
                RejectedRecord(line_no, f"unknown phase {record['phase']!r}", line[:120])
            )
            continue

        confidence = record["confidence"]
        if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
            rejected.append(RejectedRecord(line_no, "confidence is not a number", line[:120]))
            continue
        if not 0.0 <= float(confidence) <= 1.0:
            rejected.append(RejectedRecord(line_no, "confidence out of [0,1]", line[:120]))
            continue

        prior_belief = str(record["prior_belief"])
        justification = str(record["justification"])
        if not prior_belief.strip():
            rejected.append(RejectedRecord(line_no, "empty prior_belief", line[:120]))
            continue
        if not justification.strip():
            rejected.append(RejectedRecord(line_no, "empty justification", line[:120]))
            continue

        try:
            anchor = Iri(str(record["anchor"]))
        except ValueError:
            rejected.append(
                RejectedRecord(line_no, f"anchor is not an absolute IRI: {record['anchor']!r}", line[:120])
            )
            continue

        try:
            snippet_graph = parse_turtle(_SNIPPET_PREAMBLE + str(record["triples"]))
        except TurtleParseError as exc:
            rejected.append(RejectedRecord(line_no, f"unparseable triples: {exc}", line[:120]))
            continue
        if len(snippet_graph) == 0:
            rejected.append(RejectedRecord(line_no, "empty triples", line[:120]))
            continue

        accepted.append(
            TacitAssertion(
                triples=tuple(snippet_graph.sorted_triples()),
                phase=phase,
                prior_belief=prior_belief,
                justification=justification,
                confidence=float(confidence),
                anchor=anchor,
            )
        )
    return accepted, rejected


def _iri_whitelist(base_graph: RdfGraph, schema: OntologySchema) -> set[str]:
    allowed = {t.value for t in base_graph.terms() if isinstance(t, Iri)}
    allowed |= schema.classes
    allowed |= schema.properties
    return allowed


def _filter_against_base(
    assertions: Sequence[TacitAssertion],
    base_graph: RdfGraph,
    schema: OntologySchema,
) -> tuple[list[TacitAssertion], list[RejectedRecord]]:
    """Apply the graph-dependent invariants: anchors, IRI closure, novelty."""
    allowed_iris = _iri_whitelist(base_graph, schema)
    base_terms = base_graph.terms()
    base_triples = set(base_graph.triples)
    claimed: set[Triple] = set()
    kept: list[TacitAssertion] = []
    dropped: list[RejectedRecord] = []
    for idx, assertion in enumerate(assertions, start=1):
        if assertion.anchor not in base_terms:
            dropped.append(
                RejectedRecord(idx, f"anchor {assertion.anchor.value} not in base graph")
            )
            continue

        closure = schema_closure_check(RdfGraph(assertion.triples), schema)
        if not closure.compliant:
            bad = sorted(closure.undefined_classes | closure.undefined_properties)
            dropped.append(
                RejectedRecord(idx, "triples use terms outside the ontology: " + ", ".join(bad))
            )
            continue

        foreign = sorted(
            term.value
            for t in assertion.triples
            for term in (t.subject, t.object)
            if isinstance(term, Iri)
            and term.value not in allowed_iris
            and not term.value.startswith(MINT_PLACEHOLDER_PREFIX)
        )
        if foreign:
            dropped.append(
                RejectedRecord(
                    idx,
                    "IRIs neither in the base graph nor newly minted: " + ", ".join(foreign),
                )
            )
            continue

        novel = tuple(
            t for t in assertion.triples if t not in base_triples and t not in claimed
        )
        if not novel:
            dropped.append(
                RejectedRecord(idx, "adds no new content beyond the base graph")
            )
            continue
        claimed.update(novel)
        kept.append(replace(assertion, triples=novel))
    return kept, dropped


def _mint_map(assertions: Sequence[TacitAssertion], run_id: str) -> dict[str, Iri]:
    """Placeholder → minted IRI, numbered by first appearance order."""
    mapping: dict[str, Iri] = {}
    counter = 0
    for assertion in assertions:
        for t in assertion.triples:
            for term in (t.subject, t.object):
                if isinstance(term, Iri) and term.value.startswith(MINT_PLACEHOLDER_PREFIX):
                    if term.value not in mapping:
                        counter += 1
                        mapping[term.value] = Iri(f"urn:tacit:{run_id}:{counter}")
    return mapping


def _remap_term(term: Term, mapping: Mapping[str, Iri]) -> Term:
    if isinstance(term, Iri) and term.value in mapping:
        return mapping[term.value]
    return term


def build_inferred_graph(
    assertions: Sequence[TacitAssertion], run_id: str
) -> tuple[RdfGraph, tuple[TacitAssertion, ...]]:
    """Mint placeholder IRIs and attach per-assertion provenance.

    Returns the inferred graph (content triples + provenance annotations)
    and the assertions with placeholders replaced by their minted IRIs.
    Pure function: same assertions and run id, same graph.
    """
    mapping = _mint_map(assertions, run_id)
    triples: set[Triple] = set()
    final: list[TacitAssertion] = []
    for idx, assertion in enumerate(assertions, start=1):
        remapped = tuple(
            Triple(
                _remap_term(t.subject, mapping),
                t.predicate,
                _remap_term(t.object, mapping),
            )
            for t in assertion.triples
        )
        final.append(replace(assertion, triples=remapped))

        node = Iri(f"urn:assertion:{run_id}:{idx}")
        triples.add(Triple(node, Iri(RDF_TYPE), ENR_TACIT_ASSERTION))
        triples.add(Triple(node, ENR_PHASE, Literal(assertion.phase)))
        triples.add(Triple(node, ENR_PRIOR_BELIEF, Literal(assertion.prior_belief)))
        triples.add(Triple(node, ENR_JUSTIFICATION, Literal(assertion.justification)))
        triples.add(
            Triple(node, ENR_CONFIDENCE, Literal(str(assertion.confidence), datatype=XSD_DECIMAL))
        )
        triples.add(Triple(node, ENR_ANCHOR, assertion.anchor))
        for t in remapped:
            stmt = statement_iri(t)
            triples.add(t)
            triples.add(Triple(node, ENR_ASSERTS, stmt))
            triples.add(Triple(stmt, Iri(RDF_TYPE), ENR_STATEMENT))
            triples.add(Triple(stmt, ENR_STMT_SUBJECT, t.subject))
            triples.add(Triple(stmt, ENR_STMT_PREDICATE, t.predicate))
            triples.add(Triple(stmt, ENR_STMT_OBJECT, t.object))

    prefixes = dict(WELL_KNOWN_PREFIXES)
    return RdfGraph(triples, prefixes), tuple(final)


def run_enrichment(
    base: ExtractionRun,
    transcript: TranscriptSource,
    config: BackendConfig,
    schema: OntologySchema,
    store: QuadStore,
    templates: Optional[Mapping[str, str]] = None,
    limiter: Optional[RateLimiter] = None,
) -> EnrichedRun:
    """Enrich one stored run; writes only the `:inferred` named graph.

    Enrichment is transcript-only regardless of the backend's modality.
    Zero usable assertions is not an error: the result simply carries an
    empty inferred graph and the observed graph is left untouched.
    """
    from .rdf import serialize_turtle

    observed = store.get_graph(observed_graph_name(base.run_id))
    if observed is None:
        raise ValueError(f"run {base.run_id!r} has no stored observed graph")

    bundle = assemble_prompt(
        schema.source_text,
        transcript,
        "enrichment",
        base_graph_text=serialize_turtle(base.graph),
        templates=templates,
    )
    try:
        response = complete(config, bundle, limiter=limiter)
    except GatewayError as exc:
        raise StageFailure(
            STAGE_TRANSPORT, str(exc), transcript.source_id, base.run_id
        ) from exc
    usage = TokenUsage(response.input_tokens, response.output_tokens)

    parsed, rejected = parse_tacit_response(response.text)
    kept, dropped = _filter_against_base(parsed, base.graph, schema)
    rejections = tuple(rejected) + tuple(dropped)
    for rejection in rejections:
        logger.warning(
            "run %s: dropped assertion record %d: %s",
            base.run_id,
            rejection.line_no,
            rejection.reason,
        )
    if not kept:
        logger.warning("run %s: enrichment produced no usable assertions", base.run_id)
        return EnrichedRun(
            base_run_id=base.run_id,
            assertions=(),
            inferred_graph=RdfGraph(),
            usage=usage,
            rejections=rejections,
        )

    inferred_graph, final = build_inferred_graph(kept, base.run_id)
    store.put_graph(inferred_graph_name(base.run_id), inferred_graph)
    logger.info(
        "run %s: stored %d inferred triples from %d assertions",
        base.run_id,
        len(inferred_graph),
        len(final),
    )
    return EnrichedRun(
        base_run_id=base.run_id,
        assertions=final,
        inferred_graph=inferred_graph,
        usage=usage,
        rejections=rejections,
    )


def strip_inferred(store: QuadStore, run_id: str) -> RdfGraph:
    """The observed graph alone, exactly as stored (inferred content excluded)."""
    observed = store.get_graph(observed_graph_name(run_id))
    if observed is None:
        raise KeyError(f"no observed graph stored for run {run_id!r}")
    return observed


def assertion_confidence_filter(
    assertions: Iterable[TacitAssertion], threshold: float
) -> list[TacitAssertion]:
    """Query-time confidence filter; storage always keeps everything."""
    return [a for a in assertions if a.confidence >= threshold]
