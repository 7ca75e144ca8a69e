"""Entity-level evaluation: gold loading, matching, P/R/F1, deltas, stability.

Extracted graphs are compared against manually annotated gold operations.
Operations are ordered by the step-sequence walk so that gold indices and
extracted operations align deterministically; matching happens on
normalized strings (case folding, punctuation stripping, optional synonym
classes) either per aligned operation or pooled per procedure.
"""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .namespaces import RDF_TYPE, RDFS_LABEL, local_name
from .ontology import OntologySchema, sequence_check
from .rdf import Iri, Literal, RdfGraph, Term, graph_isomorphic, term_key

logger = logging.getLogger(__name__)

CATEGORY_TOOLS = "tools"
CATEGORY_ARTIFACTS = "artifacts"
CATEGORIES = (CATEGORY_TOOLS, CATEGORY_ARTIFACTS)

MODE_OPERATION = "operation_level"
MODE_PROCEDURE = "procedure_level"

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})


class EvaluationError(ValueError):
    """Raised when inputs cannot be evaluated (bad gold file, broken ordering)."""


@dataclass(frozen=True)
class GoldOperation:
    index: int
    description: str
    tools: frozenset[str]
    artifacts: frozenset[str]

    def entities(self, category: str) -> frozenset[str]:
        return self.tools if category == CATEGORY_TOOLS else self.artifacts


@dataclass(frozen=True)
class GoldAnnotation:
    source_id: str
    operations: tuple[GoldOperation, ...]

    def __post_init__(self) -> None:
        for pos, op in enumerate(self.operations):
            if op.index != pos:
                raise EvaluationError(
                    f"gold indices must be contiguous from 0; found {op.index} at position {pos}"
                )
            for entity in op.tools | op.artifacts:
                if not entity.strip():
                    raise EvaluationError(f"operation {op.index} has an empty entity string")


@dataclass(frozen=True)
class MatchCounts:
    category: str
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn) < 0:
            raise ValueError("match counts must be non-negative")

    def __add__(self, other: "MatchCounts") -> "MatchCounts":
        if other.category != self.category:
            raise ValueError("cannot add counts across categories")
        return MatchCounts(
            self.category, self.tp + other.tp, self.fp + other.fp, self.fn + other.fn
        )


@dataclass(frozen=True)
class PrfScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class OperationBreakdown:
    index: int
    counts: Mapping[str, MatchCounts]

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", dict(self.counts))


@dataclass(frozen=True)
class CategoryMetrics:
    counts: MatchCounts
    scores: PrfScores


@dataclass(frozen=True)
class MetricsReport:
    source_id: str
    mode: str
    categories: Mapping[str, CategoryMetrics]
    per_operation: tuple[OperationBreakdown, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "categories", dict(self.categories))

    def category(self, name: str) -> CategoryMetrics:
        return self.categories[name]


@dataclass(frozen=True)
class DeltaReport:
    """after − before, per category."""

    source_id: str
    mode: str
    deltas: Mapping[str, PrfScores]

    def __post_init__(self) -> None:
        object.__setattr__(self, "deltas", dict(self.deltas))


@dataclass(frozen=True)
class Normalizer:
    """String canonicalization applied before set matching.

    Synonym classes map a canonical form to its variants; classes must be
    disjoint so lookup is unambiguous.  Variants and canonicals are matched
    after base normalization.
    """

    case_fold: bool = True
    strip_punctuation: bool = True
    synonym_map: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "synonym_map", {k: frozenset(v) for k, v in self.synonym_map.items()}
        )
        reverse: dict[str, str] = {}
        for canonical, variants in sorted(self.synonym_map.items()):
            for member in {canonical} | set(variants):
                key = self._base(member)
                if key in reverse and reverse[key] != canonical:
                    raise ValueError(
                        f"synonym classes are not disjoint: {member!r} appears in "
                        f"{reverse[key]!r} and {canonical!r}"
                    )
                reverse[key] = canonical
        object.__setattr__(self, "_reverse", reverse)

    def _base(self, text: str) -> str:
        if self.case_fold:
            text = text.casefold()
        if self.strip_punctuation:
            text = text.translate(_PUNCT_TABLE)
        return " ".join(text.split())

    def normalize(self, text: str) -> str:
        base = self._base(text)
        return getattr(self, "_reverse").get(base, base)

    def normalize_set(self, entities: Iterable[str]) -> frozenset[str]:
        return frozenset(self.normalize(e) for e in entities if e.strip())


@dataclass(frozen=True)
class OperationEntities:
    """Tools and artifacts attached to one operation, in walk order."""

    operation: Iri
    description: str
    tools: frozenset[str]
    artifacts: frozenset[str]

    def entities(self, category: str) -> frozenset[str]:
        return self.tools if category == CATEGORY_TOOLS else self.artifacts


def load_gold(path: Union[str, Path]) -> GoldAnnotation:
    """Read a gold annotation file (JSON: source_id + ordered operations)."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise EvaluationError(f"{path}: not valid JSON: {exc.msg}") from exc
    try:
        operations = tuple(
            GoldOperation(
                index=int(entry["index"]),
                description=str(entry.get("description", "")),
                tools=frozenset(str(t) for t in entry.get("tools", [])),
                artifacts=frozenset(str(a) for a in entry.get("artifacts", [])),
            )
            for entry in data["operations"]
        )
        return GoldAnnotation(source_id=str(data["source_id"]), operations=operations)
    except (KeyError, TypeError) as exc:
        raise EvaluationError(f"{path}: malformed gold annotation: {exc}") from exc


def _labels(graph: RdfGraph, node: Term) -> frozenset[str]:
    found = {
        t.object.lexical
        for t in graph.match(node, Iri(RDFS_LABEL), None)
        if isinstance(t.object, Literal)
    }
    if not found and isinstance(node, Iri):
        found = {local_name(node.value)}
    return frozenset(found)


def extract_entities(graph: RdfGraph, schema: OntologySchema) -> list[OperationEntities]:
    """Per-operation tool/artifact label sets, in sequence-walk order.

    Processes are visited in canonical order; within a process, steps follow
    the nextStep chain from the first step; within a step, operations come
    in canonical term order.  A graph with sequence violations has no
    defined walk and is rejected.
    """
    violations = sequence_check(graph, schema)
    if violations:
        raise EvaluationError(
            "sequence violations make operation ordering undefined: "
            + "; ".join(str(v) for v in violations[:3])
        )

    process_class = schema.class_by_local("Process")
    first_prop = schema.property_by_local("firstStep")
    next_prop = schema.property_by_local("nextStep")
    has_op = schema.property_by_local("hasOperation")
    uses_tool = schema.property_by_local("usesTool")
    affects = schema.property_by_local("affectsArtifact")
    if None in (process_class, first_prop, next_prop, has_op, uses_tool, affects):
        raise EvaluationError("schema lacks the procedural vocabulary needed for evaluation")

    results: list[OperationEntities] = []
    processes = sorted(graph.subjects(Iri(RDF_TYPE), Iri(process_class)), key=term_key)
    for process in processes:
        firsts = sorted(graph.objects(process, Iri(first_prop)), key=term_key)
        steps: list[Term] = []
        seen: set[Term] = set()
        node = firsts[0] if firsts else None
        while node is not None and node not in seen:
            steps.append(node)
            seen.add(node)
            successors = graph.objects(node, Iri(next_prop))
            node = next(iter(successors)) if successors else None
        for step in steps:
            for op in sorted(graph.objects(step, Iri(has_op)), key=term_key):
                tools = frozenset(
                    label
                    for target in graph.objects(op, Iri(uses_tool))
                    for label in _labels(graph, target)
                )
                artifacts = frozenset(
                    label
                    for target in graph.objects(op, Iri(affects))
                    for label in _labels(graph, target)
                )
                description = next(iter(sorted(_labels(graph, op))), "")
                results.append(
                    OperationEntities(
                        operation=op if isinstance(op, Iri) else Iri("urn:op:anonymous"),
                        description=description,
                        tools=tools,
                        artifacts=artifacts,
                    )
                )
    return results


def match_entities(
    extracted: Sequence[OperationEntities],
    gold: GoldAnnotation,
    norm: Optional[Normalizer] = None,
    mode: str = MODE_OPERATION,
) -> tuple[dict[str, MatchCounts], tuple[OperationBreakdown, ...]]:
    """Set-match extracted entities against gold, per category.

    operation_level aligns operations by index (unaligned tails still count:
    extra extracted operations contribute false positives, extra gold
    operations false negatives).  procedure_level pools entity sets across
    all operations before matching.
    """
    if mode not in (MODE_OPERATION, MODE_PROCEDURE):
        raise EvaluationError(f"unknown matching mode: {mode!r}")
    norm = norm or Normalizer()

    totals = {c: MatchCounts(c) for c in CATEGORIES}
    breakdown: list[OperationBreakdown] = []

    if mode == MODE_PROCEDURE:
        counts = {}
        for category in CATEGORIES:
            ext = frozenset(
                e for op in extracted for e in norm.normalize_set(op.entities(category))
            )
            gld = frozenset(
                e for op in gold.operations for e in norm.normalize_set(op.entities(category))
            )
            counts[category] = MatchCounts(
                category, tp=len(ext & gld), fp=len(ext - gld), fn=len(gld - ext)
            )
        return counts, (OperationBreakdown(index=0, counts=counts),)

    span = max(len(extracted), len(gold.operations))
    for i in range(span):
        op_counts: dict[str, MatchCounts] = {}
        for category in CATEGORIES:
            ext = (
                norm.normalize_set(extracted[i].entities(category))
                if i < len(extracted)
                else frozenset()
            )
            gld = (
                norm.normalize_set(gold.operations[i].entities(category))
                if i < len(gold.operations)
                else frozenset()
            )
            counts = MatchCounts(
                category, tp=len(ext & gld), fp=len(ext - gld), fn=len(gld - ext)
            )
            op_counts[category] = counts
            totals[category] = totals[category] + counts
        breakdown.append(OperationBreakdown(index=i, counts=op_counts))
    return totals, tuple(breakdown)


def compute_prf(counts: MatchCounts) -> PrfScores:
    """Precision/recall/F1 with the vacuous-task convention 0/0 -> 1.0."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 1.0
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PrfScores(precision=precision, recall=recall, f1=f1)


def evaluate_graph(
    graph: RdfGraph,
    gold: GoldAnnotation,
    schema: OntologySchema,
    norm: Optional[Normalizer] = None,
    mode: str = MODE_OPERATION,
) -> MetricsReport:
    """extract → match → score, producing the full report for one graph."""
    extracted = extract_entities(graph, schema)
    totals, breakdown = match_entities(extracted, gold, norm, mode)
    categories = {
        name: CategoryMetrics(counts=counts, scores=compute_prf(counts))
        for name, counts in totals.items()
    }
    return MetricsReport(
        source_id=gold.source_id, mode=mode, categories=categories, per_operation=breakdown
    )


def enrichment_delta(before: MetricsReport, after: MetricsReport) -> DeltaReport:
    """Per-category score differences (after − before) for one gold set."""
    if before.source_id != after.source_id:
        raise EvaluationError("delta requires reports over the same gold annotation")
    if before.mode != after.mode:
        raise EvaluationError("delta requires reports computed in the same mode")
    deltas = {}
    for category in CATEGORIES:
        b = before.category(category).scores
        a = after.category(category).scores
        deltas[category] = PrfScores(
            precision=a.precision - b.precision,
            recall=a.recall - b.recall,
            f1=a.f1 - b.f1,
        )
    return DeltaReport(source_id=before.source_id, mode=before.mode, deltas=deltas)


@dataclass(frozen=True)
class StabilityReport:
    """Agreement across repeated runs of one (source, model) pair."""

    run_ids: tuple[str, ...]
    pairwise_isomorphic: tuple[bool, ...]
    jaccard: Mapping[str, tuple[float, ...]]
    identical_extraction: bool

    def __post_init__(self) -> None:
        object.__setattr__(self, "jaccard", dict(self.jaccard))

    @property
    def all_isomorphic(self) -> bool:
        return all(self.pairwise_isomorphic)


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def stability_report(runs: Sequence, schema: OntologySchema) -> StabilityReport:
    """Pairwise isomorphism and entity-set agreement for repeated runs.

    `runs` are extraction results (anything with run_id/source_id/model_id/
    graph attributes); at least two are required.
    """
    if len(runs) < 2:
        raise EvaluationError("stability needs at least two runs")
    key = {(r.source_id, r.model_id) for r in runs}
    if len(key) != 1:
        raise EvaluationError("stability runs must share one (source, model) pair")

    entity_sets: dict[str, list[frozenset[str]]] = {c: [] for c in CATEGORIES}
    for run in runs:
        ops = extract_entities(run.graph, schema)
        for category in CATEGORIES:
            entity_sets[category].append(
                frozenset(e for op in ops for e in op.entities(category))
            )

    iso_flags: list[bool] = []
    jaccard: dict[str, list[float]] = {c: [] for c in CATEGORIES}
    for i in range(len(runs)):
        for j in range(i + 1, len(runs)):
            iso_flags.append(graph_isomorphic(runs[i].graph, runs[j].graph))
            for category in CATEGORIES:
                jaccard[category].append(
                    _jaccard(entity_sets[category][i], entity_sets[category][j])
                )

    identical = all(iso_flags) and all(
        all(v == 1.0 for v in values) for values in jaccard.values()
    )
    return StabilityReport(
        run_ids=tuple(r.run_id for r in runs),
        pairwise_isomorphic=tuple(iso_flags),
        jaccard={c: tuple(v) for c, v in jaccard.items()},
        identical_extraction=identical,
    )
