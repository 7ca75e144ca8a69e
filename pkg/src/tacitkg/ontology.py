"""Reference ontology loading and the structural checks specific to it.

The schema acts as the generative constraint for extraction: instance
graphs may only use its classes and properties (closure check), and step
sequences must form well-shaped linear chains (sequence check).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

from tacitkg.namespaces import ENR, OWL, RDF, RDFS, RDF_TYPE, local_name
from tacitkg.rdf.model import Iri, RdfGraph, Term, term_key
from tacitkg.rdf.turtle import parse_turtle

CLASS_DECLARATION_TYPES = {OWL + "Class", RDFS + "Class"}
PROPERTY_DECLARATION_TYPES = {
    OWL + "ObjectProperty",
    OWL + "DatatypeProperty",
    OWL + "AnnotationProperty",
    RDF + "Property",
}
SEQUENCE_LOCAL_NAMES = ("nextStep", "prevStep", "firstStep", "lastStep")
DEFAULT_FUNDAMENTAL_LOCAL_NAMES = ("Step", "Artifact")
DEFAULT_ANNOTATION_PREDICATES = frozenset({RDFS + "label", RDFS + "comment"})


class OntologyError(Exception):
    """Raised when an ontology document cannot serve as a schema."""


@dataclass(frozen=True)
class SequenceProperties:
    """The four step-ordering relations of the sequence pattern."""

    next: str
    prev: str
    first: str
    last: str

    def as_set(self) -> frozenset[str]:
        return frozenset({self.next, self.prev, self.first, self.last})


@dataclass(frozen=True)
class OntologySchema:
    """Declared vocabulary of the reference ontology.

    `source_text` keeps the Turtle document the schema was loaded from, so
    prompt assembly can embed the ontology verbatim.
    """

    classes: frozenset[str]
    properties: frozenset[str]
    domains: dict[str, frozenset[str]] = field(default_factory=dict)
    ranges: dict[str, frozenset[str]] = field(default_factory=dict)
    sequence_properties: Optional[SequenceProperties] = None
    fundamental_classes: frozenset[str] = frozenset()
    source_text: str = ""

    def __post_init__(self) -> None:
        if self.sequence_properties is not None:
            missing = self.sequence_properties.as_set() - self.properties
            if missing:
                raise OntologyError(f"sequence properties not declared: {sorted(missing)}")
        if not self.fundamental_classes <= self.classes:
            extra = self.fundamental_classes - self.classes
            raise OntologyError(f"fundamental classes not declared: {sorted(extra)}")

    def class_by_local(self, name: str) -> Optional[str]:
        for iri in self.classes:
            if local_name(iri) == name:
                return iri
        return None

    def property_by_local(self, name: str) -> Optional[str]:
        for iri in self.properties:
            if local_name(iri) == name:
                return iri
        return None


@dataclass(frozen=True)
class ComplianceReport:
    """Outcome of the schema closure check."""

    undefined_classes: frozenset[str]
    undefined_properties: frozenset[str]

    @property
    def compliant(self) -> bool:
        return not self.undefined_classes and not self.undefined_properties


@dataclass(frozen=True)
class SequenceViolation:
    kind: str
    focus: Term
    message: str

    def __str__(self) -> str:
        return f"{self.kind} at {term_key(self.focus)}: {self.message}"


# Violation kinds reported by sequence_check.
INVERSE_INCONSISTENCY = "inverse-inconsistency"
MISSING_FIRST = "missing-first-step"
MULTIPLE_FIRST = "multiple-first-steps"
MISSING_LAST = "missing-last-step"
MULTIPLE_LAST = "multiple-last-steps"
BRANCHING_SUCCESSOR = "branching-successor"
BRANCHING_PREDECESSOR = "branching-predecessor"
CYCLE = "cycle"
FIRST_HAS_PREDECESSOR = "first-step-has-predecessor"
LAST_HAS_SUCCESSOR = "last-step-has-successor"
CHAIN_COVERAGE = "chain-coverage"


def load_ontology(
    doc: str,
    fundamental_local_names: Iterable[str] = DEFAULT_FUNDAMENTAL_LOCAL_NAMES,
) -> OntologySchema:
    """Load a Turtle ontology document into an OntologySchema.

    Classes and properties are collected from standard declaration triples
    (owl:Class/rdfs:Class, owl:*Property/rdf:Property); a document that
    declares no classes is rejected as the wrong file.
    """
    graph = parse_turtle(doc)
    classes: set[str] = set()
    properties: set[str] = set()
    domains: dict[str, set[str]] = defaultdict(set)
    ranges: dict[str, set[str]] = defaultdict(set)

    for t in graph.match(None, Iri(RDF_TYPE), None):
        if not isinstance(t.subject, Iri) or not isinstance(t.object, Iri):
            continue
        if t.object.value in CLASS_DECLARATION_TYPES:
            classes.add(t.subject.value)
        elif t.object.value in PROPERTY_DECLARATION_TYPES:
            properties.add(t.subject.value)
    for t in graph.match(None, Iri(RDFS + "domain"), None):
        if isinstance(t.subject, Iri) and isinstance(t.object, Iri):
            domains[t.subject.value].add(t.object.value)
    for t in graph.match(None, Iri(RDFS + "range"), None):
        if isinstance(t.subject, Iri) and isinstance(t.object, Iri):
            ranges[t.subject.value].add(t.object.value)

    if not classes:
        raise OntologyError("ontology document declares no classes")

    by_local = {local_name(p): p for p in sorted(properties)}
    sequence = None
    if all(name in by_local for name in SEQUENCE_LOCAL_NAMES):
        sequence = SequenceProperties(
            next=by_local["nextStep"],
            prev=by_local["prevStep"],
            first=by_local["firstStep"],
            last=by_local["lastStep"],
        )

    class_by_local = {local_name(c): c for c in sorted(classes)}
    fundamental = frozenset(
        class_by_local[name] for name in fundamental_local_names if name in class_by_local
    )

    return OntologySchema(
        classes=frozenset(classes),
        properties=frozenset(properties),
        domains={p: frozenset(v) for p, v in domains.items()},
        ranges={p: frozenset(v) for p, v in ranges.items()},
        sequence_properties=sequence,
        fundamental_classes=fundamental,
        source_text=doc,
    )


def schema_closure_check(
    graph: RdfGraph,
    schema: OntologySchema,
    annotation_predicates: frozenset[str] = DEFAULT_ANNOTATION_PREDICATES,
) -> ComplianceReport:
    """Report classes and properties used by the graph but absent from the schema.

    The type predicate, the annotation whitelist, and the enrichment
    provenance namespace never count as schema violations.
    """
    undefined_classes: set[str] = set()
    undefined_properties: set[str] = set()
    for t in graph:
        pred = t.predicate.value
        if pred == RDF_TYPE:
            if (
                isinstance(t.object, Iri)
                and t.object.value not in schema.classes
                and not t.object.value.startswith(ENR)
            ):
                undefined_classes.add(t.object.value)
            continue
        if pred in schema.properties or pred in annotation_predicates:
            continue
        if pred.startswith(ENR):
            continue
        undefined_properties.add(pred)
    return ComplianceReport(frozenset(undefined_classes), frozenset(undefined_properties))


def sequence_check(graph: RdfGraph, schema: OntologySchema) -> list[SequenceViolation]:
    """Check step chains against the sequence pattern.

    Reported violations: next/prev inverse mismatches, first/last cardinality
    per process, branching, cycles, endpoint conflicts, and chains that fail
    to cover a process's declared steps.
    """
    seq = schema.sequence_properties
    if seq is None:
        return []
    violations: list[SequenceViolation] = []

    next_edges = {
        (t.subject, t.object) for t in graph.match(None, Iri(seq.next), None)
    }
    prev_edges = {
        (t.subject, t.object) for t in graph.match(None, Iri(seq.prev), None)
    }

    for a, b in sorted(next_edges, key=lambda e: (term_key(e[0]), term_key(e[1]))):
        if (b, a) not in prev_edges:
            violations.append(
                SequenceViolation(
                    INVERSE_INCONSISTENCY, a,
                    f"{term_key(a)} has next step {term_key(b)} without the inverse prev-step link",
                )
            )
    for b, a in sorted(prev_edges, key=lambda e: (term_key(e[0]), term_key(e[1]))):
        if (a, b) not in next_edges:
            violations.append(
                SequenceViolation(
                    INVERSE_INCONSISTENCY, b,
                    f"{term_key(b)} has prev step {term_key(a)} without the inverse next-step link",
                )
            )

    # Successor/predecessor maps folding both directions together.
    succ: dict[Term, set[Term]] = defaultdict(set)
    pred: dict[Term, set[Term]] = defaultdict(set)
    for a, b in next_edges:
        succ[a].add(b)
        pred[b].add(a)
    for b, a in prev_edges:
        succ[a].add(b)
        pred[b].add(a)

    for node in sorted(succ, key=term_key):
        if len(succ[node]) > 1:
            violations.append(
                SequenceViolation(
                    BRANCHING_SUCCESSOR, node,
                    f"step has {len(succ[node])} successors, at most 1 allowed",
                )
            )
    for node in sorted(pred, key=term_key):
        if len(pred[node]) > 1:
            violations.append(
                SequenceViolation(
                    BRANCHING_PREDECESSOR, node,
                    f"step has {len(pred[node])} predecessors, at most 1 allowed",
                )
            )

    violations.extend(_find_cycles(succ))

    process_class = schema.class_by_local("Process")
    processes: list[Term] = []
    if process_class is not None:
        processes = sorted(graph.subjects(Iri(RDF_TYPE), Iri(process_class)), key=term_key)

    has_step = schema.property_by_local("hasStep")
    for process in processes:
        firsts = sorted(graph.objects(process, Iri(seq.first)), key=term_key)
        lasts = sorted(graph.objects(process, Iri(seq.last)), key=term_key)
        if not firsts:
            violations.append(
                SequenceViolation(MISSING_FIRST, process, "process declares no first step")
            )
        elif len(firsts) > 1:
            violations.append(
                SequenceViolation(
                    MULTIPLE_FIRST, process, f"process declares {len(firsts)} first steps"
                )
            )
        if not lasts:
            violations.append(
                SequenceViolation(MISSING_LAST, process, "process declares no last step")
            )
        elif len(lasts) > 1:
            violations.append(
                SequenceViolation(
                    MULTIPLE_LAST, process, f"process declares {len(lasts)} last steps"
                )
            )
        for f in firsts:
            if pred.get(f):
                violations.append(
                    SequenceViolation(
                        FIRST_HAS_PREDECESSOR, f, "first step has a predecessor"
                    )
                )
        for l in lasts:
            if succ.get(l):
                violations.append(
                    SequenceViolation(LAST_HAS_SUCCESSOR, l, "last step has a successor")
                )

        if has_step is None or len(firsts) != 1 or len(lasts) != 1:
            continue
        steps = graph.objects(process, Iri(has_step))
        if not steps:
            continue
        walked = _walk_chain(firsts[0], succ, limit=len(steps) + 1)
        if walked is None or set(walked) != steps or walked[-1] != lasts[0]:
            violations.append(
                SequenceViolation(
                    CHAIN_COVERAGE, process,
                    "walking next-step links from the first step does not cover the "
                    "process's declared steps ending at the last step",
                )
            )

    return violations


def _find_cycles(succ: dict[Term, set[Term]]) -> list[SequenceViolation]:
    """Detect cycles in the successor relation, reporting each cycle once.

    Iterative DFS over all successor edges; a back edge to a node on the
    current path yields a cycle, deduplicated by its node set.
    """
    violations = []
    seen_cycles: set[frozenset[Term]] = set()
    # DFS colors: absent = unvisited, 1 = on the current path, 2 = finished.
    color: dict[Term, int] = {}

    def _children(node: Term) -> Iterator[Term]:
        return iter(sorted(succ.get(node, ()), key=term_key))

    for start in sorted(succ, key=term_key):
        if start in color:
            continue
        color[start] = 1
        stack: list[tuple[Term, Iterator[Term]]] = [(start, _children(start))]
        path: list[Term] = [start]
        while stack:
            node, children = stack[-1]
            advanced = False
            for nxt in children:
                state = color.get(nxt)
                if state == 1:
                    cycle = frozenset(path[path.index(nxt):])
                    if cycle not in seen_cycles:
                        seen_cycles.add(cycle)
                        violations.append(
                            SequenceViolation(
                                CYCLE, min(cycle, key=term_key),
                                f"step chain contains a cycle of length {len(cycle)}",
                            )
                        )
                elif state is None:
                    color[nxt] = 1
                    path.append(nxt)
                    stack.append((nxt, _children(nxt)))
                    advanced = True
                    break
            if not advanced:
                color[node] = 2
                stack.pop()
                path.pop()
    return violations


def _walk_chain(start: Term, succ: dict[Term, set[Term]], limit: int) -> Optional[list[Term]]:
    """Follow unique successors from start; None if branching or over limit."""
    walked = [start]
    node = start
    while len(walked) <= limit:
        nexts = succ.get(node, set())
        if not nexts:
            return walked
        if len(nexts) > 1:
            return None
        node = next(iter(nexts))
        if node in walked:
            return None
        walked.append(node)
    return None
