"""Shape-based structural validation for knowledge graphs.

Implements a small subset of SHACL core: node shapes that target a class
and carry property constraints (cardinality, value class, datatype, node
kind).  Shape documents are themselves RDF graphs in Turtle; anything
outside the supported constraint vocabulary is rejected at load time so
that silently-ignored constraints cannot masquerade as passing ones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .namespaces import RDF_LANG_STRING, RDF_TYPE, SH, XSD_STRING, local_name
from .ontology import OntologySchema
from .rdf import BlankNode, Iri, Literal, RdfGraph, Term, term_key

logger = logging.getLogger(__name__)

_RDF_TYPE = Iri(RDF_TYPE)

SH_NODE_SHAPE = Iri(SH + "NodeShape")
SH_TARGET_CLASS = Iri(SH + "targetClass")
SH_PROPERTY = Iri(SH + "property")
SH_PATH = Iri(SH + "path")
SH_MIN_COUNT = Iri(SH + "minCount")
SH_MAX_COUNT = Iri(SH + "maxCount")
SH_CLASS = Iri(SH + "class")
SH_DATATYPE = Iri(SH + "datatype")
SH_NODE_KIND = Iri(SH + "nodeKind")

SH_IRI = Iri(SH + "IRI")
SH_BLANK_NODE = Iri(SH + "BlankNode")
SH_LITERAL = Iri(SH + "Literal")

_NODE_KINDS = {SH_IRI, SH_BLANK_NODE, SH_LITERAL}

# Predicates understood on a property constraint node.  Everything else in
# the sh: namespace is an unsupported constraint component.
_CONSTRAINT_PREDICATES = {
    SH_PATH,
    SH_MIN_COUNT,
    SH_MAX_COUNT,
    SH_CLASS,
    SH_DATATYPE,
    SH_NODE_KIND,
}


class ShapeLoadError(ValueError):
    """Raised when a shapes document uses unsupported or malformed constructs."""


@dataclass(frozen=True)
class PropertyConstraint:
    """Constraints on the values of one predicate at a focus node."""

    path: Iri
    min_count: int = 0
    max_count: Optional[int] = None
    value_class: Optional[Iri] = None
    datatype: Optional[Iri] = None
    node_kind: Optional[Iri] = None

    def __post_init__(self) -> None:
        if self.min_count < 0:
            raise ValueError("min_count must be >= 0")
        if self.max_count is not None and self.max_count < self.min_count:
            raise ValueError(
                f"max_count ({self.max_count}) < min_count ({self.min_count}) "
                f"for path {self.path.value}"
            )
        if self.node_kind is not None and self.node_kind not in _NODE_KINDS:
            raise ValueError(f"unknown node kind {self.node_kind.value}")


@dataclass(frozen=True)
class NodeShape:
    """A shape that applies to every instance of a target class."""

    name: Iri
    target_class: Iri
    constraints: tuple[PropertyConstraint, ...] = ()


@dataclass(frozen=True)
class ShapeSet:
    shapes: tuple[NodeShape, ...] = ()

    def __len__(self) -> int:
        return len(self.shapes)

    def by_target(self, target: Iri) -> list[NodeShape]:
        return [s for s in self.shapes if s.target_class == target]


@dataclass(frozen=True)
class ShapeViolation:
    """One failed constraint check, anchored to a focus node."""

    shape: Iri
    focus: Term
    path: Optional[Iri]
    message: str

    def sort_key(self) -> tuple[str, str, str]:
        return (
            term_key(self.shape),
            term_key(self.focus),
            term_key(self.path) if self.path is not None else "",
        )


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[ShapeViolation, ...] = ()
    fatal: bool = False

    @property
    def conforms(self) -> bool:
        return not self.violations and not self.fatal

    def summary(self) -> str:
        if self.conforms:
            return "conforms"
        kind = "fatal" if self.fatal else "violations"
        return f"{len(self.violations)} {kind}"


def _read_int(term: Term, what: str) -> int:
    if not isinstance(term, Literal):
        raise ShapeLoadError(f"{what} must be an integer literal")
    try:
        return int(term.lexical)
    except ValueError as exc:
        raise ShapeLoadError(f"{what} must be an integer literal, got {term.lexical!r}") from exc


def _read_iri(term: Term, what: str) -> Iri:
    if not isinstance(term, Iri):
        raise ShapeLoadError(f"{what} must be an IRI")
    return term


def _load_constraint(doc: RdfGraph, node: Term, shape_name: Iri) -> PropertyConstraint:
    unsupported = sorted(
        local_name(t.predicate.value)
        for t in doc.match(subject=node)
        if t.predicate.value.startswith(SH) and t.predicate not in _CONSTRAINT_PREDICATES
    )
    if unsupported:
        raise ShapeLoadError(
            f"shape {shape_name.value} uses unsupported constraint component(s): "
            + ", ".join(f"sh:{n}" for n in unsupported)
        )

    paths = sorted(doc.objects(node, SH_PATH), key=term_key)
    if len(paths) != 1:
        raise ShapeLoadError(f"shape {shape_name.value} has a property constraint without exactly one sh:path")
    path = paths[0]
    if not isinstance(path, Iri):
        raise ShapeLoadError(
            f"shape {shape_name.value}: only plain predicate paths are supported, got {term_key(path)}"
        )

    min_count = 0
    max_count: Optional[int] = None
    value_class: Optional[Iri] = None
    datatype: Optional[Iri] = None
    node_kind: Optional[Iri] = None

    for obj in doc.objects(node, SH_MIN_COUNT):
        min_count = _read_int(obj, "sh:minCount")
    for obj in doc.objects(node, SH_MAX_COUNT):
        max_count = _read_int(obj, "sh:maxCount")
    for obj in doc.objects(node, SH_CLASS):
        value_class = _read_iri(obj, "sh:class")
    for obj in doc.objects(node, SH_DATATYPE):
        datatype = _read_iri(obj, "sh:datatype")
    for obj in doc.objects(node, SH_NODE_KIND):
        kind = _read_iri(obj, "sh:nodeKind")
        if kind not in _NODE_KINDS:
            raise ShapeLoadError(f"shape {shape_name.value}: unknown sh:nodeKind {kind.value}")
        node_kind = kind

    try:
        return PropertyConstraint(
            path=path,
            min_count=min_count,
            max_count=max_count,
            value_class=value_class,
            datatype=datatype,
            node_kind=node_kind,
        )
    except ValueError as exc:
        raise ShapeLoadError(f"shape {shape_name.value}: {exc}") from exc


def load_shapes(doc: RdfGraph) -> ShapeSet:
    """Extract a :class:`ShapeSet` from a parsed shapes document.

    Raises :class:`ShapeLoadError` on constructs outside the supported
    subset, naming the offending component.
    """
    shapes: list[NodeShape] = []
    shape_subjects = sorted(
        (s for s in doc.subjects(_RDF_TYPE, SH_NODE_SHAPE)), key=term_key
    )
    for subject in shape_subjects:
        if not isinstance(subject, Iri):
            raise ShapeLoadError("node shapes must be named by IRIs")
        targets = sorted(doc.objects(subject, SH_TARGET_CLASS), key=term_key)
        if len(targets) != 1:
            raise ShapeLoadError(
                f"shape {subject.value} must have exactly one sh:targetClass, found {len(targets)}"
            )
        target = targets[0]
        if not isinstance(target, Iri):
            raise ShapeLoadError(f"shape {subject.value}: sh:targetClass must be an IRI")

        constraints = [
            _load_constraint(doc, node, subject)
            for node in sorted(doc.objects(subject, SH_PROPERTY), key=term_key)
        ]
        shapes.append(NodeShape(name=subject, target_class=target, constraints=tuple(constraints)))

    if not shapes:
        raise ShapeLoadError("shapes document declares no node shapes")
    return ShapeSet(shapes=tuple(shapes))


def _literal_datatype(lit: Literal) -> str:
    if lit.language is not None:
        return RDF_LANG_STRING
    return lit.datatype if lit.datatype is not None else XSD_STRING


def _check_node_kind(value: Term, kind: Iri) -> bool:
    if kind == SH_IRI:
        return isinstance(value, Iri)
    if kind == SH_BLANK_NODE:
        return isinstance(value, BlankNode)
    return isinstance(value, Literal)


def validate(graph: RdfGraph, shapes: ShapeSet) -> ValidationReport:
    """Check every focus node of every shape; return all violations found.

    Focus nodes are subjects directly typed as the shape's target class.
    Cardinalities count distinct values.  Class constraints require the
    value to be directly typed with the expected class.
    """
    violations: list[ShapeViolation] = []
    for shape in shapes.shapes:
        focus_nodes = sorted(graph.subjects(_RDF_TYPE, shape.target_class), key=term_key)
        for focus in focus_nodes:
            for constraint in shape.constraints:
                values = graph.objects(focus, constraint.path)
                distinct = set(values)
                n = len(distinct)
                path_local = local_name(constraint.path.value)
                if n < constraint.min_count:
                    violations.append(
                        ShapeViolation(
                            shape=shape.name,
                            focus=focus,
                            path=constraint.path,
                            message=(
                                f"expected at least {constraint.min_count} value(s) of "
                                f"{path_local}, found {n}"
                            ),
                        )
                    )
                if constraint.max_count is not None and n > constraint.max_count:
                    violations.append(
                        ShapeViolation(
                            shape=shape.name,
                            focus=focus,
                            path=constraint.path,
                            message=(
                                f"expected at most {constraint.max_count} value(s) of "
                                f"{path_local}, found {n}"
                            ),
                        )
                    )
                for value in sorted(distinct, key=term_key):
                    if constraint.value_class is not None:
                        if isinstance(value, Literal) or not any(
                            graph.match(value, _RDF_TYPE, constraint.value_class)
                        ):
                            violations.append(
                                ShapeViolation(
                                    shape=shape.name,
                                    focus=focus,
                                    path=constraint.path,
                                    message=(
                                        f"value {term_key(value)} of {path_local} is not typed "
                                        f"{local_name(constraint.value_class.value)}"
                                    ),
                                )
                            )
                    if constraint.datatype is not None:
                        if not isinstance(value, Literal) or _literal_datatype(value) != constraint.datatype.value:
                            violations.append(
                                ShapeViolation(
                                    shape=shape.name,
                                    focus=focus,
                                    path=constraint.path,
                                    message=(
                                        f"value {term_key(value)} of {path_local} does not have "
                                        f"datatype {local_name(constraint.datatype.value)}"
                                    ),
                                )
                            )
                    if constraint.node_kind is not None and not _check_node_kind(
                        value, constraint.node_kind
                    ):
                        violations.append(
                            ShapeViolation(
                                shape=shape.name,
                                focus=focus,
                                path=constraint.path,
                                message=(
                                    f"value {term_key(value)} of {path_local} has wrong node kind, "
                                    f"expected {local_name(constraint.node_kind.value)}"
                                ),
                            )
                        )
    violations.sort(key=ShapeViolation.sort_key)
    return ValidationReport(violations=tuple(violations))


def global_consistency(graph: RdfGraph, schema: OntologySchema) -> ValidationReport:
    """Sanity check that the graph instantiates the schema's fundamental classes.

    A graph with zero instances of any fundamental class (by default: steps
    and artifacts) cannot describe a procedure at all; this is reported as a
    fatal condition rather than an ordinary violation so that callers abort
    instead of storing an empty result.
    """
    missing = [
        cls
        for cls in sorted(schema.fundamental_classes)
        if not graph.subjects(_RDF_TYPE, Iri(cls))
    ]
    if not missing:
        return ValidationReport()
    names = ", ".join(local_name(cls) for cls in missing)
    violations = tuple(
        ShapeViolation(
            shape=Iri("urn:tacitkg:global-consistency"),
            focus=Iri(cls),
            path=None,
            message=(
                f"graph contains no instances of fundamental classes: {names}"
            ),
        )
        for cls in missing
    )
    logger.error("global consistency failure: no instances of %s", names)
    return ValidationReport(violations=violations, fatal=True)
