"""Shape loading, each constraint component, the global consistency gate,
and agreement with a naive validator on random graphs."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PKO, graph
from tacitkg.namespaces import RDF_TYPE, SH, XSD_STRING
from tacitkg.rdf import BlankNode, Iri, Literal, RdfGraph, Triple, parse_turtle, term_key
from tacitkg.shapes import (
    NodeShape,
    PropertyConstraint,
    ShapeLoadError,
    ShapeSet,
    global_consistency,
    load_shapes,
    validate,
)

EX = "http://example.org/"

SHAPE_DOC = """\
@prefix sh: <http://www.w3.org/ns/shacl#> .
@prefix ex: <http://example.org/> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .

ex:WidgetShape a sh:NodeShape ;
    sh:targetClass ex:Widget ;
    sh:property [
        sh:path ex:name ;
        sh:minCount 1 ;
        sh:maxCount 1 ;
        sh:datatype xsd:string ;
    ] ;
    sh:property [
        sh:path ex:part ;
        sh:class ex:Part ;
        sh:nodeKind sh:IRI ;
    ] .
"""


class TestLoadShapes:
    def test_loads_constraints(self):
        shapes = load_shapes(parse_turtle(SHAPE_DOC))
        assert len(shapes) == 1
        shape = shapes.shapes[0]
        assert shape.target_class == Iri(EX + "Widget")
        assert len(shape.constraints) == 2
        by_path = {c.path.value: c for c in shape.constraints}
        assert by_path[EX + "name"].min_count == 1
        assert by_path[EX + "name"].max_count == 1
        assert by_path[EX + "part"].value_class == Iri(EX + "Part")

    def test_unsupported_component_rejected_by_name(self):
        doc = SHAPE_DOC.replace("sh:minCount 1 ;", "sh:minCount 1 ; sh:pattern \"^x\" ;")
        with pytest.raises(ShapeLoadError) as err:
            load_shapes(parse_turtle(doc))
        assert "sh:pattern" in str(err.value)

    def test_shape_without_target_rejected(self):
        doc = SHAPE_DOC.replace("sh:targetClass ex:Widget ;", "")
        with pytest.raises(ShapeLoadError):
            load_shapes(parse_turtle(doc))

    def test_empty_document_rejected(self):
        with pytest.raises(ShapeLoadError):
            load_shapes(parse_turtle("@prefix ex: <http://example.org/> .\n"))

    def test_packaged_shapes(self, shapeset):
        targets = {s.target_class.value for s in shapeset.shapes}
        assert targets == {
            PKO + "Process",
            PKO + "Step",
            PKO + "Operation",
            PKO + "Tool",
            PKO + "Artifact",
        }


def widget_shapes():
    return load_shapes(parse_turtle(SHAPE_DOC))


class TestValidate:
    def test_conforming_instance(self):
        g = parse_turtle(
            """
@prefix ex: <http://example.org/> .
ex:w a ex:Widget ; ex:name "one" ; ex:part ex:p1 .
ex:p1 a ex:Part .
"""
        )
        assert validate(g, widget_shapes()).conforms

    def test_min_count(self):
        g = parse_turtle("@prefix ex: <http://example.org/> .\nex:w a ex:Widget .\n")
        report = validate(g, widget_shapes())
        assert not report.conforms
        assert any("at least 1" in v.message for v in report.violations)

    def test_max_count_counts_distinct_values(self):
        g = parse_turtle(
            """
@prefix ex: <http://example.org/> .
ex:w a ex:Widget ; ex:name "one", "two" .
"""
        )
        report = validate(g, widget_shapes())
        assert any("at most 1" in v.message for v in report.violations)

    def test_class_constraint_requires_direct_typing(self):
        g = parse_turtle(
            """
@prefix ex: <http://example.org/> .
ex:w a ex:Widget ; ex:name "one" ; ex:part ex:p1 .
"""
        )
        report = validate(g, widget_shapes())
        assert any("not typed" in v.message for v in report.violations)

    def test_datatype_constraint(self):
        g = parse_turtle(
            """
@prefix ex: <http://example.org/> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
ex:w a ex:Widget ; ex:name "1"^^xsd:integer .
"""
        )
        report = validate(g, widget_shapes())
        assert any("datatype" in v.message for v in report.violations)

    def test_plain_literal_counts_as_xsd_string(self):
        g = parse_turtle(
            "@prefix ex: <http://example.org/> .\nex:w a ex:Widget ; ex:name \"plain\" .\n"
        )
        assert validate(g, widget_shapes()).conforms

    def test_node_kind(self):
        g = parse_turtle(
            """
@prefix ex: <http://example.org/> .
ex:w a ex:Widget ; ex:name "one" ; ex:part "not-an-iri" .
"""
        )
        report = validate(g, widget_shapes())
        assert any("node kind" in v.message for v in report.violations)

    def test_untargeted_nodes_ignored(self):
        g = parse_turtle(
            "@prefix ex: <http://example.org/> .\nex:other a ex:Thing ; ex:name ex:x .\n"
        )
        assert validate(g, widget_shapes()).conforms

    def test_violations_sorted(self):
        g = parse_turtle(
            """
@prefix ex: <http://example.org/> .
ex:b a ex:Widget .
ex:a a ex:Widget .
"""
        )
        report = validate(g, widget_shapes())
        keys = [(term_key(v.focus), v.path.value) for v in report.violations]
        assert keys == sorted(keys)


class TestGlobalConsistency:
    def test_fatal_when_no_fundamental_instances(self, schema):
        g = graph('<urn:x:op> a pko:Operation ; rdfs:label "x" .\n')
        report = global_consistency(g, schema)
        assert report.fatal
        assert not report.conforms
        assert "no instances of fundamental classes" in report.violations[0].message

    def test_names_the_missing_classes(self, schema):
        g = graph('<urn:x:s> a pko:Step .\n')
        report = global_consistency(g, schema)
        assert report.fatal
        assert "Artifact" in report.violations[0].message
        assert "Step" not in report.violations[0].message.split(":")[1]

    def test_ok_when_fundamentals_present(self, schema):
        g = graph("<urn:x:s> a pko:Step .\n<urn:x:a> a pko:Artifact .\n")
        assert global_consistency(g, schema).conforms


# --- property: agreement with a naive re-evaluation -----------------------

KINDS = {
    "at least": "min",
    "at most": "max",
    "not typed": "class",
    "datatype": "datatype",
    "node kind": "nodekind",
}


def classify(message):
    for needle, kind in KINDS.items():
        if needle in message:
            return kind
    raise AssertionError(f"unclassifiable violation: {message}")


def naive_validate(g: RdfGraph, shapes: ShapeSet):
    """Straight-line restatement of the validation semantics."""
    rdf_type = Iri(RDF_TYPE)
    found = []
    for shape in shapes.shapes:
        focuses = {t.subject for t in g.triples if t.predicate == rdf_type and t.object == shape.target_class}
        for focus in focuses:
            for c in shape.constraints:
                values = {t.object for t in g.triples if t.subject == focus and t.predicate == c.path}
                if len(values) < c.min_count:
                    found.append((shape.name.value, term_key(focus), c.path.value, "min"))
                if c.max_count is not None and len(values) > c.max_count:
                    found.append((shape.name.value, term_key(focus), c.path.value, "max"))
                for v in values:
                    if c.value_class is not None:
                        ok = not isinstance(v, Literal) and Triple(v, rdf_type, c.value_class) in g.triples
                        if not ok:
                            found.append((shape.name.value, term_key(focus), c.path.value, "class"))
                    if c.datatype is not None:
                        if isinstance(v, Literal):
                            if v.language is not None:
                                dt = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString"
                            else:
                                dt = v.datatype or XSD_STRING
                            ok = dt == c.datatype.value
                        else:
                            ok = False
                        if not ok:
                            found.append((shape.name.value, term_key(focus), c.path.value, "datatype"))
                    if c.node_kind is not None:
                        expect = {
                            SH + "IRI": Iri,
                            SH + "BlankNode": BlankNode,
                            SH + "Literal": Literal,
                        }[c.node_kind.value]
                        if not isinstance(v, expect):
                            found.append((shape.name.value, term_key(focus), c.path.value, "nodekind"))
    return sorted(found)


CLASSES = [Iri(EX + c) for c in ("A", "B")]
PREDS = [Iri(EX + p) for p in ("p", "q")]
NODES = [Iri(EX + n) for n in ("n1", "n2", "n3")] + [BlankNode("b1")]
VALUES = NODES + [Literal("v"), Literal("v", language="en"), Literal("1", datatype=EX + "dt")]

data_triples = st.one_of(
    st.builds(Triple, st.sampled_from(NODES), st.just(Iri(RDF_TYPE)), st.sampled_from(CLASSES)),
    st.builds(Triple, st.sampled_from(NODES), st.sampled_from(PREDS), st.sampled_from(VALUES)),
)
data_graphs = st.lists(data_triples, max_size=30).map(lambda ts: RdfGraph(frozenset(ts)))

constraints = st.builds(
    PropertyConstraint,
    path=st.sampled_from(PREDS),
    min_count=st.integers(0, 2),
    max_count=st.one_of(st.none(), st.integers(2, 3)),
    value_class=st.one_of(st.none(), st.sampled_from(CLASSES)),
    datatype=st.one_of(st.none(), st.just(Iri(XSD_STRING)), st.just(Iri(EX + "dt"))),
    node_kind=st.one_of(st.none(), st.sampled_from([Iri(SH + "IRI"), Iri(SH + "Literal")])),
)
shapes_strategy = st.lists(
    st.builds(
        NodeShape,
        name=st.sampled_from([Iri(EX + "S1"), Iri(EX + "S2")]),
        target_class=st.sampled_from(CLASSES),
        constraints=st.lists(constraints, min_size=1, max_size=2).map(tuple),
    ),
    min_size=1,
    max_size=2,
).map(lambda s: ShapeSet(tuple(s)))


@settings(max_examples=400, deadline=None)
@given(data_graphs, shapes_strategy)
def test_validator_matches_naive_oracle(g, shapes):
    report = validate(g, shapes)
    got = sorted(
        (v.shape.value, term_key(v.focus), v.path.value, classify(v.message))
        for v in report.violations
    )
    assert got == naive_validate(g, shapes)
