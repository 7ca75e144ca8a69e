"""RDF core: data model, Turtle parsing/serialization, graph equality."""

from tacitkg.rdf.isomorphism import graph_isomorphic, skolemize_blank_nodes
from tacitkg.rdf.model import (
    BlankNode,
    Iri,
    Literal,
    RdfGraph,
    Term,
    Triple,
    escape_string,
    term_key,
)
from tacitkg.rdf.turtle import TurtleParseError, parse_turtle, serialize_turtle

__all__ = [
    "BlankNode",
    "Iri",
    "Literal",
    "RdfGraph",
    "Term",
    "Triple",
    "TurtleParseError",
    "escape_string",
    "graph_isomorphic",
    "parse_turtle",
    "serialize_turtle",
    "skolemize_blank_nodes",
    "term_key",
]
