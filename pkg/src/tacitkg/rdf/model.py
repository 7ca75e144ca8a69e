"""RDF data model: terms, triples, and immutable graphs.

Graphs are value objects: construction freezes the triple set, and every
"mutation" builds a new graph. Literal identity is lexical (exact lexical
form plus datatype/language); no value-space canonicalization happens here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

from tacitkg.namespaces import RDF_LANG_STRING

_ABSOLUTE_IRI = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:")
_BLANK_LABEL = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_.-]*$")


@dataclass(frozen=True)
class Iri:
    """An absolute IRI."""

    value: str

    def __post_init__(self) -> None:
        if not _ABSOLUTE_IRI.match(self.value):
            raise ValueError(f"IRI is not absolute: {self.value!r}")

    def __repr__(self) -> str:
        return f"Iri({self.value!r})"


@dataclass(frozen=True)
class BlankNode:
    """A blank node identified by a document-local label."""

    label: str

    def __post_init__(self) -> None:
        if not _BLANK_LABEL.match(self.label):
            raise ValueError(f"invalid blank node label: {self.label!r}")


@dataclass(frozen=True)
class Literal:
    """A literal with exact lexical form.

    A literal carries at most one of a language tag or a non-string
    datatype; language-tagged literals leave `datatype` unset (their
    effective datatype is rdf:langString).
    """

    lexical: str
    datatype: Optional[str] = None
    language: Optional[str] = None

    def __post_init__(self) -> None:
        if self.language is not None:
            if self.datatype is not None and self.datatype != RDF_LANG_STRING:
                raise ValueError("literal cannot carry both a language tag and a datatype")
            object.__setattr__(self, "datatype", None)
            if not re.match(r"^[A-Za-z]+(-[A-Za-z0-9]+)*$", self.language):
                raise ValueError(f"invalid language tag: {self.language!r}")


Term = Union[Iri, BlankNode, Literal]


def term_key(term: Term) -> str:
    """Canonical string for a term, used for deterministic ordering.

    The rendering coincides with N-Triples syntax, so sorting by this key
    gives the "canonical string order" used by the serializers.
    """
    if isinstance(term, Iri):
        return f"<{term.value}>"
    if isinstance(term, BlankNode):
        return f"_:{term.label}"
    escaped = escape_string(term.lexical)
    if term.language:
        return f'"{escaped}"@{term.language}'
    if term.datatype:
        return f'"{escaped}"^^<{term.datatype}>'
    return f'"{escaped}"'


def escape_string(text: str) -> str:
    """Escape a literal's lexical form for Turtle/N-Quads output."""
    out = []
    for ch in text:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\r":
            out.append("\\r")
        elif ch == "\t":
            out.append("\\t")
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


@dataclass(frozen=True)
class Triple:
    subject: Term
    predicate: Iri
    object: Term

    def __post_init__(self) -> None:
        if isinstance(self.subject, Literal):
            raise ValueError("triple subject cannot be a literal")
        if not isinstance(self.predicate, Iri):
            raise ValueError("triple predicate must be an IRI")

    def sort_key(self) -> tuple[str, str, str]:
        return (term_key(self.subject), term_key(self.predicate), term_key(self.object))


@dataclass(frozen=True)
class RdfGraph:
    """An immutable set of triples plus prefix bindings.

    Set semantics: duplicate triples collapse. Prefixes are carried for
    serialization only and play no role in graph equality or isomorphism.
    """

    triples: frozenset[Triple] = field(default_factory=frozenset)
    prefixes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "triples", frozenset(self.triples))
        object.__setattr__(self, "prefixes", dict(self.prefixes))

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self.triples

    def sorted_triples(self) -> list[Triple]:
        return sorted(self.triples, key=Triple.sort_key)

    def match(
        self,
        subject: Optional[Term] = None,
        predicate: Optional[Term] = None,
        obj: Optional[Term] = None,
    ) -> Iterator[Triple]:
        """Triples matching the given terms; None is a wildcard."""
        for t in self.triples:
            if subject is not None and t.subject != subject:
                continue
            if predicate is not None and t.predicate != predicate:
                continue
            if obj is not None and t.object != obj:
                continue
            yield t

    def objects(self, subject: Term, predicate: Term) -> set[Term]:
        return {t.object for t in self.match(subject, predicate, None)}

    def subjects(self, predicate: Term, obj: Term) -> set[Term]:
        return {t.subject for t in self.match(None, predicate, obj)}

    def terms(self) -> set[Term]:
        """All distinct subject/predicate/object terms."""
        found: set[Term] = set()
        for t in self.triples:
            found.add(t.subject)
            found.add(t.predicate)
            found.add(t.object)
        return found

    def with_triples(self, extra: Iterable[Triple]) -> "RdfGraph":
        return RdfGraph(self.triples | frozenset(extra), self.prefixes)

    def with_prefixes(self, extra: Mapping[str, str]) -> "RdfGraph":
        merged = dict(self.prefixes)
        merged.update(extra)
        return RdfGraph(self.triples, merged)

    def union(self, other: "RdfGraph") -> "RdfGraph":
        merged = dict(self.prefixes)
        merged.update(other.prefixes)
        return RdfGraph(self.triples | other.triples, merged)

    def difference(self, other: "RdfGraph") -> "RdfGraph":
        return RdfGraph(self.triples - other.triples, self.prefixes)
