"""Turtle subset parser and deterministic serializer.

Supported syntax: prefix directives (@prefix and SPARQL-style PREFIX),
IRIs, prefixed names, blank-node labels, [] and [ p o ; ... ] shorthand,
single-line string/integer/decimal/boolean literals, language tags,
datatype annotations, the `a` keyword, predicate and object lists, and
comments. Out-of-subset constructs (collections, multi-line strings,
double literals, @base) are rejected with a position-tagged error.
"""

from __future__ import annotations

import re
from typing import Optional
from urllib.parse import urljoin

from tacitkg.namespaces import (
    RDF_TYPE,
    XSD_BOOLEAN,
    XSD_DECIMAL,
    XSD_INTEGER,
)
from tacitkg.rdf.model import (
    BlankNode,
    Iri,
    Literal,
    RdfGraph,
    Term,
    Triple,
    term_key,
)

_ABSOLUTE_IRI = re.compile(r"^[A-Za-z][A-Za-z0-9+.-]*:")
_PN_LOCAL_SAFE = re.compile(r"^[A-Za-z_][A-Za-z0-9_-]*$")
_STRING_ESCAPES = {
    "t": "\t",
    "b": "\b",
    "n": "\n",
    "r": "\r",
    "f": "\f",
    '"': '"',
    "'": "'",
    "\\": "\\",
}


class TurtleParseError(Exception):
    """Syntax or resolution failure, tagged with document position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class _Scanner:
    """Character-level scanner with line/column tracking."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.col = 1

    def error(self, message: str) -> TurtleParseError:
        return TurtleParseError(message, self.line, self.col)

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def peek2(self) -> str:
        return self.text[self.pos : self.pos + 2]

    def advance(self, n: int = 1) -> str:
        chunk = self.text[self.pos : self.pos + n]
        for ch in chunk:
            if ch == "\n":
                self.line += 1
                self.col = 1
            else:
                self.col += 1
        self.pos += n
        return chunk

    def skip_ws(self) -> None:
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self.advance()
            elif ch == "#":
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self.advance()
            else:
                return

    def expect(self, literal: str) -> None:
        self.skip_ws()
        if not self.text.startswith(literal, self.pos):
            got = self.peek() or "end of input"
            raise self.error(f"expected {literal!r}, found {got!r}")
        self.advance(len(literal))


class _Parser:
    def __init__(self, text: str, base_iri: Optional[str]):
        self.scanner = _Scanner(text)
        self.base_iri = base_iri
        self.prefixes: dict[str, str] = {}
        self.triples: set[Triple] = set()
        self._anon_counter = 0

    # -- entry -----------------------------------------------------------

    def parse(self) -> RdfGraph:
        s = self.scanner
        while not s.at_end():
            if s.text.startswith("@prefix", s.pos):
                s.advance(len("@prefix"))
                self._prefix_directive(sparql_style=False)
            elif s.text.startswith("@base", s.pos):
                raise s.error("@base directives are not supported; pass a base IRI instead")
            elif self._at_keyword("PREFIX"):
                s.advance(len("PREFIX"))
                self._prefix_directive(sparql_style=True)
            elif self._at_keyword("BASE"):
                raise s.error("BASE directives are not supported; pass a base IRI instead")
            else:
                self._statement()
        return RdfGraph(frozenset(self.triples), self.prefixes)

    def _at_keyword(self, word: str) -> bool:
        s = self.scanner
        if not s.text.startswith(word, s.pos):
            return False
        after = s.text[s.pos + len(word) : s.pos + len(word) + 1]
        return after == "" or after in " \t\r\n<"

    # -- directives ------------------------------------------------------

    def _prefix_directive(self, sparql_style: bool) -> None:
        s = self.scanner
        s.skip_ws()
        label = self._scan_prefix_label()
        s.skip_ws()
        namespace = self._scan_iriref()
        self.prefixes[label] = namespace.value
        if not sparql_style:
            s.expect(".")

    def _scan_prefix_label(self) -> str:
        s = self.scanner
        start = s.pos
        while s.peek() and (s.peek().isalnum() or s.peek() in "_-."):
            s.advance()
        if s.peek() != ":":
            raise s.error("expected prefix label ending in ':'")
        label = s.text[start : s.pos]
        s.advance()
        return label

    # -- statements ------------------------------------------------------

    def _statement(self) -> None:
        subject = self._subject()
        self._predicate_object_list(subject)
        self.scanner.expect(".")

    def _subject(self) -> Term:
        s = self.scanner
        s.skip_ws()
        ch = s.peek()
        if ch == "<":
            return self._scan_iriref()
        if ch == "_":
            return self._scan_blank_label()
        if ch == "[":
            return self._blank_node_property_list()
        if ch == "(":
            raise s.error("collection syntax '( )' is not supported")
        if ch == "":
            raise s.error("unexpected end of input, expected a subject")
        return self._scan_prefixed_name()

    def _predicate_object_list(self, subject: Term) -> None:
        s = self.scanner
        while True:
            predicate = self._verb()
            self._object_list(subject, predicate)
            s.skip_ws()
            if s.peek() == ";":
                s.advance()
                s.skip_ws()
                # Trailing semicolons before '.' or ']' are legal.
                if s.peek() in ".]" or s.peek() == "":
                    return
                continue
            return

    def _verb(self) -> Iri:
        s = self.scanner
        s.skip_ws()
        ch = s.peek()
        if ch == "<":
            return self._require_iri(self._scan_iriref())
        if ch == "a":
            after = s.text[s.pos + 1 : s.pos + 2]
            if after == "" or not (after.isalnum() or after in "_:-."):
                s.advance()
                return Iri(RDF_TYPE)
        if ch == "":
            raise s.error("unexpected end of input, expected a predicate")
        return self._require_iri(self._scan_prefixed_name())

    def _require_iri(self, term: Term) -> Iri:
        if not isinstance(term, Iri):
            raise self.scanner.error("predicate must be an IRI")
        return term

    def _object_list(self, subject: Term, predicate: Iri) -> None:
        s = self.scanner
        while True:
            obj = self._object()
            self.triples.add(Triple(subject, predicate, obj))
            s.skip_ws()
            if s.peek() == ",":
                s.advance()
                continue
            return

    def _object(self) -> Term:
        s = self.scanner
        s.skip_ws()
        ch = s.peek()
        if ch == "<":
            return self._scan_iriref()
        if ch == "_":
            return self._scan_blank_label()
        if ch == "[":
            return self._blank_node_property_list()
        if ch == "(":
            raise s.error("collection syntax '( )' is not supported")
        if ch in "\"'":
            return self._scan_string_literal()
        if ch.isdigit() or ch in "+-":
            return self._scan_numeric_literal()
        if ch == "":
            raise s.error("unexpected end of input, expected an object")
        if s.text.startswith("true", s.pos) and not self._name_continues(4):
            s.advance(4)
            return Literal("true", XSD_BOOLEAN)
        if s.text.startswith("false", s.pos) and not self._name_continues(5):
            s.advance(5)
            return Literal("false", XSD_BOOLEAN)
        return self._scan_prefixed_name()

    def _name_continues(self, offset: int) -> bool:
        nxt = self.scanner.text[self.scanner.pos + offset : self.scanner.pos + offset + 1]
        return bool(nxt) and (nxt.isalnum() or nxt in "_:-.")

    def _blank_node_property_list(self) -> BlankNode:
        s = self.scanner
        s.expect("[")
        self._anon_counter += 1
        node = BlankNode(f"anon{self._anon_counter}")
        s.skip_ws()
        if s.peek() == "]":
            s.advance()
            return node
        self._predicate_object_list(node)
        s.expect("]")
        return node

    # -- terminals -------------------------------------------------------

    def _scan_iriref(self) -> Iri:
        s = self.scanner
        s.skip_ws()
        if s.peek() != "<":
            raise s.error(f"expected '<', found {s.peek()!r}")
        line, col = s.line, s.col
        s.advance()
        start = s.pos
        while s.peek() and s.peek() != ">":
            if s.peek() in " \t\r\n":
                raise s.error("whitespace inside IRI")
            s.advance()
        if s.peek() != ">":
            raise TurtleParseError("unterminated IRI", line, col)
        raw = s.text[start : s.pos]
        s.advance()
        if _ABSOLUTE_IRI.match(raw):
            return Iri(raw)
        if not self.base_iri:
            raise TurtleParseError(f"relative IRI {raw!r} with no base IRI", line, col)
        return Iri(urljoin(self.base_iri, raw))

    def _scan_blank_label(self) -> BlankNode:
        s = self.scanner
        line, col = s.line, s.col
        if s.peek2() != "_:":
            raise s.error("expected blank node label '_:'")
        s.advance(2)
        start = s.pos
        while s.peek() and (s.peek().isalnum() or s.peek() in "_-."):
            s.advance()
        label = s.text[start : s.pos]
        while label.endswith("."):
            label = label[:-1]
            s.pos -= 1
            s.col -= 1
        if not label:
            raise TurtleParseError("empty blank node label", line, col)
        return BlankNode(label)

    def _scan_prefixed_name(self) -> Iri:
        s = self.scanner
        line, col = s.line, s.col
        start = s.pos
        while s.peek() and (s.peek().isalnum() or s.peek() in "_-."):
            s.advance()
        if s.peek() != ":":
            token = s.text[start : s.pos + 1].strip() or s.peek()
            raise TurtleParseError(f"unexpected token {token!r}", line, col)
        prefix = s.text[start : s.pos]
        s.advance()
        local_start = s.pos
        while s.peek() and (s.peek().isalnum() or s.peek() in "_-."):
            s.advance()
        local = s.text[local_start : s.pos]
        # A trailing '.' belongs to the statement terminator, not the name.
        while local.endswith("."):
            local = local[:-1]
            s.pos -= 1
            s.col -= 1
        if prefix not in self.prefixes:
            raise TurtleParseError(f"undefined prefix {prefix + ':'!r}", line, col)
        return Iri(self.prefixes[prefix] + local)

    def _scan_string_literal(self) -> Literal:
        s = self.scanner
        quote = s.peek()
        line, col = s.line, s.col
        if s.text.startswith(quote * 3, s.pos):
            raise s.error("multi-line (triple-quoted) strings are not supported")
        s.advance()
        chars: list[str] = []
        while True:
            ch = s.peek()
            if ch == "":
                raise TurtleParseError("unterminated string literal", line, col)
            if ch == "\n":
                raise TurtleParseError("newline inside single-line string", line, col)
            if ch == quote:
                s.advance()
                break
            if ch == "\\":
                s.advance()
                esc = s.peek()
                if esc in _STRING_ESCAPES:
                    chars.append(_STRING_ESCAPES[esc])
                    s.advance()
                elif esc in "uU":
                    width = 4 if esc == "u" else 8
                    s.advance()
                    hexdigits = s.text[s.pos : s.pos + width]
                    if len(hexdigits) != width or not re.match(r"^[0-9A-Fa-f]+$", hexdigits):
                        raise s.error(f"invalid \\{esc} escape")
                    chars.append(chr(int(hexdigits, 16)))
                    s.advance(width)
                else:
                    raise s.error(f"invalid string escape '\\{esc}'")
            else:
                chars.append(ch)
                s.advance()
        lexical = "".join(chars)
        if s.peek() == "@":
            s.advance()
            tag_start = s.pos
            while s.peek() and (s.peek().isalnum() or s.peek() == "-"):
                s.advance()
            tag = s.text[tag_start : s.pos]
            if not tag:
                raise s.error("empty language tag")
            return Literal(lexical, language=tag)
        if s.peek2() == "^^":
            s.advance(2)
            if s.peek() == "<":
                datatype = self._scan_iriref()
            else:
                datatype = self._scan_prefixed_name()
            return Literal(lexical, datatype.value)
        return Literal(lexical)

    def _scan_numeric_literal(self) -> Literal:
        s = self.scanner
        start = s.pos
        if s.peek() in "+-":
            s.advance()
        digits_before = 0
        while s.peek().isdigit():
            digits_before += 1
            s.advance()
        is_decimal = False
        if s.peek() == "." and s.text[s.pos + 1 : s.pos + 2].isdigit():
            is_decimal = True
            s.advance()
            while s.peek().isdigit():
                s.advance()
        if s.peek() in "eE":
            raise s.error("double (exponent) literals are not supported")
        lexical = s.text[start : s.pos]
        if digits_before == 0 and not is_decimal:
            raise s.error(f"malformed numeric literal {lexical!r}")
        return Literal(lexical, XSD_DECIMAL if is_decimal else XSD_INTEGER)


def parse_turtle(text: str, base_iri: Optional[str] = None) -> RdfGraph:
    """Parse a Turtle document into an RdfGraph.

    Raises TurtleParseError with line/column on syntax errors, undefined
    prefixes, and relative IRIs when no base is given.
    """
    return _Parser(text, base_iri).parse()


def serialize_turtle(graph: RdfGraph) -> str:
    """Deterministic Turtle serialization.

    One statement per line, triples in canonical (subject, predicate,
    object) string order, prefix directives sorted by label. IRIs not
    covered by a declared prefix fall back to the <full> form.
    """
    lines = []
    for label in sorted(graph.prefixes):
        lines.append(f"@prefix {label}: <{graph.prefixes[label]}> .")
    if lines:
        lines.append("")
    namespaces = sorted(
        graph.prefixes.items(), key=lambda item: (-len(item[1]), item[0])
    )
    for triple in graph.sorted_triples():
        s = _render(triple.subject, namespaces)
        if triple.predicate.value == RDF_TYPE:
            p = "a"
        else:
            p = _render(triple.predicate, namespaces)
        o = _render(triple.object, namespaces)
        lines.append(f"{s} {p} {o} .")
    return "\n".join(lines) + "\n"


def _render(term: Term, namespaces: list[tuple[str, str]]) -> str:
    if isinstance(term, Iri):
        return _render_iri(term.value, namespaces)
    if isinstance(term, Literal) and term.datatype:
        quoted = term_key(Literal(term.lexical))
        return f"{quoted}^^{_render_iri(term.datatype, namespaces)}"
    return term_key(term)


def _render_iri(iri: str, namespaces: list[tuple[str, str]]) -> str:
    # Longest-namespace match wins; locals outside the safe name grammar
    # (or empty) keep the <full> form so output always reparses.
    for label, ns in namespaces:
        if iri.startswith(ns):
            local = iri[len(ns):]
            if _PN_LOCAL_SAFE.match(local):
                return f"{label}:{local}"
    return f"<{iri}>"
