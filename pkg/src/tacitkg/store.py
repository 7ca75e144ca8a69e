"""Embedded named-graph quad store with N-Quads persistence.

Holds one immutable :class:`RdfGraph` per graph name, answers basic graph
pattern queries with index-assisted joins, and dumps/loads the whole store
as canonical N-Quads so results stay importable into any standard triple
store.  Observed and inferred triples of a run live under distinct graph
names (``...:observed`` / ``...:inferred``).
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .rdf import BlankNode, Iri, Literal, RdfGraph, Term, Triple, term_key

logger = logging.getLogger(__name__)

_VAR_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass(frozen=True)
class Var:
    """A query variable; distinct from every concrete term."""

    name: str

    def __post_init__(self) -> None:
        if not _VAR_NAME.match(self.name):
            raise ValueError(f"invalid variable name: {self.name!r}")


PatternTerm = Union[Term, Var]
TriplePattern = tuple[PatternTerm, PatternTerm, PatternTerm]


@dataclass(frozen=True)
class BgpQuery:
    """A conjunctive basic graph pattern, optionally scoped to one graph."""

    patterns: tuple[TriplePattern, ...]
    graph_scope: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.patterns:
            raise ValueError("a BGP query needs at least one pattern")
        object.__setattr__(self, "patterns", tuple(tuple(p) for p in self.patterns))

    def variables(self) -> list[str]:
        names = {t.name for p in self.patterns for t in p if isinstance(t, Var)}
        return sorted(names)


class _GraphIndex:
    """Per-graph lookup tables so joins don't scan the full triple set."""

    def __init__(self, triples: Iterable[Triple]) -> None:
        self.all: list[Triple] = list(triples)
        self.by_s: dict[Term, list[Triple]] = defaultdict(list)
        self.by_p: dict[Term, list[Triple]] = defaultdict(list)
        self.by_o: dict[Term, list[Triple]] = defaultdict(list)
        self.by_sp: dict[tuple[Term, Term], list[Triple]] = defaultdict(list)
        self.by_po: dict[tuple[Term, Term], list[Triple]] = defaultdict(list)
        for t in self.all:
            self.by_s[t.subject].append(t)
            self.by_p[t.predicate].append(t)
            self.by_o[t.object].append(t)
            self.by_sp[(t.subject, t.predicate)].append(t)
            self.by_po[(t.predicate, t.object)].append(t)

    def candidates(
        self, s: Optional[Term], p: Optional[Term], o: Optional[Term]
    ) -> Iterable[Triple]:
        if s is not None and p is not None:
            pool = self.by_sp.get((s, p), [])
        elif p is not None and o is not None:
            pool = self.by_po.get((p, o), [])
        elif s is not None:
            pool = self.by_s.get(s, [])
        elif o is not None:
            pool = self.by_o.get(o, [])
        elif p is not None:
            pool = self.by_p.get(p, [])
        else:
            pool = self.all
        for t in pool:
            if s is not None and t.subject != s:
                continue
            if p is not None and t.predicate != p:
                continue
            if o is not None and t.object != o:
                continue
            yield t


class QuadStore:
    """A mapping from graph-name IRIs to immutable graphs.

    Reads take a snapshot under the lock and then work lock-free; writes
    replace whole graphs atomically, so per-graph writers never interleave
    with readers mid-update.
    """

    def __init__(self) -> None:
        self._graphs: dict[str, RdfGraph] = {}
        self._lock = threading.Lock()

    def put_graph(self, name: str, graph: RdfGraph) -> None:
        """Replace the graph stored under `name`; an empty graph removes it."""
        Iri(name)  # validates that the name is an absolute IRI
        with self._lock:
            if len(graph) == 0:
                self._graphs.pop(name, None)
            else:
                self._graphs[name] = graph

    def get_graph(self, name: str) -> Optional[RdfGraph]:
        with self._lock:
            return self._graphs.get(name)

    def remove_graph(self, name: str) -> None:
        with self._lock:
            self._graphs.pop(name, None)

    def graph_names(self) -> list[str]:
        with self._lock:
            return sorted(self._graphs)

    def __len__(self) -> int:
        with self._lock:
            return len(self._graphs)

    def total_quads(self) -> int:
        with self._lock:
            return sum(len(g) for g in self._graphs.values())

    def _snapshot(self) -> dict[str, RdfGraph]:
        with self._lock:
            return dict(self._graphs)

    # -- queries ---------------------------------------------------------

    def query_bgp(self, query: BgpQuery) -> list[dict[str, Term]]:
        """All solutions of the conjunctive pattern, deduplicated and sorted.

        With no graph scope the query runs over the union of all named
        graphs.  Solutions are returned as variable-name-to-term mappings,
        ordered by the terms bound to the sorted variable names.
        """
        snapshot = self._snapshot()
        if query.graph_scope is not None:
            scoped = snapshot.get(query.graph_scope)
            triples: Iterable[Triple] = scoped.triples if scoped is not None else ()
        else:
            merged: set[Triple] = set()
            for g in snapshot.values():
                merged |= g.triples
            triples = merged

        index = _GraphIndex(triples)
        bindings: list[dict[str, Term]] = [{}]
        for pattern in query.patterns:
            next_bindings: list[dict[str, Term]] = []
            for binding in bindings:
                s, p, o = (_resolve(t, binding) for t in pattern)
                for t in index.candidates(
                    s if not isinstance(s, Var) else None,
                    p if not isinstance(p, Var) else None,
                    o if not isinstance(o, Var) else None,
                ):
                    extended = _extend(binding, pattern, t)
                    if extended is not None:
                        next_bindings.append(extended)
            bindings = next_bindings
            if not bindings:
                return []

        names = query.variables()
        unique = {tuple(b.get(n) for n in names): b for b in bindings}
        ordered = sorted(
            unique.values(),
            key=lambda b: tuple(term_key(b[n]) if n in b else "" for n in names),
        )
        return [dict(b) for b in ordered]

    # -- persistence -----------------------------------------------------

    def export_nquads(self) -> str:
        """Canonical N-Quads: one line per quad, sorted by (graph, s, p, o)."""
        snapshot = self._snapshot()
        lines = []
        for name in sorted(snapshot):
            for t in snapshot[name].sorted_triples():
                lines.append(
                    f"{term_key(t.subject)} {term_key(t.predicate)} "
                    f"{term_key(t.object)} <{name}> ."
                )
        return "".join(line + "\n" for line in lines)

    def export_graph_content(self, name: str) -> str:
        """Graph-name-free triple lines for one graph, sorted; '' if absent.

        Useful for content comparisons across runs whose graph names differ
        only by run identifier.
        """
        graph = self.get_graph(name)
        if graph is None:
            return ""
        return "".join(
            f"{term_key(t.subject)} {term_key(t.predicate)} {term_key(t.object)} .\n"
            for t in graph.sorted_triples()
        )

    @classmethod
    def import_nquads(cls, text: str) -> "QuadStore":
        """Parse an N-Quads document produced by :meth:`export_nquads`."""
        grouped: dict[str, set[Triple]] = defaultdict(set)
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            terms, rest = _parse_nquad_terms(line, lineno)
            if len(terms) != 4:
                raise ValueError(f"line {lineno}: expected 4 terms, found {len(terms)}")
            s, p, o, g = terms
            if not isinstance(g, Iri):
                raise ValueError(f"line {lineno}: graph name must be an IRI")
            if not isinstance(p, Iri):
                raise ValueError(f"line {lineno}: predicate must be an IRI")
            grouped[g.value].add(Triple(s, p, o))
        store = cls()
        for name, triples in grouped.items():
            store.put_graph(name, RdfGraph(triples))
        return store

    def save(self, directory: Union[str, Path], batch_id: str) -> Path:
        """Write one N-Quads dump per batch plus a manifest of all dumps."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        payload = self.export_nquads()
        dump_path = directory / f"{batch_id}.nq"
        dump_path.write_text(payload, encoding="utf-8")

        manifest_path = directory / "manifest.json"
        manifest: dict = {"batches": {}}
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            manifest.setdefault("batches", {})
        manifest["batches"][batch_id] = {
            "file": dump_path.name,
            "graphs": len(self),
            "quads": self.total_quads(),
            "sha256": hashlib.sha256(payload.encode("utf-8")).hexdigest(),
        }
        manifest_path.write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        logger.info("saved batch %s: %d graphs, %d quads", batch_id, len(self), self.total_quads())
        return dump_path

    @classmethod
    def load(cls, directory: Union[str, Path], batch_id: str) -> "QuadStore":
        """Read a saved batch back, verifying its manifest checksum."""
        directory = Path(directory)
        dump_path = directory / f"{batch_id}.nq"
        payload = dump_path.read_text(encoding="utf-8")
        manifest_path = directory / "manifest.json"
        if manifest_path.exists():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            entry = manifest.get("batches", {}).get(batch_id)
            if entry is not None:
                digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
                if digest != entry.get("sha256"):
                    raise ValueError(
                        f"batch {batch_id!r} dump does not match its manifest checksum"
                    )
        return cls.import_nquads(payload)


def _resolve(t: PatternTerm, binding: Mapping[str, Term]) -> PatternTerm:
    if isinstance(t, Var) and t.name in binding:
        return binding[t.name]
    return t


def _extend(
    binding: dict[str, Term], pattern: TriplePattern, triple: Triple
) -> Optional[dict[str, Term]]:
    extended = dict(binding)
    for slot, value in zip(pattern, (triple.subject, triple.predicate, triple.object)):
        if isinstance(slot, Var):
            bound = extended.get(slot.name)
            if bound is None:
                extended[slot.name] = value
            elif bound != value:
                return None
        elif slot != value:
            return None
    return extended


# -- N-Quads term scanning -------------------------------------------------

_UNESCAPE = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t", "b": "\b", "f": "\f"}


def _parse_nquad_terms(line: str, lineno: int) -> tuple[list[Term], str]:
    """Scan the whitespace-separated terms of one N-Quads statement line."""
    terms: list[Term] = []
    i = 0
    n = len(line)
    while i < n:
        while i < n and line[i] in " \t":
            i += 1
        if i >= n:
            raise ValueError(f"line {lineno}: unterminated statement (missing '.')")
        ch = line[i]
        if ch == ".":
            return terms, line[i + 1 :]
        if ch == "<":
            end = line.find(">", i)
            if end < 0:
                raise ValueError(f"line {lineno}: unterminated IRI")
            terms.append(Iri(line[i + 1 : end]))
            i = end + 1
        elif ch == "_" and i + 1 < n and line[i + 1] == ":":
            j = i + 2
            while j < n and line[j] not in " \t":
                j += 1
            terms.append(BlankNode(line[i + 2 : j]))
            i = j
        elif ch == '"':
            lexical, i = _scan_quoted(line, i, lineno)
            datatype = None
            language = None
            if i < n and line[i] == "@":
                j = i + 1
                while j < n and (line[j].isalnum() or line[j] == "-"):
                    j += 1
                language = line[i + 1 : j]
                i = j
            elif line.startswith("^^<", i):
                end = line.find(">", i + 3)
                if end < 0:
                    raise ValueError(f"line {lineno}: unterminated datatype IRI")
                datatype = line[i + 3 : end]
                i = end + 1
            terms.append(Literal(lexical, datatype=datatype, language=language))
        else:
            raise ValueError(f"line {lineno}: unexpected character {ch!r}")
    raise ValueError(f"line {lineno}: unterminated statement (missing '.')")


def _scan_quoted(line: str, start: int, lineno: int) -> tuple[str, int]:
    out: list[str] = []
    i = start + 1
    n = len(line)
    while i < n:
        ch = line[i]
        if ch == '"':
            return "".join(out), i + 1
        if ch == "\\":
            if i + 1 >= n:
                break
            esc = line[i + 1]
            if esc in _UNESCAPE:
                out.append(_UNESCAPE[esc])
                i += 2
            elif esc == "u" and i + 6 <= n:
                out.append(chr(int(line[i + 2 : i + 6], 16)))
                i += 6
            elif esc == "U" and i + 10 <= n:
                out.append(chr(int(line[i + 2 : i + 10], 16)))
                i += 10
            else:
                raise ValueError(f"line {lineno}: bad escape \\{esc}")
        else:
            out.append(ch)
            i += 1
    raise ValueError(f"line {lineno}: unterminated string literal")
