"""Blank-node-aware graph equality and skolemization."""

from __future__ import annotations

from collections import defaultdict

from tacitkg.rdf.model import BlankNode, Iri, RdfGraph, Term, Triple, term_key


def graph_isomorphic(a: RdfGraph, b: RdfGraph) -> bool:
    """True iff some bijection over blank-node labels maps a onto b exactly.

    Ground triples must match as sets; blank-containing triples are matched
    by backtracking over label bijections, pruned by structural signatures.
    Prefix bindings are ignored.
    """
    if len(a) != len(b):
        return False
    a_ground = {t for t in a if not _has_blank(t)}
    b_ground = {t for t in b if not _has_blank(t)}
    if a_ground != b_ground:
        return False
    a_blank = a.triples - a_ground
    b_blank = b.triples - b_ground

    a_sigs = _signatures(a_blank)
    b_sigs = _signatures(b_blank)
    if sorted(a_sigs.values()) != sorted(b_sigs.values()):
        return False

    by_sig: dict[tuple, list[str]] = defaultdict(list)
    for label, sig in b_sigs.items():
        by_sig[sig].append(label)

    a_labels = sorted(a_sigs, key=lambda lb: (a_sigs[lb], lb))
    mapping: dict[str, str] = {}
    used: set[str] = set()

    def assign(i: int) -> bool:
        if i == len(a_labels):
            return _apply(a_blank, mapping) == b_blank
        label = a_labels[i]
        for candidate in by_sig[a_sigs[label]]:
            if candidate in used:
                continue
            mapping[label] = candidate
            used.add(candidate)
            if assign(i + 1):
                return True
            used.discard(candidate)
            del mapping[label]
        return False

    return assign(0)


def _has_blank(triple: Triple) -> bool:
    return isinstance(triple.subject, BlankNode) or isinstance(triple.object, BlankNode)


def _signatures(triples: frozenset[Triple] | set[Triple]) -> dict[str, tuple]:
    """Per-blank-label structural signature, invariant under relabeling."""
    parts: dict[str, list[tuple]] = defaultdict(list)
    for t in triples:
        s_blank = isinstance(t.subject, BlankNode)
        o_blank = isinstance(t.object, BlankNode)
        s_repr = "*" if s_blank else term_key(t.subject)
        o_repr = "*" if o_blank else term_key(t.object)
        if s_blank:
            parts[t.subject.label].append(("s", t.predicate.value, o_repr))
        if o_blank:
            parts[t.object.label].append(("o", t.predicate.value, s_repr))
    return {label: tuple(sorted(entries)) for label, entries in parts.items()}


def _apply(triples: set[Triple] | frozenset[Triple], mapping: dict[str, str]) -> set[Triple]:
    def swap(term: Term) -> Term:
        if isinstance(term, BlankNode):
            return BlankNode(mapping[term.label])
        return term

    return {Triple(swap(t.subject), t.predicate, swap(t.object)) for t in triples}


def skolemize_blank_nodes(graph: RdfGraph, key: str) -> RdfGraph:
    """Replace every blank node with a deterministic urn:skolem IRI.

    Counters follow first appearance in canonical triple order, so equal
    graph values always skolemize to equal graphs. `key` scopes the minted
    IRIs; reruns over identical content must pass the same key to obtain
    byte-identical store exports.
    """
    order: dict[str, int] = {}
    for t in graph.sorted_triples():
        for term in (t.subject, t.object):
            if isinstance(term, BlankNode) and term.label not in order:
                order[term.label] = len(order) + 1
    if not order:
        return graph

    def swap(term: Term) -> Term:
        if isinstance(term, BlankNode):
            return Iri(f"urn:skolem:{key}:{order[term.label]}")
        return term

    rewritten = {Triple(swap(t.subject), t.predicate, swap(t.object)) for t in graph}
    return RdfGraph(frozenset(rewritten), graph.prefixes)
