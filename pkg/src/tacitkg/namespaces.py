"""Namespace IRIs shared across the pipeline."""

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"
SH = "http://www.w3.org/ns/shacl#"

# Artifact-defined vocabularies.
PKO = "https://w3id.org/procedural-knowledge/ontology#"
ENR = "https://w3id.org/procedural-knowledge/enrichment#"

RDF_TYPE = RDF + "type"
RDF_LANG_STRING = RDF + "langString"
RDFS_LABEL = RDFS + "label"
RDFS_COMMENT = RDFS + "comment"
XSD_STRING = XSD + "string"
XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_BOOLEAN = XSD + "boolean"

WELL_KNOWN_PREFIXES = {
    "rdf": RDF,
    "rdfs": RDFS,
    "owl": OWL,
    "xsd": XSD,
    "sh": SH,
    "pko": PKO,
    "enr": ENR,
}


def local_name(iri: str) -> str:
    """Substring after the last '#' or '/' (or ':' for URN-style IRIs)."""
    for sep in ("#", "/"):
        if sep in iri:
            return iri.rsplit(sep, 1)[1]
    if ":" in iri:
        return iri.rsplit(":", 1)[1]
    return iri
