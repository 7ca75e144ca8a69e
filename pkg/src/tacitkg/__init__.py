"""Ontology-grounded procedural knowledge graph pipeline.

Extracts procedural knowledge from instructional transcripts into
ontology-constrained RDF graphs, enriches them with confidence-scored
tacit assertions, validates the results, and evaluates extraction
quality and cost against gold annotations.
"""

__version__ = "0.1.0"
