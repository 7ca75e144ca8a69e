"""Shared fixtures: repo paths, parsed schema/shapes, replay backends."""

from __future__ import annotations

from pathlib import Path

import pytest

from tacitkg.gateway import BackendConfig
from tacitkg.ontology import load_ontology
from tacitkg.pipeline import load_sources
from tacitkg.rdf import parse_turtle
from tacitkg.shapes import load_shapes

REPO = Path(__file__).resolve().parent.parent
DATA = REPO / "data"
FIXTURE_SOURCES = REPO / "scripts" / "fixture_sources"
RESOURCES = REPO / "src" / "tacitkg" / "resources"

PKO = "https://w3id.org/procedural-knowledge/ontology#"

TTL_PREFIXES = """\
@prefix rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .
@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .
@prefix xsd: <http://www.w3.org/2001/XMLSchema#> .
@prefix pko: <https://w3id.org/procedural-knowledge/ontology#> .
"""


@pytest.fixture(scope="session")
def ontology_text() -> str:
    return (RESOURCES / "ontology.ttl").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def schema(ontology_text):
    return load_ontology(ontology_text)


@pytest.fixture(scope="session")
def shapeset():
    doc = (RESOURCES / "shapes.ttl").read_text(encoding="utf-8")
    return load_shapes(parse_turtle(doc))


@pytest.fixture(scope="session")
def corpus_sources():
    return load_sources(DATA / "sources.toml")


@pytest.fixture(scope="session")
def corpus_graphs():
    graphs = {}
    for source_dir in sorted(FIXTURE_SOURCES.iterdir()):
        ttl = source_dir / "graph.ttl"
        if ttl.exists():
            graphs[source_dir.name] = parse_turtle(ttl.read_text(encoding="utf-8"))
    return graphs


@pytest.fixture()
def replay_backend() -> BackendConfig:
    return BackendConfig(
        model_id="Gemini 3.1 Pro",
        kind="replay",
        fixtures_dir=DATA / "fixtures" / "replay",
    )


def ttl(body: str) -> str:
    """Prepend the standard prefixes to a Turtle body."""
    return TTL_PREFIXES + body


def graph(body: str):
    return parse_turtle(ttl(body))


@pytest.fixture()
def replay_config_file(tmp_path) -> Path:
    """A run config replaying the packaged corpus into tmp output dirs."""
    path = tmp_path / "run.toml"
    path.write_text(
        f"""
[paths]
sources_manifest = "{DATA / 'sources.toml'}"
store_dir = "{tmp_path / 'store'}"
out_dir = "{tmp_path / 'out'}"
gold_dir = "{DATA / 'gold'}"

[run]
repetitions = 5

[backend]
model_id = "Gemini 3.1 Pro"
kind = "replay"
fixtures_dir = "{DATA / 'fixtures' / 'replay'}"
""",
        encoding="utf-8",
    )
    return path
