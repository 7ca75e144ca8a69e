"""End-to-end command-line behaviour against the replay corpus: every
subcommand, every documented exit code."""

import json

import pytest

from conftest import DATA, TTL_PREFIXES
from tacitkg.cli import (
    EXIT_COMPLIANCE,
    EXIT_GLOBAL,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_PARTIAL,
    EXIT_SHAPES,
    EXIT_TRANSPORT,
    EXIT_USAGE,
    main,
)
from tacitkg.namespaces import PKO, RDF_TYPE

FIXTURES = DATA / "fixtures" / "replay"


def make_config(root, fixtures_dir=FIXTURES, sources=None, repetitions=5, gold=True):
    path = root / "run.toml"
    gold_line = f'gold_dir = "{DATA / "gold"}"' if gold else ""
    path.write_text(
        f"""
[paths]
sources_manifest = "{sources or DATA / 'sources.toml'}"
store_dir = "{root / 'store'}"
out_dir = "{root / 'out'}"
{gold_line}

[run]
repetitions = {repetitions}

[backend]
model_id = "Gemini 3.1 Pro"
kind = "replay"
fixtures_dir = "{fixtures_dir}"
""",
        encoding="utf-8",
    )
    return path


@pytest.fixture(scope="module")
def ran(tmp_path_factory):
    """One extract+enrich pass shared by the read-only command tests."""
    root = tmp_path_factory.mktemp("cli-run")
    config = make_config(root, repetitions=2)
    assert main(["extract", "--config", str(config)]) == EXIT_OK
    assert main(["enrich", "--config", str(config)]) == EXIT_OK
    return config


class TestExtract:
    def test_full_batch(self, tmp_path, capsys):
        config = make_config(tmp_path, repetitions=1)
        assert main(["extract", "--config", str(config)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "3 run(s) stored, 0 failed" in out
        store_dir = tmp_path / "store"
        assert (store_dir / "extraction.nq").exists()
        assert (store_dir / "manifest.json").exists()
        meta = json.loads((store_dir / "runs.json").read_text())
        assert meta["model_id"] == "Gemini 3.1 Pro"
        assert len(meta["runs"]) == 3
        assert all(r["triples"] > 0 for r in meta["runs"])
        assert meta["failures"] == []

    def test_repetitions_override(self, tmp_path, capsys):
        config = make_config(tmp_path, repetitions=5)
        assert main(["extract", "--config", str(config), "--repetitions", "1"]) == EXIT_OK
        assert "3 run(s) stored" in capsys.readouterr().out

    def test_partial_batch_exit(self, tmp_path, capsys):
        # A fourth source with no recorded fixture fails transport while the
        # packaged three succeed.
        phantom = tmp_path / "phantom.txt"
        phantom.write_text("An undocumented teardown.", encoding="utf-8")
        manifest = tmp_path / "sources.toml"
        manifest.write_text(
            (DATA / "sources.toml")
            .read_text(encoding="utf-8")
            .replace("transcripts/", f"{DATA / 'transcripts'}/")
            + f"""
[[sources]]
id = "phantom"
transcript = "{phantom}"
minutes = 1.0
""",
            encoding="utf-8",
        )
        config = make_config(tmp_path, sources=manifest, repetitions=1)
        assert main(["extract", "--config", str(config)]) == EXIT_PARTIAL
        out = capsys.readouterr().out
        assert "3 run(s) stored, 1 failed" in out
        assert "FAILED phantom" in out and "[transport]" in out

    def test_all_failed_maps_to_stage_exit(self, tmp_path):
        empty = tmp_path / "no-fixtures"
        empty.mkdir()
        config = make_config(tmp_path, fixtures_dir=empty, repetitions=1)
        assert main(["extract", "--config", str(config)]) == EXIT_TRANSPORT

    def test_missing_config_file(self, tmp_path):
        assert main(["extract", "--config", str(tmp_path / "absent.toml")]) == EXIT_USAGE


class TestEnrich:
    def test_requires_prior_extract(self, tmp_path, capsys):
        config = make_config(tmp_path)
        assert main(["enrich", "--config", str(config)]) == EXIT_USAGE

    def test_enrich_writes_batch_and_meta(self, ran, capsys):
        store_dir = ran.parent / "store"
        assert (store_dir / "enriched.nq").exists()
        meta = json.loads((store_dir / "enrichment.json").read_text())
        assert len(meta["runs"]) == 6  # 3 sources x 2 repetitions
        # One deliberately redundant record per gamegear run is dropped.
        by_source = {}
        for record in meta["runs"]:
            by_source.setdefault(record["source_id"], record)
        assert by_source["gamegear-speaker"]["assertions"] == 1
        assert any("no new content" in r for r in by_source["gamegear-speaker"]["rejections"])
        assert by_source["pixel-display"]["assertions"] == 2


class TestValidate:
    def test_conforming_graph(self, tmp_path, capsys):
        graph_file = DATA.parent / "scripts" / "fixture_sources" / "pixel-display" / "graph.ttl"
        assert main(["validate", "--graph", str(graph_file)]) == EXIT_OK
        assert "conforms" in capsys.readouterr().out

    def test_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.ttl"
        bad.write_text("this is not turtle @@@", encoding="utf-8")
        assert main(["validate", "--graph", str(bad)]) == EXIT_PARSE

    def test_schema_closure_failure(self, tmp_path, capsys):
        bad = tmp_path / "noncompliant.ttl"
        bad.write_text(
            TTL_PREFIXES + "<urn:x:1> pko:frobnicates <urn:x:2> .\n", encoding="utf-8"
        )
        assert main(["validate", "--graph", str(bad)]) == EXIT_COMPLIANCE
        assert "undefined property" in capsys.readouterr().out

    def test_sequence_violation(self, tmp_path, capsys):
        bad = tmp_path / "broken-chain.ttl"
        bad.write_text(
            TTL_PREFIXES
            + """
<urn:x:p> a pko:Process ; rdfs:label "p" ;
    pko:firstStep <urn:x:s1> ; pko:lastStep <urn:x:s2> .
<urn:x:s1> a pko:Step ; rdfs:label "s1" ; pko:nextStep <urn:x:s2> ;
    pko:hasOperation <urn:x:op1> .
<urn:x:s2> a pko:Step ; rdfs:label "s2" ; pko:hasOperation <urn:x:op2> .
<urn:x:op1> a pko:Operation ; rdfs:label "do a thing" ;
    pko:affectsArtifact <urn:x:a> .
<urn:x:op2> a pko:Operation ; rdfs:label "do another" ;
    pko:affectsArtifact <urn:x:a> .
<urn:x:a> a pko:Artifact ; rdfs:label "artifact" .
""",
            encoding="utf-8",
        )
        assert main(["validate", "--graph", str(bad)]) == EXIT_SHAPES
        assert "sequence violation" in capsys.readouterr().out

    def test_global_fatal(self, tmp_path, capsys):
        bad = tmp_path / "zero-step.ttl"
        bad.write_text(
            TTL_PREFIXES
            + """
<urn:x:op1> a pko:Operation ; rdfs:label "solder" ; pko:usesTool <urn:x:iron> .
<urn:x:iron> a pko:Tool ; rdfs:label "soldering iron" .
""",
            encoding="utf-8",
        )
        assert main(["validate", "--graph", str(bad)]) == EXIT_GLOBAL
        assert "FATAL" in capsys.readouterr().err


class TestEvaluate:
    def test_metrics_written(self, ran, capsys):
        assert main(["evaluate", "--config", str(ran)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "pixel-display" in out
        assert "stability: isomorphic=True identical=True" in out
        metrics = json.loads((ran.parent / "out" / "metrics.json").read_text())
        by_source = {entry["source_id"]: entry for entry in metrics}
        pixel = by_source["pixel-display"]
        assert pixel["observed"]["tools"]["recall"] == pytest.approx(0.8)
        assert pixel["enriched"]["tools"]["recall"] == pytest.approx(1.0)
        assert pixel["delta"]["tools"]["precision"] == pytest.approx(0.0)
        assert pixel["stability"]["all_isomorphic"] is True

    def test_requires_gold_dir(self, tmp_path):
        config = make_config(tmp_path, gold=False)
        assert main(["evaluate", "--config", str(config)]) == EXIT_USAGE

    def test_requires_stored_runs(self, tmp_path):
        config = make_config(tmp_path)
        assert main(["evaluate", "--config", str(config)]) == EXIT_USAGE


class TestCost:
    def test_report_and_reference_check(self, ran, capsys):
        assert main(["cost", "--config", str(ran)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "22.5 min of source video" in out
        assert "reference table verified (5 rows)" in out
        for stage in ("lag", "enrichment", "full"):
            assert stage in out


class TestQuery:
    def test_named_variables_tsv(self, ran, capsys):
        code = main(
            [
                "query",
                "--config",
                str(ran),
                "--pattern",
                f"?tool <{RDF_TYPE}> <{PKO}Tool>",
            ]
        )
        assert code == EXIT_OK
        captured = capsys.readouterr()
        lines = captured.out.strip().splitlines()
        assert lines[0] == "tool"
        assert any("soldering-iron" in line for line in lines[1:])
        assert "solution(s)" in captured.err

    def test_scoped_to_named_graph(self, ran, capsys):
        code = main(
            [
                "query",
                "--config",
                str(ran),
                "--graph",
                "run:gamegear-speaker-gemini-3-1-pro-r1:observed",
                "--pattern",
                f"?s <{RDF_TYPE}> ?c",
            ]
        )
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "c\ts"  # variable columns come out sorted
        assert all("urn:" in line for line in lines[1:])

    def test_join_across_patterns(self, ran, capsys):
        code = main(
            [
                "query",
                "--config",
                str(ran),
                "--pattern",
                f"?op <{PKO}usesTool> ?tool",
                "--pattern",
                f"?tool <{RDF_TYPE}> <{PKO}Tool>",
            ]
        )
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "op\ttool"
        assert len(lines) > 1

    def test_pattern_arity_checked(self, ran, capsys):
        assert main(["query", "--config", str(ran), "--pattern", "?s ?p"]) == EXIT_USAGE

    def test_unparseable_term(self, ran, capsys):
        assert (
            main(["query", "--config", str(ran), "--pattern", "?s ?p nonsense"]) == EXIT_USAGE
        )


class TestExport:
    def test_export_to_file(self, ran, tmp_path, capsys):
        out_file = tmp_path / "dump.nq"
        assert main(["export", "--config", str(ran), "--out", str(out_file)]) == EXIT_OK
        payload = out_file.read_text(encoding="utf-8")
        assert payload.count("\n") > 100
        assert "<run:pixel-display-gemini-3-1-pro-r1:observed>" in payload

    def test_export_to_stdout(self, ran, capsys):
        assert main(["export", "--config", str(ran)]) == EXIT_OK
        assert " .\n" in capsys.readouterr().out


class TestRunAll:
    def test_chained_pipeline(self, tmp_path, capsys):
        config = make_config(tmp_path, repetitions=2)
        assert main(["run-all", "--config", str(config)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "extract: 6 run(s) stored, 0 failed" in out
        assert "enrich:" in out
        assert "evaluate: wrote" in out
        assert "reference table verified" in out

    def test_stops_on_extract_failure(self, tmp_path, capsys):
        empty = tmp_path / "no-fixtures"
        empty.mkdir()
        config = make_config(tmp_path, fixtures_dir=empty, repetitions=1)
        assert main(["run-all", "--config", str(config)]) == EXIT_TRANSPORT
        assert "enrich:" not in capsys.readouterr().out


class TestParser:
    def test_no_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main([])
        assert excinfo.value.code == 2

    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["frobnicate"])
        assert excinfo.value.code == 2
