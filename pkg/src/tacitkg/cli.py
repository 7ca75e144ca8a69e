"""Command-line entry point wiring the whole pipeline.

Subcommands mirror the pipeline stages: extract, enrich, validate,
evaluate, cost, query, export, and run-all for the full chain.  Exit
status encodes the failure class:

  0  success
  2  usage/configuration error
  3  model output failed to parse
  4  schema closure (compliance) failure
  5  shape or sequence violations
  6  fatal global consistency failure
  7  backend transport/authentication failure
  8  partial batch failure (some runs succeeded, some failed)
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import evaluation as ev
from .config import ConfigError, RunConfig, load_config
from .costs import (
    STAGE_ENRICHMENT,
    STAGE_FULL,
    STAGE_LAG,
    TokenUsage,
    compute_cost,
    load_price_table,
    load_reference_rows,
    verify_table,
)
from .enrichment import run_enrichment
from .gateway import TranscriptSource
from .ontology import (
    OntologySchema,
    load_ontology,
    schema_closure_check,
    sequence_check,
)
from .pipeline import (
    STAGE_COMPLIANCE,
    STAGE_GLOBAL,
    STAGE_PARSE,
    STAGE_PROMPT,
    STAGE_SHAPES,
    STAGE_TRANSPORT,
    ExtractionRun,
    LoadedSource,
    inferred_graph_name,
    load_sources,
    observed_graph_name,
    run_batch,
)
from .rdf import BlankNode, Iri, Literal, TurtleParseError, parse_turtle
from .shapes import ShapeSet, global_consistency, load_shapes, validate
from .store import BgpQuery, QuadStore, Var

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_COMPLIANCE = 4
EXIT_SHAPES = 5
EXIT_GLOBAL = 6
EXIT_TRANSPORT = 7
EXIT_PARTIAL = 8

_STAGE_EXIT = {
    STAGE_PROMPT: EXIT_USAGE,
    STAGE_PARSE: EXIT_PARSE,
    STAGE_COMPLIANCE: EXIT_COMPLIANCE,
    STAGE_SHAPES: EXIT_SHAPES,
    STAGE_GLOBAL: EXIT_GLOBAL,
    STAGE_TRANSPORT: EXIT_TRANSPORT,
}

EXTRACTION_BATCH = "extraction"
ENRICHED_BATCH = "enriched"


def _load_schema(config: RunConfig) -> OntologySchema:
    return load_ontology(config.ontology_path.read_text(encoding="utf-8"))


def _load_shapeset(config: RunConfig) -> ShapeSet:
    return load_shapes(parse_turtle(config.shapes_path.read_text(encoding="utf-8")))


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    backend = config.backend
    if getattr(args, "backend", None):
        backend = dataclasses.replace(backend, kind=args.backend)
    if getattr(args, "model", None):
        backend = dataclasses.replace(backend, model_id=args.model)
    updates: dict = {"backend": backend}
    if getattr(args, "repetitions", None):
        updates["repetitions"] = args.repetitions
    return dataclasses.replace(config, **updates)


def _batch_exit(runs_count: int, failures: Sequence) -> int:
    if not failures:
        return EXIT_OK
    if runs_count:
        return EXIT_PARTIAL
    return _STAGE_EXIT.get(failures[0].stage, 1)


def _runs_meta_path(config: RunConfig) -> Path:
    return config.store_dir / "runs.json"


def _enrichment_meta_path(config: RunConfig) -> Path:
    return config.store_dir / "enrichment.json"


def cmd_extract(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    config.validate_paths()
    schema = _load_schema(config)
    shapes = _load_shapeset(config)
    sources = load_sources(config.sources_manifest)

    store = QuadStore()
    batch = run_batch(
        [entry.source for entry in sources],
        config.backend,
        schema,
        shapes,
        store,
        repetitions=config.repetitions,
        retries_on_invalid=config.retries_on_invalid,
        diagnostics_dir=config.out_dir / "diagnostics",
    )
    config.store_dir.mkdir(parents=True, exist_ok=True)
    store.save(config.store_dir, EXTRACTION_BATCH)
    meta = {
        "model_id": config.backend.model_id,
        "runs": [
            {
                "run_id": run.run_id,
                "source_id": run.source_id,
                "modality": run.modality,
                "input_tokens": run.usage.input_tokens,
                "output_tokens": run.usage.output_tokens,
                "triples": len(run.graph),
            }
            for run in batch.runs
        ],
        "failures": [dataclasses.asdict(f) for f in batch.failures],
    }
    _runs_meta_path(config).write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")

    print(f"extract: {len(batch.runs)} run(s) stored, {len(batch.failures)} failed")
    for failure in batch.failures:
        print(f"  FAILED {failure.run_id} [{failure.stage}] {failure.message}")
    return _batch_exit(len(batch.runs), batch.failures)


def _stored_runs(
    config: RunConfig, store: QuadStore, schema: OntologySchema
) -> list[ExtractionRun]:
    """Rebuild run records from the store dump plus the runs metadata file."""
    from .ontology import ComplianceReport
    from .shapes import ValidationReport

    meta_path = _runs_meta_path(config)
    if not meta_path.exists():
        raise ConfigError(f"no extraction metadata at {meta_path}; run `extract` first")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    runs = []
    for record in meta["runs"]:
        graph = store.get_graph(observed_graph_name(record["run_id"]))
        if graph is None:
            continue
        runs.append(
            ExtractionRun(
                run_id=record["run_id"],
                source_id=record["source_id"],
                model_id=meta["model_id"],
                modality=record.get("modality", "transcript"),
                graph=graph,
                compliance=ComplianceReport(frozenset(), frozenset()),
                shapes_report=ValidationReport(),
                global_report=ValidationReport(),
                usage=TokenUsage(record["input_tokens"], record["output_tokens"]),
                started=0.0,
                finished=0.0,
            )
        )
    return runs


def cmd_enrich(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    config.validate_paths()
    schema = _load_schema(config)
    sources = {entry.source.source_id: entry for entry in load_sources(config.sources_manifest)}

    store = QuadStore.load(config.store_dir, EXTRACTION_BATCH)
    runs = _stored_runs(config, store, schema)
    if not runs:
        print("enrich: no stored runs to enrich", file=sys.stderr)
        return EXIT_USAGE

    templates = config.prompt_templates()
    records = []
    for run in runs:
        entry = sources.get(run.source_id)
        if entry is None or not isinstance(entry.source, TranscriptSource):
            print(f"enrich: no transcript for source {run.source_id}", file=sys.stderr)
            return EXIT_USAGE
        try:
            enriched = run_enrichment(
                run, entry.source, config.backend, schema, store, templates=templates
            )
        except Exception as exc:  # StageFailure carries its stage
            stage = getattr(exc, "stage", STAGE_TRANSPORT)
            print(f"enrich: run {run.run_id} failed [{stage}]: {exc}", file=sys.stderr)
            return _STAGE_EXIT.get(stage, EXIT_TRANSPORT)
        records.append(
            {
                "run_id": run.run_id,
                "source_id": run.source_id,
                "assertions": len(enriched.assertions),
                "rejections": [r.reason for r in enriched.rejections],
                "input_tokens": enriched.usage.input_tokens,
                "output_tokens": enriched.usage.output_tokens,
            }
        )
    store.save(config.store_dir, ENRICHED_BATCH)
    _enrichment_meta_path(config).write_text(
        json.dumps({"model_id": config.backend.model_id, "runs": records}, indent=2) + "\n",
        encoding="utf-8",
    )
    total = sum(r["assertions"] for r in records)
    print(f"enrich: {len(records)} run(s) enriched, {total} assertions accepted")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    if args.config:
        config = load_config(args.config)
    else:
        config = None
    ontology_path = (
        config.ontology_path
        if config is not None
        else RunConfig.__dataclass_fields__["ontology_path"].default_factory()
    )
    shapes_path = (
        config.shapes_path
        if config is not None
        else RunConfig.__dataclass_fields__["shapes_path"].default_factory()
    )
    schema = load_ontology(Path(ontology_path).read_text(encoding="utf-8"))
    shapes = load_shapes(parse_turtle(Path(shapes_path).read_text(encoding="utf-8")))

    try:
        graph = parse_turtle(Path(args.graph).read_text(encoding="utf-8"))
    except TurtleParseError as exc:
        print(f"validate: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    compliance = schema_closure_check(graph, schema)
    if not compliance.compliant:
        for iri in sorted(compliance.undefined_classes):
            print(f"validate: undefined class {iri}")
        for iri in sorted(compliance.undefined_properties):
            print(f"validate: undefined property {iri}")
        return EXIT_COMPLIANCE

    report = validate(graph, shapes)
    sequence_violations = sequence_check(graph, schema)
    if not report.conforms or sequence_violations:
        for violation in report.violations:
            print(f"validate: shape violation: {violation.message}")
        for violation in sequence_violations:
            print(f"validate: sequence violation: {violation}")
        return EXIT_SHAPES

    global_report = global_consistency(graph, schema)
    if global_report.fatal:
        print(f"validate: FATAL: {global_report.violations[0].message}", file=sys.stderr)
        return EXIT_GLOBAL

    print(f"validate: {args.graph}: conforms ({len(graph)} triples)")
    return EXIT_OK


def _rep1_runs(runs: list[ExtractionRun]) -> list[ExtractionRun]:
    return [run for run in runs if run.run_id.endswith("-r1")]


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    config.validate_paths()
    if config.gold_dir is None:
        print("evaluate: config has no gold_dir", file=sys.stderr)
        return EXIT_USAGE
    schema = _load_schema(config)

    batch = (
        ENRICHED_BATCH if (config.store_dir / f"{ENRICHED_BATCH}.nq").exists() else EXTRACTION_BATCH
    )
    store = QuadStore.load(config.store_dir, batch)
    runs = _stored_runs(config, store, schema)
    if not runs:
        print("evaluate: no stored runs", file=sys.stderr)
        return EXIT_USAGE

    norm = ev.Normalizer()
    mode = args.mode
    results = []
    by_source: dict[str, list[ExtractionRun]] = {}
    for run in runs:
        by_source.setdefault(run.source_id, []).append(run)

    header = f"{'source':<22}{'category':<11}{'view':<10}{'P':>7}{'R':>7}{'F1':>7}  tp/fp/fn"
    print(header)
    print("-" * len(header))
    for source_id, source_runs in sorted(by_source.items()):
        gold_path = config.gold_dir / f"{source_id}.json"
        if not gold_path.exists():
            print(f"evaluate: no gold annotation for {source_id}, skipped", file=sys.stderr)
            continue
        gold = ev.load_gold(gold_path)
        primary = _rep1_runs(source_runs)[0] if _rep1_runs(source_runs) else source_runs[0]

        before = ev.evaluate_graph(primary.graph, gold, schema, norm, mode)
        inferred = store.get_graph(inferred_graph_name(primary.run_id))
        union = primary.graph.union(inferred) if inferred is not None else primary.graph
        after = ev.evaluate_graph(union, gold, schema, norm, mode)
        delta = ev.enrichment_delta(before, after)

        entry = {"source_id": source_id, "mode": mode, "run_id": primary.run_id}
        for view, report in (("observed", before), ("enriched", after)):
            entry[view] = {}
            for category in ev.CATEGORIES:
                metrics = report.category(category)
                entry[view][category] = {
                    "precision": metrics.scores.precision,
                    "recall": metrics.scores.recall,
                    "f1": metrics.scores.f1,
                    "tp": metrics.counts.tp,
                    "fp": metrics.counts.fp,
                    "fn": metrics.counts.fn,
                }
                print(
                    f"{source_id:<22}{category:<11}{view:<10}"
                    f"{metrics.scores.precision:>7.3f}{metrics.scores.recall:>7.3f}"
                    f"{metrics.scores.f1:>7.3f}  "
                    f"{metrics.counts.tp}/{metrics.counts.fp}/{metrics.counts.fn}"
                )
        entry["delta"] = {
            category: {
                "precision": delta.deltas[category].precision,
                "recall": delta.deltas[category].recall,
                "f1": delta.deltas[category].f1,
            }
            for category in ev.CATEGORIES
        }

        if len(source_runs) >= 2:
            stability = ev.stability_report(source_runs, schema)
            entry["stability"] = {
                "all_isomorphic": stability.all_isomorphic,
                "identical_extraction": stability.identical_extraction,
                "jaccard": {c: list(v) for c, v in stability.jaccard.items()},
            }
            print(
                f"{source_id:<22}stability: isomorphic={stability.all_isomorphic} "
                f"identical={stability.identical_extraction}"
            )
        results.append(entry)

    config.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = config.out_dir / "metrics.json"
    out_path.write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")
    print(f"evaluate: wrote {out_path}")
    return EXIT_OK


def cmd_cost(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    config.validate_paths()
    prices = load_price_table(config.prices_path)
    sources = load_sources(config.sources_manifest)
    video_minutes = sum(entry.minutes for entry in sources)

    meta_path = _runs_meta_path(config)
    usage = {STAGE_LAG: TokenUsage(), STAGE_ENRICHMENT: TokenUsage()}
    model_id = config.backend.model_id
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        model_id = meta.get("model_id", model_id)
        for record in meta["runs"]:
            if record["run_id"].endswith("-r1"):
                usage[STAGE_LAG] = usage[STAGE_LAG] + TokenUsage(
                    record["input_tokens"], record["output_tokens"]
                )
    enr_path = _enrichment_meta_path(config)
    if enr_path.exists():
        enr_meta = json.loads(enr_path.read_text(encoding="utf-8"))
        for record in enr_meta["runs"]:
            if record["run_id"].endswith("-r1"):
                usage[STAGE_ENRICHMENT] = usage[STAGE_ENRICHMENT] + TokenUsage(
                    record["input_tokens"], record["output_tokens"]
                )

    report = compute_cost(usage, prices, model_id, video_minutes)
    print(f"cost: model {model_id}, {video_minutes:.1f} min of source video")
    print(f"{'stage':<12}{'$ total':>10}{'$/min':>10}{'$/hour':>10}")
    for stage in (STAGE_LAG, STAGE_ENRICHMENT, STAGE_FULL):
        s = report.stage(stage)
        print(
            f"{stage:<12}{s.dollars_total:>10.4f}{s.dollars_per_min:>10.4f}"
            f"{s.dollars_per_hour:>10.4f}"
        )

    rows = load_reference_rows(config.cost_reference_path)
    problems = verify_table(rows, report=report)
    if problems:
        for problem in problems:
            print(f"cost: DISCREPANCY: {problem}", file=sys.stderr)
        return 1
    print(f"cost: reference table verified ({len(rows)} rows)")
    return EXIT_OK


def _parse_query_term(token: str):
    if token.startswith("?"):
        return Var(token[1:])
    if token.startswith("<") and token.endswith(">"):
        return Iri(token[1:-1])
    if token.startswith("_:"):
        return BlankNode(token[2:])
    if token.startswith('"'):
        body = token[1:]
        if body.endswith('"'):
            return Literal(body[:-1])
        if '"@' in body:
            lexical, lang = body.rsplit('"@', 1)
            return Literal(lexical, language=lang)
        if '"^^<' in body and body.endswith(">"):
            lexical, dt = body.rsplit('"^^<', 1)
            return Literal(lexical, datatype=dt[:-1])
    raise ValueError(f"cannot parse query term: {token!r}")


def cmd_query(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    batch = (
        ENRICHED_BATCH if (config.store_dir / f"{ENRICHED_BATCH}.nq").exists() else EXTRACTION_BATCH
    )
    store = QuadStore.load(config.store_dir, batch)

    patterns = []
    for raw in args.pattern:
        tokens = raw.split()
        if len(tokens) != 3:
            print(f"query: pattern needs exactly 3 terms: {raw!r}", file=sys.stderr)
            return EXIT_USAGE
        try:
            patterns.append(tuple(_parse_query_term(t) for t in tokens))
        except ValueError as exc:
            print(f"query: {exc}", file=sys.stderr)
            return EXIT_USAGE

    query = BgpQuery(patterns=tuple(patterns), graph_scope=args.graph)
    solutions = store.query_bgp(query)
    names = query.variables()
    print("\t".join(names))
    from .rdf import term_key

    for binding in solutions:
        print("\t".join(term_key(binding[n]) for n in names))
    print(f"query: {len(solutions)} solution(s)", file=sys.stderr)
    return EXIT_OK


def cmd_export(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    batch = (
        ENRICHED_BATCH if (config.store_dir / f"{ENRICHED_BATCH}.nq").exists() else EXTRACTION_BATCH
    )
    store = QuadStore.load(config.store_dir, batch)
    payload = store.export_nquads()
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
        print(f"export: wrote {args.out} ({store.total_quads()} quads)")
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_run_all(args: argparse.Namespace) -> int:
    code = cmd_extract(args)
    if code not in (EXIT_OK, EXIT_PARTIAL):
        return code
    enrich_code = cmd_enrich(args)
    if enrich_code != EXIT_OK:
        return enrich_code
    config = load_config(args.config)
    if config.gold_dir is not None:
        eval_code = cmd_evaluate(args)
        if eval_code != EXIT_OK:
            return eval_code
    cost_code = cmd_cost(args)
    if cost_code != EXIT_OK:
        return cost_code
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tacitkg",
        description="Ontology-grounded procedural knowledge graph pipeline.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="TOML run configuration")

    def add_overrides(p: argparse.ArgumentParser) -> None:
        p.add_argument("--backend", choices=["replay", "live"], help="override backend kind")
        p.add_argument("--model", help="override backend model id")
        p.add_argument("--repetitions", type=int, help="override repetition count")

    p = sub.add_parser("extract", help="run the extraction batch")
    add_config(p)
    add_overrides(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("enrich", help="enrich stored runs with tacit assertions")
    add_config(p)
    add_overrides(p)
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("validate", help="validate a Turtle graph file")
    p.add_argument("--graph", required=True, help="Turtle file to validate")
    p.add_argument("--config", help="optional run config (for ontology/shapes paths)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", help="score stored runs against gold annotations")
    add_config(p)
    add_overrides(p)
    p.add_argument(
        "--mode",
        choices=[ev.MODE_OPERATION, ev.MODE_PROCEDURE],
        default=ev.MODE_OPERATION,
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("cost", help="token cost report plus reference-table check")
    add_config(p)
    add_overrides(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("query", help="run a basic graph pattern over the store")
    add_config(p)
    p.add_argument(
        "--pattern",
        action="append",
        required=True,
        help="triple pattern, e.g. '?s <iri> ?o' (repeatable)",
    )
    p.add_argument("--graph", help="restrict to one named graph")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("export", help="dump the store as N-Quads")
    add_config(p)
    p.add_argument("--out", help="output file (default: stdout)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("run-all", help="extract, enrich, evaluate, cost")
    add_config(p)
    add_overrides(p)
    p.add_argument(
        "--mode",
        choices=[ev.MODE_OPERATION, ev.MODE_PROCEDURE],
        default=ev.MODE_OPERATION,
    )
    p.set_defaults(func=cmd_run_all)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{parser.prog}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"{parser.prog}: missing file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
