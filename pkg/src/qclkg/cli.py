"""Command-line entry point: qclkg [--config FILE] [--jobs N] <command> ...

Exit codes: 0 ok, 2 bad input or schema, 3 backend failure, 4 consistency
violations, 5 query error.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .corpus import SchemaError, load_abstract_corpus, load_instruction_dataset, select, split_dataset
from .evaluation import evaluate_run, score_run
from .extractor import (
    SourceText,
    TokenBucket,
    backend_from_config,
    extract_properties,
    post_process,
    sources_from_docs,
)
from .kg import build_graph, load_mapping, parse_turtle, serialize_rdfxml, serialize_turtle, validate_consistency
from .kg.shapes import default_rules
from .kg.turtle import ParseError
from .property_model import MalformedRow, QuantityError, read_records_csv, write_records_csv
from .retrieval import (
    CommandEmbedder,
    HashingEmbedder,
    HttpEmbedder,
    RetrievalError,
    build_index,
    load_index,
    save_index,
)
from .sparql import SparqlError, execute, load_catalog, parse_query, run_cq_suite

log = logging.getLogger("qclkg")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3
EXIT_CONSISTENCY = 4
EXIT_QUERY = 5


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise CliError(f"no {what} configured")
    if not path.exists():
        raise CliError(f"{what} not found: {path}")
    return path


def _write(cfg: RunConfig, name: str, text: str) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out(name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def make_embedder(spec: dict):
    kind = spec.get("type", "hashing")
    dim = int(spec.get("dimension", 256))
    if kind == "hashing":
        return HashingEmbedder(dim)
    if kind == "http":
        return HttpEmbedder(spec["endpoint"], dim, name=spec.get("name"))
    if kind == "command":
        return CommandEmbedder(shlex.split(spec["command"]), dim, name=spec.get("name"))
    raise CliError(f"unknown embedder type {kind!r}")


def _samples(cfg: RunConfig):
    return load_instruction_dataset(_require(cfg.instruction_dataset, "instruction dataset"))


def _split(cfg: RunConfig, samples):
    return split_dataset(samples, cfg.seed, cfg.train_frac, cfg.test_frac)


def _index_for(cfg: RunConfig):
    if cfg.k == 0:
        return None, None
    embedder = make_embedder(cfg.embedder)
    index = load_index(_require(cfg.index_path, "embedding index (run 'qclkg index' first)"))
    return index, embedder


def _limiter(cfg: RunConfig):
    return TokenBucket(cfg.requests_per_second) if cfg.requests_per_second else None


def cmd_ingest(cfg: RunConfig, args) -> int:
    samples = _samples(cfg)
    docs = load_abstract_corpus(_require(cfg.abstract_corpus, "abstract corpus")) if cfg.abstract_corpus else []
    split = _split(cfg, samples)
    path = _write(cfg, "split.json", json.dumps(split.to_json(), indent=2) + "\n")
    counts = {}
    for s in samples:
        counts[s.property_class.value] = counts.get(s.property_class.value, 0) + 1
    print(f"{len(samples)} instruction samples ({', '.join(f'{k}={v}' for k, v in sorted(counts.items()))})")
    print(f"{len(docs)} abstracts")
    print(f"split: train={len(split.train_ids)} test={len(split.test_ids)} holdout={len(split.holdout_ids)} -> {path}")
    return EXIT_OK


def cmd_index(cfg: RunConfig, args) -> int:
    samples = _samples(cfg)
    split = _split(cfg, samples)
    embedder = make_embedder(cfg.embedder)
    index = build_index(select(samples, split.train_ids), embedder, jobs=args.jobs)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out("index.jsonl")
    save_index(index, path)
    print(f"indexed {len(index)} samples with {index.embedder_name} -> {path}")
    return EXIT_OK


def _run_extraction(cfg: RunConfig, sources, jobs: int):
    index, embedder = _index_for(cfg)
    backend = backend_from_config(cfg.backend)
    return extract_properties(
        sources,
        index,
        embedder,
        backend,
        k=cfg.k,
        per_property=cfg.per_property,
        class_filter=cfg.class_filter,
        jobs=jobs,
        rate_limiter=_limiter(cfg),
    )


def cmd_extract(cfg: RunConfig, args) -> int:
    docs = load_abstract_corpus(_require(cfg.abstract_corpus, "abstract corpus"))
    run = _run_extraction(cfg, sources_from_docs(docs), args.jobs)
    records = post_process(run.records, docs)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.out("records.csv"), "w", encoding="utf-8", newline="") as fh:
        write_records_csv(records, fh)
    run.write_audit(cfg.out("audit.jsonl"))
    backend_failures = [f for f in run.failures if f.kind == "backend"]
    print(f"{len(records)} records from {len(docs)} abstracts ({len(run.failures)} failures) -> {cfg.out('records.csv')}")
    if docs and len(backend_failures) == len(docs):
        print("every request to the generation backend failed", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def _report_violations(cfg: RunConfig, report) -> int:
    _write(cfg, "validation.json", json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    for v in report.violations:
        print(f"violation [{v.rule_id}] {v.focus.value} {v.path.value}: {v.message}")
    print(f"{len(report)} violation(s)")
    return EXIT_OK if report.conforms else EXIT_CONSISTENCY


def cmd_build_kg(cfg: RunConfig, args) -> int:
    records_path = _require(Path(args.records) if args.records else cfg.records_path, "records CSV")
    with open(records_path, encoding="utf-8", newline="") as fh:
        records = read_records_csv(fh)
    mapping = load_mapping(cfg.mapping_table)
    graph = build_graph(records, mapping, cfg.base_iri)
    for extra in args.merge or []:
        graph = graph.union(parse_turtle(_require(Path(extra), "Turtle file").read_bytes()).triples)
    _write(cfg, "kg.ttl", serialize_turtle(graph))
    _write(cfg, "kg.rdf", serialize_rdfxml(graph))
    print(f"{len(records)} records -> {len(graph)} triples -> {cfg.out('kg.ttl')}, {cfg.out('kg.rdf')}")
    return _report_violations(cfg, validate_consistency(graph, default_rules(mapping)))


def _load_kg(cfg: RunConfig, override: str | None):
    path = _require(Path(override) if override else cfg.kg_path, "knowledge graph")
    return parse_turtle(path.read_bytes())


def cmd_validate(cfg: RunConfig, args) -> int:
    graph = _load_kg(cfg, args.kg)
    return _report_violations(cfg, validate_consistency(graph, default_rules(load_mapping(cfg.mapping_table))))


def cmd_query(cfg: RunConfig, args) -> int:
    graph = _load_kg(cfg, args.kg)
    if args.all:
        queries = load_catalog(cfg.query_catalog, cfg.expected_results)
        report = run_cq_suite(queries, graph, jobs=args.jobs)
        _write(cfg, "cq-report.json", json.dumps(report.to_json(), indent=2) + "\n")
        print(report.summary(), end="")
        return EXIT_OK if report.answered == len(queries) else EXIT_QUERY
    if not args.target:
        raise CliError("query needs a query id, a .rq file, or --all")
    target = args.target
    if Path(target).suffix == ".rq" or Path(target).is_file():
        text = _require(Path(target), "query file").read_text(encoding="utf-8")
        name = Path(target).stem
    else:
        by_id = {q.query_id: q for q in load_catalog(cfg.query_catalog)}
        if target not in by_id:
            raise CliError(f"unknown query id {target!r}; known: {', '.join(by_id)}")
        text = by_id[target].sparql_text
        name = "cq" + target.replace(".", "_")
    result = execute(parse_query(text), graph)
    _write(cfg, f"query-{name}.json", result.dumps())
    print(result.to_table(), end="")
    print(f"{len(result)} row(s)")
    return EXIT_OK


def _load_predictions(path: Path):
    from .corpus import fragment_from_envelope

    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "id" not in obj:
                raise SchemaError("prediction lacks an 'id'", lineno)
            env = obj.get("prediction")
            preds[obj["id"]] = None if env is None else fragment_from_envelope(env, strict=False)
    return preds


def cmd_eval(cfg: RunConfig, args) -> int:
    if cfg.gold_set is not None:
        gold = load_instruction_dataset(_require(cfg.gold_set, "gold set"))
    else:
        samples = _samples(cfg)
        gold = select(samples, _split(cfg, samples).test_ids)
    if args.predictions:
        predictions = _load_predictions(_require(Path(args.predictions), "predictions file"))
    else:
        sources = [SourceText(s.sample_id, s.sentence, s.instruction) for s in gold]
        run = _run_extraction(cfg, sources, args.jobs)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        run.write_audit(cfg.out("eval-audit.jsonl"))
        predictions = run.fragments()
        if gold and all(f.kind == "backend" for f in run.failures) and len(run.failures) == len(gold):
            print("every request to the generation backend failed", file=sys.stderr)
            return EXIT_BACKEND
    outcomes = score_run(predictions, gold)
    report = evaluate_run(predictions, gold)
    _write(cfg, "eval-outcomes.jsonl", "".join(json.dumps(o.to_json(), sort_keys=True) + "\n" for o in outcomes))
    _write(cfg, "eval-report.json", report.dumps())
    _write(cfg, "eval-report.txt", report.table())
    print(report.table(), end="")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "index": cmd_index,
    "extract": cmd_extract,
    "build-kg": cmd_build_kg,
    "validate": cmd_validate,
    "query": cmd_query,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qclkg", description="QCL property extraction and knowledge graph pipeline.")
    parser.add_argument("--config", default="qclkg.ini", help="INI config file (default: ./qclkg.ini)")
    parser.add_argument("--jobs", type=int, default=1, help="parallel workers for embedding/extraction (default 1)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    sub.add_parser("ingest", help="load and check the datasets, write the train/test split")
    sub.add_parser("index", help="embed the training split and write the index")
    sub.add_parser("extract", help="extract records from the abstract corpus")
    p = sub.add_parser("build-kg", help="map records to RDF, serialize and validate")
    p.add_argument("--records", help="records CSV (default: output_dir/records.csv)")
    p.add_argument("--merge", action="append", metavar="TTL", help="union extra Turtle triples before validation")
    p = sub.add_parser("validate", help="check a Turtle graph against the shape rules")
    p.add_argument("--kg", help="Turtle file (default: output_dir/kg.ttl)")
    p = sub.add_parser("query", help="run a catalog query, a .rq file, or the whole suite")
    p.add_argument("target", nargs="?", help="query id such as 5.2, or a .rq file")
    p.add_argument("--all", action="store_true", help="run the full catalog and check expectations")
    p.add_argument("--kg", help="Turtle file (default: output_dir/kg.ttl)")
    p = sub.add_parser("eval", help="score extraction against the gold set")
    p.add_argument("--predictions", help="JSONL of {id, prediction} to score instead of running the backend")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except SparqlError as exc:
        print(f"query error: {exc}", file=sys.stderr)
        return EXIT_QUERY
    except (
        ConfigError,
        SchemaError,
        MalformedRow,
        QuantityError,
        ParseError,
        RetrievalError,
        FileNotFoundError,
        json.JSONDecodeError,
        ValueError,
        KeyError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
