"""Command-line interface.

Each pipeline phase is exposed as its own subcommand so it can be run and
inspected in isolation; `run` composes all of them from a config file.
Exit codes: 0 success, 1 validation failure, 2 phase failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import cleaning, completion, consistency, correction, pipeline, refinement
from .model import KnowledgeGraph, Term, ontology_from_triples
from .rdf_io import (
    parse_ntriples,
    parse_scored_jsonl,
    parse_turtle,
    render_triple,
    serialize_ntriples,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PHASE = 2


def _read_graph(path: Path, default_confidence: float = 1.0) -> KnowledgeGraph:
    triples, diags = parse_ntriples(path.read_bytes())
    if diags:
        first = diags[0]
        raise ValueError(f"{path}:{first.line}: {first.message} (+{len(diags) - 1} more)")
    kg = KnowledgeGraph()
    for t in triples:
        kg.add_triple(t, default_confidence)
    return kg


def _read_ontology(path: Path):
    data = path.read_bytes()
    triples, diags = parse_ntriples(data) if path.suffix == ".nt" else parse_turtle(data)
    if diags:
        first = diags[0]
        raise ValueError(f"{path}:{first.line}: {first.message} (+{len(diags) - 1} more)")
    return ontology_from_triples(triples)


def _read_lines(path: Path) -> list[str]:
    return [
        line.strip()
        for line in path.read_text("utf-8").splitlines()
        if line.strip() and not line.startswith("#")
    ]


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ----------------------------------------------------------------------
# subcommand handlers

def _cmd_clean(args) -> int:
    cfg_kwargs = {}
    if args.min_words is not None:
        cfg_kwargs["min_words"] = args.min_words
    if args.denylist is not None:
        cfg_kwargs["denylist"] = cleaning.load_denylist(Path(args.denylist))
    summary = cleaning.clean_directory(
        Path(args.in_dir), Path(args.out_dir), cleaning.CleanConfig(**cfg_kwargs), args.format
    )
    print(f"cleaned {len(summary['files'])} files: kept {summary['total_kept']} sentences")
    return EXIT_OK


def _cmd_ingest(args) -> int:
    statements, diags = parse_scored_jsonl(Path(args.in_file).read_bytes())
    kg = KnowledgeGraph()
    for st in statements:
        kg.add(st)
    Path(args.out).write_bytes(serialize_ntriples(kg.triples()))
    if args.report:
        _write_json(
            Path(args.report),
            {
                "records": len(statements),
                "diagnostics": [{"line": d.line, "message": d.message} for d in diags],
                "statements": len(kg),
                "unknown_classes": sorted(kg.unknown_classes()),
            },
        )
    print(f"ingested {len(statements)} records into {len(kg)} statements ({len(diags)} diagnostics)")
    return EXIT_OK


def _cmd_refine(args) -> int:
    statements, diags = parse_scored_jsonl(Path(args.in_file).read_bytes())
    kg = KnowledgeGraph()
    for st in statements:
        kg.add(st)
    schema = _read_ontology(Path(args.schema)) if args.schema else None
    cfg = refinement.RefineConfig(
        low_threshold=args.low,
        band_upper=args.high,
        lof_k=args.lof_k,
        lof_threshold=args.lof_threshold,
    )
    refined, report = refinement.refine(kg, schema, cfg)
    Path(args.out).write_bytes(serialize_ntriples(refined.triples()))
    _write_json(
        Path(args.report),
        {
            "removed_by_threshold": [render_triple(st.triple) for st in report.removed_by_threshold],
            "removed_by_lof": [
                {"triple": render_triple(st.triple), "lof": lof} for st, lof in report.removed_by_lof
            ],
            "removed_implausible": [
                {"triple": render_triple(i.statement.triple), "count": i.count}
                for i in report.removed_implausible
            ],
            "removed_disconnected": [
                render_triple(st.triple) for st in report.removed_disconnected
            ],
            "kept": report.kept,
            "notes": report.notes,
            "ingest_diagnostics": len(diags),
        },
    )
    print(f"refined: kept {report.kept} data statements")
    return EXIT_OK


def _cmd_correct(args) -> int:
    kg = _read_graph(Path(args.in_file))
    reference = _read_ontology(Path(args.axioms))
    if args.reference:
        facts, diags = parse_ntriples(Path(args.reference).read_bytes())
        if diags:
            raise ValueError(f"{args.reference}: {len(diags)} unparseable lines")
        reference.facts |= set(facts)
    functional = frozenset(_read_lines(Path(args.functional))) if args.functional else frozenset()
    cfg = correction.CorrectionConfig(functional=functional, sim_threshold=args.sim_threshold)
    corrected, report = correction.correct(kg, reference, cfg)
    Path(args.out).write_bytes(serialize_ntriples(corrected.triples()))
    _write_json(
        Path(args.report),
        {
            "checked": report.checked,
            "violations": [{"kind": v.kind, "triple": render_triple(v.triple)} for v in report.violations],
            "deleted": [render_triple(t) for t in report.deleted],
            "replaced": [
                {"old": render_triple(old), "new": render_triple(new)}
                for old, new in report.replaced
            ],
        },
    )
    print(
        f"corrected: {len(report.violations)} violations, "
        f"{len(report.deleted)} deleted, {len(report.replaced)} replaced"
    )
    return EXIT_OK


def _cmd_complete(args) -> int:
    kg = _read_graph(Path(args.in_file))
    pool = completion.training_triples(kg)
    if args.train_extra:
        pool = sorted(set(pool) | set(completion.load_tsv(Path(args.train_extra))))
    if not pool:
        print("nothing to train on; graph copied through", file=sys.stderr)
        Path(args.out).write_bytes(serialize_ntriples(kg.triples()))
        return EXIT_OK
    cfg = completion.TrainConfig(
        dimension=args.dim,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        l2_lambda=args.l2,
        negatives_per_positive=args.negatives,
        seed=args.seed,
    )
    metrics_payload: dict = {}
    if args.holdout > 0:
        import numpy as np

        rng = np.random.default_rng(cfg.seed)
        order = rng.permutation(len(pool))
        cut = max(1, int(len(pool) * (1 - args.holdout)))
        train_split = [pool[i] for i in sorted(order[:cut])]
        test_split = [pool[i] for i in sorted(order[cut:])]
        model = completion.train(train_split, cfg)
        test_known = [t for t in test_split if _covered(model, t)]
        metrics = completion.evaluate(model, test_known, pool)
        metrics_payload["holdout"] = {
            "mrr": metrics.mrr,
            "hits": {str(k): v for k, v in metrics.hits.items()},
            "evaluated": metrics.evaluated,
        }
    else:
        model = completion.train(pool, cfg)
    relations = [Term.iri(r) for r in _read_lines(Path(args.predict_relations))] if args.predict_relations else []
    predictions = completion.predict_missing(model, kg, relations, args.threshold, args.top_k)
    for st in predictions:
        kg.add(st)
    Path(args.out).write_bytes(serialize_ntriples(kg.triples()))
    if args.model_out:
        completion.save_model(model, args.model_out)
    if args.metrics:
        metrics_payload.update(
            {
                "trained_on": len(pool),
                "final_loss": model.loss_history[-1],
                "predicted": len(predictions),
                "predictions": [
                    {"triple": render_triple(st.triple), "confidence": st.confidence}
                    for st in predictions
                ],
            }
        )
        _write_json(Path(args.metrics), metrics_payload)
    print(f"completed: {len(predictions)} predicted statements")
    return EXIT_OK


def _covered(model: completion.EmbeddingModel, t) -> bool:
    return (
        t.subject in model.entity_index
        and t.predicate in model.relation_index
        and t.object in model.entity_index
    )


def _cmd_map(args) -> int:
    kg = _read_graph(Path(args.in_file))
    domain = _read_ontology(Path(args.domain))
    final, report = consistency.map_to_domain(kg, domain)
    Path(args.out).write_bytes(serialize_ntriples(final.triples()))
    _write_json(
        Path(args.report),
        {
            "epsilon_total": report.epsilon_total,
            "per_concept": [
                {
                    "concept": inc.concept,
                    "offending_properties": sorted(inc.offending_properties),
                    "epsilon_c": inc.epsilon_c,
                }
                for inc in report.per_concept
            ],
            "removed": [render_triple(t) for t in report.removed_triples],
            "retained": report.retained,
        },
    )
    print(f"mapped: epsilon={report.epsilon_total}, retained {report.retained} statements")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = pipeline.PipelineConfig.from_file(Path(args.config))
    if args.output_dir:
        config.output_dir = Path(args.output_dir)
    if args.seed is not None:
        config.seed = args.seed
    diagnostics = pipeline.validate(config)
    if diagnostics:
        for d in diagnostics:
            print(f"invalid config: {d}", file=sys.stderr)
        return EXIT_VALIDATION
    result = pipeline.run(config)
    print(f"pipeline finished; final ontology at {result.final_ontology}")
    return EXIT_OK


def _cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        print(f"no manifest at {manifest_path}", file=sys.stderr)
        return EXIT_VALIDATION
    manifest = json.loads(manifest_path.read_text("utf-8"))
    print(f"run {manifest['config_hash'][:12]} (seed {manifest['seed']})")
    for phase in pipeline.PHASES:
        phase_counts = manifest["phases"].get(phase, {})
        rendered = ", ".join(f"{k}={v}" for k, v in sorted(phase_counts.items()))
        print(f"  {phase:<9} {rendered}")
    timing_path = run_dir / "timing.json"
    if timing_path.is_file():
        timing = json.loads(timing_path.read_text("utf-8"))
        print(f"  total     {timing.get('total', '?')}s")
    return EXIT_OK


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ontogen",
        description="Convert scored triples and text corpora into a domain-consistent ontology.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("clean", help="strip boilerplate from a document directory")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--format", choices=["html", "rss", "xml", "plain"])
    p.add_argument("--denylist", help="file with one denylist token per line")
    p.add_argument("--min-words", type=int, dest="min_words")
    p.set_defaults(func=_cmd_clean)

    p = sub.add_parser("ingest", help="load scored-triple records into an N-Triples graph")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("refine", help="anomaly exclusion over scored triples")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--schema")
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--low", type=float, default=0.3)
    p.add_argument("--high", type=float, default=0.5)
    p.add_argument("--lof-k", type=int, default=5, dest="lof_k")
    p.add_argument("--lof-threshold", type=float, default=1.5, dest="lof_threshold")
    p.set_defaults(func=_cmd_refine)

    p = sub.add_parser("correct", help="axiom and reference-fact error correction")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--axioms", required=True)
    p.add_argument("--reference")
    p.add_argument("--functional", help="file with one functional property IRI per line")
    p.add_argument("--sim-threshold", type=float, default=0.8, dest="sim_threshold")
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_correct)

    p = sub.add_parser("complete", help="train embeddings and predict missing statements")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--train-extra", dest="train_extra", help="extra (h, r, t) TSV triples")
    p.add_argument("--dim", type=int, default=50)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=128, dest="batch_size")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--l2", type=float, default=1e-3)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--predict-relations", dest="predict_relations",
                   help="file with one relation IRI per line")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--top-k", type=int, default=1, dest="top_k")
    p.add_argument("--holdout", type=float, default=0.0,
                   help="fraction held out for filtered-rank metrics")
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--model-out", dest="model_out")
    p.set_defaults(func=_cmd_complete)

    p = sub.add_parser("map", help="trim the graph to a target domain ontology")
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--domain", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_map)

    p = sub.add_parser("run", help="run the whole pipeline from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="summarize a finished run directory")
    p.add_argument("--run-dir", dest="run_dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except pipeline.ValidationError as exc:
        for d in exc.diagnostics:
            print(f"invalid config: {d}", file=sys.stderr)
        return EXIT_VALIDATION
    except pipeline.PhaseError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_PHASE
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PHASE


if __name__ == "__main__":
    sys.exit(main())
