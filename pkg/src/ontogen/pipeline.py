"""Staged pipeline: clean, ingest, refine, correct, complete, map.

Phases hand off through on-disk artifacts so every intermediate graph is
inspectable; each phase also writes a JSON report.  The run manifest holds
the config hash, seed, and per-phase counts and is byte-reproducible for a
fixed config and seed; wall-clock timings go to a separate timing file.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import cleaning, completion, consistency, correction, refinement
from .model import KnowledgeGraph, OntologySchema, Term, ontology_from_triples
from .rdf_io import (
    local_name,
    parse_ntriples,
    parse_scored_jsonl,
    parse_turtle,
    render_triple,
    serialize_ntriples,
)

ARTIFACTS = {
    "clean": "cleaned",
    "ingest": "kg-raw.nt",
    "refine": "kg-refined.nt",
    "correct": "kg-corrected.nt",
    "complete": "kg-completed.nt",
    "map": "ontology.nt",
}

PHASES = ("clean", "ingest", "refine", "correct", "complete", "map")


class ValidationError(ValueError):
    def __init__(self, diagnostics: list[str]):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = diagnostics


class PhaseError(RuntimeError):
    def __init__(self, phase: str, cause: Exception):
        super().__init__(f"phase {phase!r} failed: {cause}")
        self.phase = phase
        self.cause = cause


@dataclass
class PipelineConfig:
    scored_triples: Path
    reference_axioms: Path
    domain_ontology: Path
    output_dir: Path
    corpus_dir: Path | None = None
    reference_facts: Path | None = None
    seed: int = 42
    clean_format: str | None = None
    clean_options: dict = field(default_factory=dict)
    refine_options: dict = field(default_factory=dict)
    correction_options: dict = field(default_factory=dict)
    train_options: dict = field(default_factory=dict)
    train_extra: Path | None = None
    predict_relations: list[str] = field(default_factory=list)
    predict_threshold: float = 0.5
    predict_top_k: int = 1
    holdout_fraction: float = 0.0
    agreement_sim_threshold: float = 0.8

    # ------------------------------------------------------------------

    @staticmethod
    def from_file(path: Path) -> "PipelineConfig":
        raw = yaml.safe_load(path.read_text("utf-8")) or {}
        if not isinstance(raw, dict):
            raise ValidationError([f"{path}: config must be a mapping"])
        base = path.resolve().parent

        def pathify(key: str) -> Path | None:
            value = raw.get(key)
            if value is None:
                return None
            p = Path(str(value))
            return p if p.is_absolute() else base / p

        complete_opts = dict(raw.get("complete", {}) or {})
        extra = complete_opts.pop("train_extra", None)
        return PipelineConfig(
            scored_triples=pathify("scored_triples") or base / "triples.jsonl",
            reference_axioms=pathify("reference_axioms") or base / "axioms.ttl",
            domain_ontology=pathify("domain_ontology") or base / "domain.ttl",
            output_dir=pathify("output_dir") or base / "out",
            corpus_dir=pathify("corpus_dir"),
            reference_facts=pathify("reference_facts"),
            seed=int(raw.get("seed", 42)),
            clean_format=raw.get("clean", {}).get("format") if raw.get("clean") else None,
            clean_options={
                k: v for k, v in (raw.get("clean", {}) or {}).items() if k != "format"
            },
            refine_options=dict(raw.get("refine", {}) or {}),
            correction_options=dict(raw.get("correct", {}) or {}),
            train_options={
                k: v
                for k, v in complete_opts.items()
                if k not in ("predict_relations", "threshold", "top_k", "holdout")
            },
            train_extra=(base / extra if extra and not Path(extra).is_absolute() else (Path(extra) if extra else None)),
            predict_relations=[str(r) for r in complete_opts.get("predict_relations", [])],
            predict_threshold=float(complete_opts.get("threshold", 0.5)),
            predict_top_k=int(complete_opts.get("top_k", 1)),
            holdout_fraction=float(complete_opts.get("holdout", 0.0)),
            agreement_sim_threshold=float(
                (raw.get("correct", {}) or {}).get("sim_threshold", 0.8)
            ),
        )

    def make_clean_config(self) -> cleaning.CleanConfig:
        opts = dict(self.clean_options)
        if "denylist" in opts:
            opts["denylist"] = frozenset(opts["denylist"])
        return cleaning.CleanConfig(**opts)

    def make_refine_config(self) -> refinement.RefineConfig:
        return refinement.RefineConfig(**self.refine_options)

    def make_correction_config(self) -> correction.CorrectionConfig:
        opts = dict(self.correction_options)
        functional = frozenset(opts.pop("functional", []))
        return correction.CorrectionConfig(functional=functional, **opts)

    def make_train_config(self) -> completion.TrainConfig:
        opts = dict(self.train_options)
        opts.setdefault("seed", self.seed)
        return completion.TrainConfig(**opts)

    def canonical_dict(self) -> dict:
        return {
            "scored_triples": str(self.scored_triples),
            "reference_axioms": str(self.reference_axioms),
            "domain_ontology": str(self.domain_ontology),
            "output_dir": str(self.output_dir),
            "corpus_dir": str(self.corpus_dir) if self.corpus_dir else None,
            "reference_facts": str(self.reference_facts) if self.reference_facts else None,
            "seed": self.seed,
            "clean_format": self.clean_format,
            "clean_options": self.clean_options,
            "refine_options": self.refine_options,
            "correction_options": {
                k: (sorted(v) if isinstance(v, (list, set, frozenset)) else v)
                for k, v in self.correction_options.items()
            },
            "train_options": self.train_options,
            "train_extra": str(self.train_extra) if self.train_extra else None,
            "predict_relations": self.predict_relations,
            "predict_threshold": self.predict_threshold,
            "predict_top_k": self.predict_top_k,
            "holdout_fraction": self.holdout_fraction,
            "agreement_sim_threshold": self.agreement_sim_threshold,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _load_ontology(path: Path) -> OntologySchema:
    data = path.read_bytes()
    if path.suffix == ".nt":
        triples, diags = parse_ntriples(data)
    else:
        triples, diags = parse_turtle(data)
    if diags:
        first = diags[0]
        raise ValueError(f"{path}:{first.line}: {first.message} (+{len(diags) - 1} more)")
    return ontology_from_triples(triples)


def validate(config: PipelineConfig) -> list[str]:
    """Collect configuration diagnostics; an empty list means runnable."""
    out: list[str] = []
    for name, path, required in (
        ("scored_triples", config.scored_triples, True),
        ("reference_axioms", config.reference_axioms, True),
        ("domain_ontology", config.domain_ontology, True),
        ("reference_facts", config.reference_facts, False),
        ("train_extra", config.train_extra, False),
    ):
        if path is None:
            continue
        if not Path(path).is_file():
            out.append(f"{name}: no such file: {path}")
    if config.corpus_dir is not None and not Path(config.corpus_dir).is_dir():
        out.append(f"corpus_dir: no such directory: {config.corpus_dir}")

    for maker, label in (
        (config.make_clean_config, "clean"),
        (config.make_refine_config, "refine"),
        (config.make_correction_config, "correct"),
        (config.make_train_config, "complete"),
    ):
        try:
            maker()
        except (TypeError, ValueError) as exc:
            out.append(f"{label}: {exc}")

    for label, path in (
        ("reference_axioms", config.reference_axioms),
        ("domain_ontology", config.domain_ontology),
    ):
        if Path(path).is_file():
            try:
                _load_ontology(Path(path))
            except ValueError as exc:
                out.append(f"{label}: {exc}")
    return out


@dataclass
class PipelineResult:
    output_dir: Path
    manifest: dict
    final_ontology: Path


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_graph(path: Path, kg: KnowledgeGraph) -> None:
    path.write_bytes(serialize_ntriples(kg.triples()))


def run(config: PipelineConfig) -> PipelineResult:
    """Execute all phases in order, writing artifacts, reports, a manifest,
    and a timing file under the configured output directory."""
    diagnostics = validate(config)
    if diagnostics:
        raise ValidationError(diagnostics)

    out_dir = Path(config.output_dir)
    reports_dir = out_dir / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)

    counts: dict[str, dict] = {}
    timing: dict[str, float] = {}
    started = time.perf_counter()

    def timed(phase: str):
        class _Timer:
            def __enter__(self_inner):
                self_inner.t0 = time.perf_counter()

            def __exit__(self_inner, exc_type, exc, tb):
                timing[phase] = round(time.perf_counter() - self_inner.t0, 6)
                if exc is not None and not isinstance(exc, PhaseError):
                    raise PhaseError(phase, exc) from exc

        return _Timer()

    # clean ------------------------------------------------------------
    with timed("clean"):
        cleaned_dir = out_dir / ARTIFACTS["clean"]
        if config.corpus_dir is not None:
            summary = cleaning.clean_directory(
                Path(config.corpus_dir), cleaned_dir, config.make_clean_config(), config.clean_format
            )
        else:
            cleaned_dir.mkdir(parents=True, exist_ok=True)
            summary = {"files": {}, "total_kept": 0, "total_dropped": 0}
        _write_json(reports_dir / "clean.json", summary)
        counts["clean"] = {
            "files": len(summary["files"]),
            "kept": summary["total_kept"],
            "dropped": summary["total_dropped"],
        }

    # ingest -----------------------------------------------------------
    with timed("ingest"):
        statements, diags = parse_scored_jsonl(Path(config.scored_triples).read_bytes())
        kg = KnowledgeGraph()
        for st in statements:
            kg.add(st)
        _write_graph(out_dir / ARTIFACTS["ingest"], kg)
        _write_json(
            reports_dir / "ingest.json",
            {
                "records": len(statements),
                "diagnostics": [{"line": d.line, "message": d.message} for d in diags],
                "data_statements": len(kg.data_statements),
                "schema_statements": len(kg.schema_statements),
                "unknown_classes": sorted(kg.unknown_classes()),
            },
        )
        counts["ingest"] = {
            "records": len(statements),
            "statements": len(kg),
            "diagnostics": len(diags),
        }

    # refine -------------------------------------------------------------
    with timed("refine"):
        reference = _load_ontology(Path(config.reference_axioms))
        kg, refine_report = refinement.refine(kg, reference, config.make_refine_config())
        _write_graph(out_dir / ARTIFACTS["refine"], kg)
        _write_json(
            reports_dir / "refine.json",
            {
                "removed_by_threshold": [
                    render_triple(st.triple) for st in refine_report.removed_by_threshold
                ],
                "removed_by_lof": [
                    {"triple": render_triple(st.triple), "lof": score}
                    for st, score in refine_report.removed_by_lof
                ],
                "removed_implausible": [
                    {
                        "triple": render_triple(item.statement.triple),
                        "combo": list(item.combo),
                        "count": item.count,
                    }
                    for item in refine_report.removed_implausible
                ],
                "removed_disconnected": [
                    render_triple(st.triple) for st in refine_report.removed_disconnected
                ],
                "disconnected_nodes": [n.value for n in refine_report.disconnected_nodes],
                "kept": refine_report.kept,
                "notes": refine_report.notes,
            },
        )
        counts["refine"] = {
            "removed_threshold": len(refine_report.removed_by_threshold),
            "removed_lof": len(refine_report.removed_by_lof),
            "removed_implausible": len(refine_report.removed_implausible),
            "removed_disconnected": len(refine_report.removed_disconnected),
            "kept": refine_report.kept,
        }

    # correct ------------------------------------------------------------
    with timed("correct"):
        if config.reference_facts is not None:
            facts_triples, fact_diags = parse_ntriples(Path(config.reference_facts).read_bytes())
            if fact_diags:
                raise ValueError(f"reference facts: {len(fact_diags)} unparseable lines")
            reference.facts |= set(facts_triples)
        kg, corr_report = correction.correct(kg, reference, config.make_correction_config())
        _write_graph(out_dir / ARTIFACTS["correct"], kg)
        _write_json(
            reports_dir / "correct.json",
            {
                "checked": corr_report.checked,
                "violations": [
                    {
                        "kind": v.kind,
                        "triple": render_triple(v.triple),
                    }
                    for v in corr_report.violations
                ],
                "deleted": [render_triple(t) for t in corr_report.deleted],
                "replaced": [
                    {"old": render_triple(old), "new": render_triple(new)}
                    for old, new in corr_report.replaced
                ],
            },
        )
        counts["correct"] = {
            "violations": len(corr_report.violations),
            "deleted": len(corr_report.deleted),
            "replaced": len(corr_report.replaced),
        }

    # complete -----------------------------------------------------------
    with timed("complete"):
        complete_payload: dict = {"predictions": [], "notes": []}
        predictions: list = []
        pool = completion.training_triples(kg)
        if config.train_extra is not None:
            pool = sorted(set(pool) | set(completion.load_tsv(Path(config.train_extra))))
        relations = [Term.iri(r) for r in config.predict_relations]
        if not pool:
            complete_payload["notes"].append("no resource-object statements; training skipped")
        elif not relations:
            complete_payload["notes"].append("no candidate relations configured; prediction skipped")
        else:
            train_cfg = config.make_train_config()
            model = completion.train(pool, train_cfg)
            predictions = completion.predict_missing(
                model, kg, relations, config.predict_threshold, config.predict_top_k
            )
            for st in predictions:
                kg.add(st)
            complete_payload["trained_on"] = len(pool)
            complete_payload["entities"] = len(model.entity_index)
            complete_payload["relations"] = len(model.relation_index)
            complete_payload["final_loss"] = model.loss_history[-1]
            complete_payload["predictions"] = [
                {"triple": render_triple(st.triple), "confidence": round(st.confidence, 9)}
                for st in predictions
            ]
            complete_payload["agreement"] = _agreement_rates(
                model, kg, relations, config.agreement_sim_threshold
            )
        complete_payload["predicted_count"] = len(predictions)
        _write_graph(out_dir / ARTIFACTS["complete"], kg)
        _write_json(reports_dir / "complete.json", complete_payload)
        counts["complete"] = {"predicted": len(predictions)}

    # map ----------------------------------------------------------------
    with timed("map"):
        domain = _load_ontology(Path(config.domain_ontology))
        final, map_report = consistency.map_to_domain(kg, domain)
        _write_graph(out_dir / ARTIFACTS["map"], final)
        _write_json(
            reports_dir / "map.json",
            {
                "epsilon_total": map_report.epsilon_total,
                "per_concept": [
                    {
                        "concept": inc.concept,
                        "offending_properties": sorted(inc.offending_properties),
                        "epsilon_c": inc.epsilon_c,
                        "affected": len(inc.affected_triples),
                    }
                    for inc in map_report.per_concept
                ],
                "domain_range_violations": [
                    {
                        "triple": render_triple(v.triple),
                        "position": v.position,
                        "property": v.property,
                    }
                    for v in map_report.domain_range_violations
                ],
                "removed": [render_triple(t) for t in map_report.removed_triples],
                "retained": map_report.retained,
            },
        )
        counts["map"] = {
            "epsilon_total": map_report.epsilon_total,
            "removed": len(map_report.removed_triples),
            "retained": map_report.retained,
        }

    manifest = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "phases": counts,
        "artifacts": {phase: ARTIFACTS[phase] for phase in PHASES},
    }
    _write_json(out_dir / "manifest.json", manifest)
    timing["total"] = round(time.perf_counter() - started, 6)
    _write_json(out_dir / "timing.json", timing)
    return PipelineResult(out_dir, manifest, out_dir / ARTIFACTS["map"])


def _agreement_rates(
    model: completion.EmbeddingModel,
    kg: KnowledgeGraph,
    relations: list[Term],
    sim_threshold: float,
) -> dict[str, float | None]:
    """Compare existing assertions with the model's preferred value among
    the relation's observed object vocabulary; existing statements are
    never overwritten."""
    rates: dict[str, float | None] = {}
    for rel in relations:
        existing: dict[Term, Term] = {}
        observed_objects: set[Term] = set()
        for st in kg.data_statements:
            if st.triple.predicate == rel and not st.predicted:
                existing.setdefault(st.triple.subject, st.triple.object)
                observed_objects.add(st.triple.object)
        if not existing:
            rates[rel.value] = None
            continue
        candidate_rows = sorted(
            model.entity_index[o] for o in observed_objects if o in model.entity_index
        )
        old_labels: list[str] = []
        new_labels: list[str] = []
        r_row = model.relation_row(rel)
        entities = model.entities
        for subject in sorted(existing, key=Term.sort_key):
            if subject not in model.entity_index or not candidate_rows:
                continue
            scores = completion._all_tail_scores(model, model.entity_row(subject), r_row)
            top = min(candidate_rows, key=lambda i: (-scores[i], entities[i].sort_key()))
            value = existing[subject]
            old_labels.append(local_name(value.value) if value.is_iri else value.value)
            proposal = entities[top]
            new_labels.append(
                local_name(proposal.value) if proposal.is_iri else proposal.value
            )
        rates[rel.value] = (
            completion.agreement_check(old_labels, new_labels, sim_threshold)
            if old_labels
            else None
        )
    return rates
