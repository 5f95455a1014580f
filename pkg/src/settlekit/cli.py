"""Command-line entry point for the data pipeline.

One JSON config file describes a run; subcommands execute individual
stages and ``pipeline`` chains them: ingest, cleanse, synth, knowledge
validation, export, and an evaluation report with figures.  Every stage
appends a line to ``run_manifest.jsonl`` in the output directory with
input/output content digests and its duration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .chat import ChatClientError
from .cleanse import (
    DedupReport,
    Lexicon,
    MatchMode,
    dedup_articles,
    dedup_sentences,
    filter_sensitive,
)
from .config import DEFAULT_TARGET_TOTAL, PipelineConfig, make_client, parse_rank_key
from .corpus import Corpus, DocStatus, SourceKind, load_store, save_store
from .evalhsc import (
    Dimension,
    EvalItem,
    judge_batch,
    load_evalset,
    rank_models,
    read_scores_csv,
    report_table,
    reports_by_model,
    validate_evalset,
    write_report_csv,
    write_report_json,
    write_scores_csv,
)
from .figures import render_report_figures
from .knowledge import (
    KnowledgeGraph,
    VerdictStatus,
    build_kb_index,
    load_kb_index,
    retrieve,
    save_kb_index,
    validate_record,
)
from .synth import (
    DEFAULT_ROLES,
    PrimaryScene,
    Scenario,
    apply_drop_patterns,
    generate_multi_turn,
    generate_single_turn,
    load_records,
    load_templates,
    save_records,
)
from .trainprep import emit_training_config, export_pretrain, export_sft

log = logging.getLogger(__name__)

DEFAULT_TARGET_COUNTS = {
    "design_philosophy/sponge_city": 2,
    "reference_cases/waterfront_space": 2,
    "design_framework_supplement/resilient_city": 2,
}

TEMPLATE_BY_PRIMARY = {
    PrimaryScene.DESIGN_PHILOSOPHY: "design_philosophy",
    PrimaryScene.REFERENCE_CASES: "reference_case",
    PrimaryScene.DESIGN_FRAMEWORK_SUPPLEMENT: "framework_supplement",
}


class StageError(RuntimeError):
    pass


@dataclass
class StageResult:
    stage: str
    summary: dict
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)


def _digest(paths: Iterable[Path]) -> str:
    h = hashlib.sha256()
    for path in sorted(Path(p) for p in paths):
        if path.is_file():
            h.update(path.name.encode("utf-8"))
            h.update(b"\0")
            h.update(path.read_bytes())
            h.update(b"\0")
    return h.hexdigest()


def _append_run_manifest(out_dir: Path, result: StageResult, duration: float) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    entry = {
        "stage": result.stage,
        "input_digest": _digest(result.inputs),
        "output_digest": _digest(result.outputs),
        "duration_s": round(duration, 6),
    }
    with open(out_dir / "run_manifest.jsonl", "a", encoding="utf-8") as f:
        f.write(json.dumps(entry) + "\n")


def _require(path: Path | None, what: str, kind: str = "file") -> Path:
    if path is None:
        raise StageError(f"{what} is not configured")
    exists = path.is_dir() if kind == "dir" else path.is_file()
    if not exists:
        raise StageError(f"{what} not found: {path}")
    return path


def _infer_kind(path: Path) -> SourceKind:
    if path.suffix.lower() in (".html", ".htm"):
        return SourceKind.WEBSITE
    return SourceKind.STANDARD


def _cleansed_store(cfg: PipelineConfig) -> Path:
    return cfg.paths.output_dir / "cleansed_store.jsonl"


# ---------------------------------------------------------------- stages


def stage_ingest(
    cfg: PipelineConfig, inputs: Sequence[Path], kind: SourceKind | None
) -> StageResult:
    """Read raw files into the corpus store, extracting clean text."""
    from .corpus import extract_text

    files = []
    for given in inputs:
        if given.is_dir():
            files.extend(sorted(p for p in given.iterdir() if p.is_file()))
        elif given.is_file():
            files.append(given)
        else:
            raise StageError(f"input not found: {given}")
    if not files:
        raise StageError("nothing to ingest")
    corpus = Corpus()
    for path in files:
        corpus.ingest(path, kind or _infer_kind(path))
    docs = [
        extract_text(d) if d.status is DocStatus.INGESTED else d for d in corpus
    ]
    store = cfg.paths.corpus_store
    save_store(docs, store)
    rejected = sum(1 for d in docs if d.status is DocStatus.REJECTED)
    return StageResult(
        stage="ingest",
        summary={
            "files": len(files),
            "extracted": len(docs) - rejected,
            "rejected": rejected,
            "store": str(store),
        },
        inputs=files,
        outputs=[store],
    )


def stage_cleanse(
    cfg: PipelineConfig,
    *,
    min_sentence_len: int | None = None,
    match_mode: MatchMode | None = None,
    lexicon_path: Path | None = None,
) -> StageResult:
    """Sensitive-term filter, then article and sentence dedup."""
    store = _require(cfg.paths.corpus_store, "corpus store")
    min_len = min_sentence_len if min_sentence_len is not None else cfg.cleanse.min_sentence_len
    mode = match_mode or cfg.cleanse.match_mode
    lex_path = lexicon_path or cfg.paths.lexicon
    if lex_path is not None:
        lexicon = Lexicon.from_file(_require(lex_path, "lexicon"), mode)
    else:
        lexicon = Lexicon.from_terms([], mode)

    docs = load_store(store)
    filtered = [
        filter_sensitive(d, lexicon) if d.status is DocStatus.EXTRACTED else d for d in docs
    ]
    rejected_sensitive = sum(
        1
        for before, after in zip(docs, filtered)
        if before.status is DocStatus.EXTRACTED and after.status is DocStatus.REJECTED
    )
    survivors = [d for d in filtered if d.status is DocStatus.FILTERED]
    survivors, article_report = dedup_articles(survivors)
    survivors, sentence_report = dedup_sentences(survivors, min_len)

    combined = DedupReport(
        articles_in=article_report.articles_in,
        articles_removed=article_report.articles_removed + sentence_report.articles_removed,
        sentences_removed=sentence_report.sentences_removed,
        removal_log=article_report.removal_log + sentence_report.removal_log,
    )
    out_store = _cleansed_store(cfg)
    save_store(survivors, out_store)
    report_path = cfg.paths.output_dir / "dedup_report.json"
    combined.write(report_path)
    return StageResult(
        stage="cleanse",
        summary={
            "documents_in": len(docs),
            "rejected_sensitive": rejected_sensitive,
            "articles_in": combined.articles_in,
            "articles_removed": combined.articles_removed,
            "sentences_removed": combined.sentences_removed,
            "documents_out": len(survivors),
        },
        inputs=[store] + ([lex_path] if lex_path else []),
        outputs=[out_store, report_path],
    )


def stage_kb_build(cfg: PipelineConfig) -> StageResult:
    """Chunk the cleansed corpus into the retrieval index."""
    store = _require(_cleansed_store(cfg), "cleansed store")
    docs = load_store(store)
    index = build_kb_index(docs)
    index_path = cfg.paths.output_dir / "kb_index.jsonl"
    save_kb_index(index, index_path)
    return StageResult(
        stage="kb_build",
        summary={"documents": len(docs), "chunks": len(index), "index": str(index_path)},
        inputs=[store],
        outputs=[index_path],
    )


def stage_synth(
    cfg: PipelineConfig,
    *,
    seed: int | None = None,
    temperature: float | None = None,
    max_turns: int | None = None,
) -> StageResult:
    """Generate single-turn batches plus one grounded discussion per scenario."""
    store = _require(_cleansed_store(cfg), "cleansed store")
    base_seed = seed if seed is not None else cfg.synth.seed
    temp = temperature if temperature is not None else cfg.synth.temperature
    turns = max_turns if max_turns is not None else cfg.synth.max_turns
    client = make_client(cfg)
    model_name = cfg.synth.endpoint.model if not cfg.synth.mock and cfg.synth.endpoint else "mock"
    templates = load_templates(cfg.paths.templates_dir)

    docs = load_store(store)
    index = build_kb_index(docs)
    index_path = cfg.paths.output_dir / "kb_index.jsonl"
    save_kb_index(index, index_path)
    chunk_by_id = {chunk.id: chunk for chunk in index}

    counts = dict(cfg.synth.target_counts) or dict(DEFAULT_TARGET_COUNTS)
    records = []
    per_scenario = {}
    totals = {"requested": 0, "emitted": 0, "dropped_empty": 0, "errors": []}
    for idx, key in enumerate(sorted(counts)):
        scenario = Scenario.parse(key)
        template = templates[TEMPLATE_BY_PRIMARY[scenario.primary_scene]]
        role = DEFAULT_ROLES[idx % len(DEFAULT_ROLES)]
        batch, stats = generate_single_turn(
            scenario,
            role,
            template,
            client,
            counts[key],
            base_seed=base_seed,
            temperature=temp,
            model=model_name,
        )
        hits = retrieve(index, scenario.secondary_scene.zh, k=2) if index else []
        grounding = [chunk_by_id[cid] for cid, _ in hits]
        discussion = generate_multi_turn(
            scenario,
            DEFAULT_ROLES,
            templates["multi_turn_opening"],
            client,
            turns,
            grounding,
            base_seed=base_seed,
            temperature=temp,
            model=model_name,
        )
        records.extend(batch)
        records.append(discussion)
        per_scenario[key] = len(batch) + 1
        totals["requested"] += stats.requested + 1
        totals["emitted"] += stats.emitted + 1
        totals["dropped_empty"] += stats.dropped_empty
        totals["errors"].extend(stats.errors)

    records, dropped_filtered = apply_drop_patterns(records, cfg.synth.drop_patterns)
    totals["emitted"] -= dropped_filtered

    records_path = cfg.paths.output_dir / "records.jsonl"
    save_records(records, records_path)
    stats_path = cfg.paths.output_dir / "synth_stats.json"
    summary = {
        **totals,
        "dropped_filtered": dropped_filtered,
        "per_scenario": per_scenario,
        "target_total": cfg.synth.target_total or DEFAULT_TARGET_TOTAL,
        "records": str(records_path),
    }
    stats_path.write_text(
        json.dumps(summary, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    result = StageResult(
        stage="synth",
        summary=summary,
        inputs=[store],
        outputs=[records_path, stats_path, index_path],
    )
    result.errors = list(totals["errors"])
    return result


def stage_kg_validate(cfg: PipelineConfig) -> StageResult:
    """Run knowledge-graph claim validation over synthesized records."""
    records_path = _require(cfg.paths.output_dir / "records.jsonl", "records file")
    if cfg.paths.kg_file is not None:
        kg = KnowledgeGraph.from_file(_require(cfg.paths.kg_file, "knowledge graph"))
    else:
        kg = KnowledgeGraph()
    records = load_records(records_path)
    validated = [validate_record(kg, r) for r in records]
    out_path = cfg.paths.output_dir / "records_validated.jsonl"
    save_records(validated, out_path)
    counts = {status.value: 0 for status in VerdictStatus}
    for record in validated:
        for verdict in record.kg_verdicts:
            counts[verdict.status.value] += 1
    summary_path = cfg.paths.output_dir / "kg_summary.json"
    summary = {
        "records": len(validated),
        "claims": sum(counts.values()),
        "verdicts": counts,
        "contradicted_records": sum(1 for r in validated if r.contradicted),
    }
    summary_path.write_text(
        json.dumps(summary, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return StageResult(
        stage="kg_validate",
        summary=summary,
        inputs=[records_path] + ([cfg.paths.kg_file] if cfg.paths.kg_file else []),
        outputs=[out_path, summary_path],
    )


def stage_export(cfg: PipelineConfig) -> StageResult:
    """Emit the training config, pretraining corpus, and SFT conversations."""
    store = _require(_cleansed_store(cfg), "cleansed store")
    records_path = cfg.paths.output_dir / "records_validated.jsonl"
    if not records_path.is_file():
        records_path = _require(cfg.paths.output_dir / "records.jsonl", "records file")
    docs = load_store(store)
    records = load_records(records_path)
    out = cfg.paths.output_dir
    training = cfg.trainprep.training
    config_path = emit_training_config(training, out / "training_config.json")
    pretrain_path, pretrain_manifest = export_pretrain(docs, training, out / "pretrain.jsonl")
    sft_path, sft_manifest = export_sft(
        records, training, out / "sft.jsonl", drop_contradicted=cfg.trainprep.drop_contradicted
    )
    return StageResult(
        stage="export",
        summary={
            "training_config": str(config_path),
            "pretrain": pretrain_manifest.to_json(),
            "sft": sft_manifest.to_json(),
        },
        inputs=[store, records_path],
        outputs=[
            config_path,
            pretrain_path,
            pretrain_path.with_name("pretrain.manifest.json"),
            sft_path,
            sft_path.with_name("sft.manifest.json"),
        ],
    )


def stage_eval_judge(cfg: PipelineConfig, *, model_name: str = "candidate") -> StageResult:
    """Score synthesized answers with the configured judge client."""
    records_path = cfg.paths.output_dir / "records_validated.jsonl"
    if not records_path.is_file():
        records_path = _require(cfg.paths.output_dir / "records.jsonl", "records file")
    records = load_records(records_path)
    if not records:
        raise StageError("no records to judge")
    templates = load_templates(cfg.paths.templates_dir)
    rubric = templates[cfg.eval.rubric]
    client = make_client(cfg)
    pairs = []
    for record in records:
        first = record.turns[0]
        item = EvalItem(record.id, Dimension.RELEVANCE, "synthesized", first.question)
        pairs.append((item, first.answer))
    cards = judge_batch(
        pairs, client, rubric, model_name=model_name, base_seed=cfg.synth.seed
    )
    scores_path = cfg.paths.output_dir / "scores.csv"
    write_scores_csv(cards, scores_path)
    return StageResult(
        stage="eval_judge",
        summary={"records": len(records), "scored": len(cards), "scores": str(scores_path)},
        inputs=[records_path],
        outputs=[scores_path],
    )


def stage_report(
    cfg: PipelineConfig,
    *,
    key=None,
    scores_path: Path | None = None,
    reported_totals_path: Path | None = None,
) -> StageResult:
    """Aggregate scorecards into ranked reports, tables, and figures."""
    rank_key = key or cfg.eval.ranking_key
    scores = scores_path or cfg.eval.scores or cfg.paths.output_dir / "scores.csv"
    scores = _require(scores, "scores file")
    totals_path = reported_totals_path or cfg.eval.reported_totals
    totals = None
    if totals_path is not None:
        totals = json.loads(_require(totals_path, "reported totals").read_text(encoding="utf-8"))
    cards = read_scores_csv(scores)
    reports = reports_by_model(cards, totals)
    ranked = rank_models(reports, rank_key)
    out = cfg.paths.output_dir
    json_path = out / "report.json"
    write_report_json(ranked, json_path)
    txt_path = out / "report.txt"
    txt_path.parent.mkdir(parents=True, exist_ok=True)
    table = report_table(ranked)
    txt_path.write_text(table, encoding="utf-8")
    csv_path = out / "report.csv"
    write_report_csv(ranked, csv_path)
    figure_paths = render_report_figures(ranked, out / "figures")
    return StageResult(
        stage="report",
        summary={
            "models": [r.model_name for r in ranked],
            "ranking_key": rank_key.value,
            "table": table,
            "report_json": str(json_path),
            "figures": [str(p) for p in figure_paths],
        },
        inputs=[scores] + ([totals_path] if totals_path else []),
        outputs=[json_path, txt_path, csv_path] + figure_paths,
    )


# ---------------------------------------------------------------- driver


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config is not None:
        return PipelineConfig.from_file(args.config)
    default = Path("settlekit.json")
    if default.is_file():
        return PipelineConfig.from_file(default)
    return PipelineConfig()


def _emit(result: StageResult, as_json: bool) -> None:
    if as_json:
        print(json.dumps({"stage": result.stage, **result.summary}, ensure_ascii=False))
        return
    table = result.summary.pop("table", None) if result.stage == "report" else None
    parts = ", ".join(
        f"{k}={v}" for k, v in result.summary.items() if not isinstance(v, (dict, list))
    )
    print(f"[{result.stage}] {parts}")
    if table:
        print(table, end="")


def _run(cfg: PipelineConfig, fn: Callable[[], StageResult], as_json: bool) -> int:
    started = time.perf_counter()
    result = fn()
    _append_run_manifest(cfg.paths.output_dir, result, time.perf_counter() - started)
    _emit(result, as_json)
    if result.errors:
        for message in result.errors:
            print(f"error: {message}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="settlekit",
        description="Corpus cleaning, QA synthesis, training export, and evaluation pipeline.",
    )
    parser.add_argument("--config", type=Path, help="pipeline config JSON (default: settlekit.json)")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="read raw files into the corpus store")
    p.add_argument("inputs", nargs="*", type=Path, help="files or directories (default: configured kb source dir)")
    p.add_argument("--kind", choices=[k.value for k in SourceKind], help="source kind for all inputs (default: by extension)")

    p = sub.add_parser("cleanse", help="filter sensitive terms and deduplicate")
    p.add_argument("--min-sentence-len", type=int, help="sentence dedup length threshold")
    p.add_argument("--lexicon", type=Path, help="sensitive-term lexicon file")
    p.add_argument("--match-mode", choices=[m.value for m in MatchMode], help="lexicon matching mode")

    p = sub.add_parser("synth", help="generate QA and discussion records")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--temperature", type=float, help="sampling temperature")
    p.add_argument("--max-turns", type=int, help="discussion turn cap")

    p = sub.add_parser("kb", help="retrieval index over the cleansed corpus")
    kb_sub = p.add_subparsers(dest="kb_command", required=True)
    kb_sub.add_parser("build", help="chunk the cleansed corpus into an index")
    q = kb_sub.add_parser("query", help="search the index")
    q.add_argument("query", help="query text")
    q.add_argument("--k", type=int, default=5, help="number of results")

    p = sub.add_parser("kg", help="knowledge-graph checks")
    kg_sub = p.add_subparsers(dest="kg_command", required=True)
    kg_sub.add_parser("validate", help="validate synthesized records against the graph")
    kg_sub.add_parser("check", help="load the graph file and report its shape")

    sub.add_parser("export", help="emit training config and datasets")

    p = sub.add_parser("eval", help="evaluation set utilities")
    ev_sub = p.add_subparsers(dest="eval_command", required=True)
    v = ev_sub.add_parser("validate", help="check an evaluation set against the schema")
    v.add_argument("--items", type=Path, help="evaluation items JSONL")
    j = ev_sub.add_parser("judge", help="score synthesized records with the judge")
    j.add_argument("--model-name", default="candidate", help="model label for the scorecards")

    p = sub.add_parser("report", help="aggregate scores into ranked reports and figures")
    p.add_argument("--key", help="ranking key: dimension-sum, composite-mean, reported-total")
    p.add_argument("--scores", type=Path, help="scores CSV")
    p.add_argument("--reported-totals", type=Path, help="JSON map of model name to reported total")

    p = sub.add_parser("pipeline", help="run every stage in order")
    p.add_argument("--seed", type=int, help="base random seed")

    return parser


def _dispatch(args: argparse.Namespace, cfg: PipelineConfig) -> int:
    as_json = args.json
    if args.command == "ingest":
        inputs = args.inputs or [
            _require(cfg.paths.kb_source_dir, "kb source dir", kind="dir")
        ]
        kind = SourceKind(args.kind) if args.kind else None
        return _run(cfg, lambda: stage_ingest(cfg, inputs, kind), as_json)
    if args.command == "cleanse":
        mode = MatchMode(args.match_mode) if args.match_mode else None
        return _run(
            cfg,
            lambda: stage_cleanse(
                cfg,
                min_sentence_len=args.min_sentence_len,
                match_mode=mode,
                lexicon_path=args.lexicon,
            ),
            as_json,
        )
    if args.command == "synth":
        return _run(
            cfg,
            lambda: stage_synth(
                cfg, seed=args.seed, temperature=args.temperature, max_turns=args.max_turns
            ),
            as_json,
        )
    if args.command == "kb":
        if args.kb_command == "build":
            return _run(cfg, lambda: stage_kb_build(cfg), as_json)
        index = load_kb_index(_require(cfg.paths.output_dir / "kb_index.jsonl", "kb index"))
        hits = retrieve(index, args.query, k=args.k)
        if as_json:
            print(json.dumps([{"chunk": cid, "score": score} for cid, score in hits]))
        else:
            for cid, score in hits:
                print(f"{score:.6f}\t{cid}")
        return 0
    if args.command == "kg":
        if args.kg_command == "validate":
            return _run(cfg, lambda: stage_kg_validate(cfg), as_json)
        kg_path = _require(cfg.paths.kg_file, "knowledge graph")
        kg = KnowledgeGraph.from_file(kg_path)
        payload = {
            "triples": len(kg),
            "functional_predicates": sorted(kg.functional_predicates),
        }
        print(json.dumps(payload) if as_json else f"[kg] {payload}")
        return 0
    if args.command == "export":
        return _run(cfg, lambda: stage_export(cfg), as_json)
    if args.command == "eval":
        if args.eval_command == "validate":
            items_path = _require(args.items or cfg.eval.items, "evaluation items")
            errors = validate_evalset(load_evalset(items_path), cfg.eval.schema)
            if as_json:
                print(json.dumps({"errors": errors}))
            elif errors:
                for message in errors:
                    print(f"error: {message}", file=sys.stderr)
            else:
                print("[eval] validation passed")
            return 1 if errors else 0
        return _run(cfg, lambda: stage_eval_judge(cfg, model_name=args.model_name), as_json)
    if args.command == "report":
        key = parse_rank_key(args.key) if args.key else None
        return _run(
            cfg,
            lambda: stage_report(
                cfg,
                key=key,
                scores_path=args.scores,
                reported_totals_path=args.reported_totals,
            ),
            as_json,
        )
    if args.command == "pipeline":
        seed = args.seed
        stages: list[Callable[[], StageResult]] = [
            lambda: stage_ingest(
                cfg, [_require(cfg.paths.kb_source_dir, "kb source dir", kind="dir")], None
            ),
            lambda: stage_cleanse(cfg),
            lambda: stage_synth(cfg, seed=seed),
            lambda: stage_kg_validate(cfg),
            lambda: stage_export(cfg),
            lambda: stage_eval_judge(cfg),
            lambda: stage_report(cfg),
        ]
        for fn in stages:
            status = _run(cfg, fn, as_json)
            if status != 0:
                return status
        return 0
    raise AssertionError(f"unhandled command {args.command}")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load_config(args)
        return _dispatch(args, cfg)
    except (StageError, ValueError, ChatClientError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
