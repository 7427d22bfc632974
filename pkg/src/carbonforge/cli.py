"""Command line front end.

Conventions: machine-readable JSON goes to stdout, everything meant for a
human (progress, tables, warnings) goes to stderr, and the two are never
mixed. Exit codes: 0 success, 1 usage error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import agent, efgen, harness, ingestion, knn, lcia, vision
from .core import FeatureVector, LifeCycleInventory, dump_json

USAGE_ERROR = 1
DATA_ERROR = 2
BACKEND_ERROR = 3


class _Parser(argparse.ArgumentParser):
    """argparse flags usage problems with exit code 2 by default; we
    reserve 2 for data errors, so remap to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _parse_result_payload(result: ingestion.ParseResult, records_key: str) -> dict:
    return {
        "n_parsed": len(result.records),
        "n_rejected": len(result.rejected),
        "rejected": [issue.to_dict() for issue in result.rejected],
        records_key: [r.to_dict() for r in result.records],
    }


# ---------------------------------------------------------------------------
# handlers


def _cmd_ingest_pcf(args) -> dict:
    result = ingestion.parse_pcf_records(args.input)
    payload = _parse_result_payload(result, "records")
    if args.dedup:
        by_category: dict[str, list] = {}
        for record in result.records:
            by_category.setdefault(record.category, []).append(record)
        kept, excluded = [], []
        for category in sorted(by_category):
            k, e = ingestion.dedup_similar(by_category[category])
            kept.extend(k)
            excluded.extend(e)
        payload["records"] = [r.to_dict() for r in kept]
        payload["n_deduplicated"] = len(excluded)
        _info(f"dedup removed {len(excluded)} near-identical records")
    _info(f"parsed {payload['n_parsed']} records, rejected {payload['n_rejected']} rows")
    return payload


def _cmd_ingest_grid(args) -> dict:
    result = ingestion.parse_grid_records(args.input)
    payload = _parse_result_payload(result, "records")
    payload["annual_mean_intensity"] = ingestion.annual_mean_intensity(result.records)
    _info(f"parsed {payload['n_parsed']} region-days, rejected {payload['n_rejected']} rows")
    return payload


def _cmd_ingest_efdb(args) -> dict:
    result = ingestion.parse_ef_database(args.input)
    payload = _parse_result_payload(result, "factors")
    _info(f"parsed {payload['n_parsed']} factors, rejected {payload['n_rejected']} lines")
    return payload


def _cmd_index_build(args) -> dict:
    result = ingestion.parse_pcf_records(args.input)
    records = [r for r in result.records if r.category == args.category]
    if args.dedup:
        records, _ = ingestion.dedup_similar(records)
    labeled = knn.records_from_products(records)
    index = knn.build_index(labeled, args.category)
    knn.save_index(index, args.out)
    _info(f"indexed {len(labeled)} records for category {args.category!r}")
    return {"path": str(args.out), "category": args.category, "n_records": len(labeled)}


def _cmd_estimate(args) -> dict:
    index = knn.load_index(args.index)
    query = FeatureVector.from_dict(_load_json(args.query))
    est = knn.estimate(index, query, k=args.k)
    if args.calibration:
        transform = knn.CalibrationTransform.from_dict(_load_json(args.calibration))
        est = knn.apply_calibration(transform, est)
    return est.to_dict()


def _cmd_ef_grid(args) -> dict:
    result = ingestion.parse_grid_records(args.grid)
    index = efgen.build_grid_index(result.records)
    mix_values = _load_json(args.mix)
    query = FeatureVector(ingestion.GRID_FEATURE_SCHEMA, mix_values)
    est = efgen.estimate_grid_ci(index, query, k=args.k)
    return est.to_dict()


def _cmd_ef_material(args) -> dict:
    db = efgen.load_material_db(args.db)
    spec = _load_json(args.query)
    provider = efgen.HashingEmbedder()
    from .core import EmissionFactor

    ef = EmissionFactor(
        id=spec.get("id", "query"),
        description=spec["description"],
        isic_class=spec.get("isic_class", ""),
        unit=spec.get("unit", "gram"),
        kgco2e_per_unit=1.0,
        features=FeatureVector(efgen.MATERIAL_DOMAIN_SCHEMA, spec.get("domain_features", {})),
    )
    query = efgen.MaterialEntry.from_ef(ef, provider)
    est = efgen.estimate_material_ef(db, query, k=args.k, mode=args.mode)
    return est.to_dict()


def _cmd_lcia_assess(args) -> dict:
    lci = LifeCycleInventory.from_dict(_load_json(args.lci))
    parsed = ingestion.parse_ef_database(args.efdb)
    material_db = efgen.load_material_db(args.materials) if args.materials else None
    options = lcia.AssessOptions(
        provider=efgen.HashingEmbedder(),
        threshold=args.threshold,
        fallback=not args.no_fallback,
        material_db=material_db,
        k=args.k,
        mode=args.mode,
    )
    result = lcia.assess(lci, parsed.records, options)
    if args.table:
        _info(lcia.render_breakdown_table(result.breakdown, lci))
    return result.to_dict()


def _cmd_vision_score(args) -> dict:
    return {"image": str(args.image), "hf_energy": vision.hpf_score(str(args.image))}


def _cmd_vision_rank(args) -> dict:
    detector = vision.BlobDetector()
    images = [(Path(p).name, str(p)) for p in args.images]
    scores, skipped = vision.rank_board_views(images, detector, lam=args.lam)
    for doc_id, reason in skipped:
        _info(f"skipped {doc_id}: {reason}")
    return {
        "ranking": [s.to_dict() for s in scores],
        "skipped": [{"doc_id": d, "reason": r} for d, r in skipped],
    }


def _parse_pair(raw: str, what: str) -> tuple[float, float]:
    parts = raw.split("x")
    if len(parts) != 2:
        raise ValueError(f"{what} must look like WxH, got {raw!r}")
    return float(parts[0]), float(parts[1])


def _cmd_vision_dims(args) -> dict:
    ref_mm = _parse_pair(args.ref_mm, "--ref-mm")
    x, y, w, h = (int(v) for v in args.ref_bbox.split(","))
    calibration = vision.calibrate_scale(ref_mm, (x, y, w, h))
    board_bbox = vision.find_board_bbox(str(args.image))
    width_mm, height_mm, area_mm2 = vision.board_dimensions(board_bbox, calibration)
    return {
        "image": str(args.image),
        "mm_per_px": calibration.mm_per_px,
        "board_bbox_px": list(board_bbox),
        "width_mm": width_mm,
        "height_mm": height_mm,
        "area_mm2": area_mm2,
    }


def _budget_from_args(args) -> agent.Budget:
    return agent.Budget(
        max_thinking_ms=args.max_thinking_ms,
        max_rounds=args.max_rounds,
        max_documents=args.max_documents,
    )


def _cmd_agent_run(args) -> dict:
    corpus = ingestion.load_corpus(args.corpus)
    backend = agent.FixtureBackend(corpus)
    config = agent.AgentConfig(queries_per_round=args.queries_per_round)
    detector = vision.BlobDetector() if args.with_vision else None
    result = agent.run_selfplay(
        args.query, _budget_from_args(args), backend, detector=detector, config=config
    )
    if args.transcript:
        Path(args.transcript).write_text(
            dump_json(result.transcript.to_dict()) + "\n", encoding="utf-8"
        )
        _info(f"transcript written to {args.transcript}")
    _info(
        f"status={result.transcript.status} rounds={result.transcript.reasoning_steps} "
        f"docs={result.transcript.documents_read} tokens={result.transcript.tokens_used}"
    )
    return {"lci": result.lci.to_dict(), "transcript": result.transcript.to_dict()}


def _cmd_agent_replay(args) -> dict:
    corpus = ingestion.load_corpus(args.corpus)
    transcript = agent.AgentTranscript.from_dict(_load_json(args.transcript))
    detector = vision.BlobDetector() if args.with_vision else None
    lci = agent.replay_transcript(transcript, corpus, detector=detector)
    return {"lci": lci.to_dict()}


def _labeled_from_pcf(path) -> list:
    result = ingestion.parse_pcf_records(path)
    return knn.records_from_products(result.records)


def _cmd_eval_cv(args) -> dict:
    records = _labeled_from_pcf(args.pcf)
    report = harness.kfold_cv(
        records,
        k_folds=args.folds,
        holdout_frac=args.holdout,
        config=harness.EstimatorConfig(k_neighbors=args.k),
        seed=args.seed,
    )
    return report.to_dict()


def _cmd_eval_scaling(args) -> dict:
    records = _labeled_from_pcf(args.pcf)
    report = harness.scaling_sweep(
        records,
        sizes=args.sizes,
        repeats=args.repeats,
        eval_n=args.eval_n,
        config=harness.EstimatorConfig(k_neighbors=args.k),
        seed=args.seed,
    )
    return report.to_dict()


def _cmd_eval_masking(args) -> dict:
    records = _labeled_from_pcf(args.pcf)
    report = harness.masking_sweep(
        records,
        fractions=args.fractions,
        repeats=args.repeats,
        config=harness.EstimatorConfig(k_neighbors=args.k),
        seed=args.seed,
    )
    return report.to_dict()


def _cmd_eval_benchmark(args) -> dict:
    suite = agent.load_suite(args.suite)
    corpus = ingestion.load_corpus(args.corpus)
    backend = agent.FixtureBackend(corpus)
    budgets = [
        agent.Budget(
            max_thinking_ms=ms, max_rounds=args.max_rounds, max_documents=args.max_documents
        )
        for ms in args.budgets_ms
    ]
    efdb = None
    options = None
    if args.efdb:
        efdb = ingestion.parse_ef_database(args.efdb).records
        material_db = efgen.load_material_db(args.materials) if args.materials else None
        options = lcia.AssessOptions(provider=efgen.HashingEmbedder(), material_db=material_db)
    study = agent.measure_scaling(
        suite, budgets, backend, efdb=efdb, assess_options=options
    )
    return study.to_dict()


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="carbonforge", description="Carbon footprint estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse and validate input files")
    ingest_sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    q = ingest_sub.add_parser("pcf", help="disclosed product footprints CSV")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--dedup", action="store_true")
    q.set_defaults(func=_cmd_ingest_pcf)
    q = ingest_sub.add_parser("grid", help="daily grid mix CSV")
    q.add_argument("--in", dest="input", required=True)
    q.set_defaults(func=_cmd_ingest_grid)
    q = ingest_sub.add_parser("efdb", help="emission factor JSONL")
    q.add_argument("--in", dest="input", required=True)
    q.set_defaults(func=_cmd_ingest_efdb)

    p = sub.add_parser("index", help="neighbor index maintenance")
    index_sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    q = index_sub.add_parser("build", help="build and save an index from PCF data")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--category", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--dedup", action="store_true")
    q.set_defaults(func=_cmd_index_build)

    p = sub.add_parser("estimate", help="estimate a footprint from an index")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True, help="feature vector JSON file")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--calibration", default=None)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("ef", help="emission factor generalization")
    ef_sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    q = ef_sub.add_parser("grid", help="carbon intensity for an unseen grid mix")
    q.add_argument("--grid", required=True)
    q.add_argument("--mix", required=True, help="JSON file of source shares")
    q.add_argument("--k", type=int, default=5)
    q.set_defaults(func=_cmd_ef_grid)
    q = ef_sub.add_parser("material", help="emission factor for an unlisted material")
    q.add_argument("--db", required=True)
    q.add_argument("--query", required=True, help="JSON file with description and domain features")
    q.add_argument("--k", type=int, default=5)
    q.add_argument("--mode", choices=efgen.MATERIAL_MODES, default="text_plus_domain")
    q.set_defaults(func=_cmd_ef_material)

    p = sub.add_parser("lcia", help="life cycle impact assessment")
    lcia_sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    q = lcia_sub.add_parser("assess", help="score an inventory against an EF database")
    q.add_argument("--lci", required=True)
    q.add_argument("--efdb", required=True)
    q.add_argument("--materials", default=None)
    q.add_argument("--threshold", type=float, default=lcia.DEFAULT_SIMILARITY_THRESHOLD)
    q.add_argument("--no-fallback", action="store_true")
    q.add_argument("--k", type=int, default=5)
    q.add_argument("--mode", choices=efgen.MATERIAL_MODES, default="text_only")
    q.add_argument("--table", action="store_true", help="print a breakdown table to stderr")
    q.set_defaults(func=_cmd_lcia_assess)

    p = sub.add_parser("vision", help="board image analysis")
    vision_sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    q = vision_sub.add_parser("score", help="high-frequency information score")
    q.add_argument("--image", required=True)
    q.set_defaults(func=_cmd_vision_score)
    q = vision_sub.add_parser("rank", help="rank candidate views of a board")
    q.add_argument("--images", nargs="+", required=True)
    q.add_argument("--lam", type=float, default=1.0)
    q.set_defaults(func=_cmd_vision_rank)
    q = vision_sub.add_parser("dims", help="physical board dimensions from a reference part")
    q.add_argument("--image", required=True)
    q.add_argument("--ref-mm", required=True, help="reference part size, WxH in mm")
    q.add_argument("--ref-bbox", required=True, help="reference bbox in px, x,y,w,h")
    q.set_defaults(func=_cmd_vision_dims)

    p = sub.add_parser("agent", help="self-play inventory construction")
    agent_sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    q = agent_sub.add_parser("run", help="run the critic/stakeholders loop")
    q.add_argument("--query", required=True)
    q.add_argument("--corpus", required=True)
    q.add_argument("--max-thinking-ms", type=int, default=60_000)
    q.add_argument("--max-rounds", type=int, default=12)
    q.add_argument("--max-documents", type=int, default=40)
    q.add_argument("--queries-per-round", type=int, default=3)
    q.add_argument("--with-vision", action="store_true")
    q.add_argument("--transcript", default=None, help="write the transcript JSON here")
    q.set_defaults(func=_cmd_agent_run)
    q = agent_sub.add_parser("replay", help="rebuild the inventory from a transcript")
    q.add_argument("--transcript", required=True)
    q.add_argument("--corpus", required=True)
    q.add_argument("--with-vision", action="store_true")
    q.set_defaults(func=_cmd_agent_replay)

    p = sub.add_parser("eval", help="evaluation protocols")
    eval_sub = p.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    q = eval_sub.add_parser("cv", help="holdout plus k-fold cross validation")
    q.add_argument("--pcf", required=True)
    q.add_argument("--folds", type=int, default=5)
    q.add_argument("--holdout", type=float, default=0.2)
    q.add_argument("--k", type=int, default=5)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=_cmd_eval_cv)
    q = eval_sub.add_parser("scaling", help="accuracy vs training-set size")
    q.add_argument("--pcf", required=True)
    q.add_argument("--sizes", type=int, nargs="+", required=True)
    q.add_argument("--repeats", type=int, default=10)
    q.add_argument("--eval-n", type=int, default=30)
    q.add_argument("--k", type=int, default=5)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=_cmd_eval_scaling)
    q = eval_sub.add_parser("masking", help="accuracy vs hidden query features")
    q.add_argument("--pcf", required=True)
    q.add_argument("--fractions", type=float, nargs="+", required=True)
    q.add_argument("--repeats", type=int, default=5)
    q.add_argument("--k", type=int, default=5)
    q.add_argument("--seed", type=int, default=0)
    q.set_defaults(func=_cmd_eval_masking)
    q = eval_sub.add_parser("benchmark", help="agent suite under a budget grid")
    q.add_argument("--suite", required=True)
    q.add_argument("--corpus", required=True)
    q.add_argument("--budgets-ms", type=int, nargs="+", required=True)
    q.add_argument("--max-rounds", type=int, default=12)
    q.add_argument("--max-documents", type=int, default=40)
    q.add_argument("--efdb", default=None)
    q.add_argument("--materials", default=None)
    q.set_defaults(func=_cmd_eval_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = args.func(args)
    except agent.BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return BACKEND_ERROR
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    print(dump_json(payload))
    return 0


if __name__ == "__main__":
    sys.exit(main())
