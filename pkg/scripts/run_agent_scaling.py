#!/usr/bin/env python3
"""Budget-scaling study for the research loop on the fixture benchmark.

Sweeps two budget axes over the full product suite and records inventory
quality (F1, divergence) and, when an emission-factor database is given,
footprint error against each case's reference answer:

  thinking   wall-clock budget grows, rounds and documents held generous
  rounds     round budget grows under a generous clock

Token spend should rise with the thinking budget and flatten once every
product converges; footprint error should fall as rounds are added.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from carbonforge import agent, efgen, harness, ingestion, lcia

ROOT = Path(__file__).resolve().parent.parent


def info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _write_study(study: agent.ScalingStudy, out: Path, stem: str) -> None:
    harness.write_json_report(out / f"{stem}.json", study.to_dict())
    header, rows = study.csv_rows()
    harness.write_csv_report(out / f"{stem}.csv", header, rows)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--suite", type=Path, default=ROOT / "fixtures" / "suite")
    parser.add_argument("--corpus", type=Path, default=ROOT / "fixtures" / "corpus")
    parser.add_argument("--efdb", type=Path, default=ROOT / "fixtures" / "efdb_fixture.jsonl")
    parser.add_argument(
        "--materials", type=Path, default=ROOT / "fixtures" / "materials_fixture.jsonl"
    )
    parser.add_argument(
        "--thinking-ms", type=_int_list, default=[5_000, 10_000, 20_000, 40_000, 80_000]
    )
    parser.add_argument("--round-grid", type=_int_list, default=[1, 2, 4, 8])
    parser.add_argument("--max-rounds", type=int, default=12)
    parser.add_argument("--max-documents", type=int, default=40)
    parser.add_argument("--clock-cap-ms", type=int, default=600_000)
    parser.add_argument("--out", type=Path, default=ROOT / "runs" / "agent_scaling")
    args = parser.parse_args(argv)

    suite = agent.load_suite(args.suite)
    backend = agent.FixtureBackend(ingestion.load_corpus(args.corpus))
    options = None
    efdb = None
    if args.efdb.exists() and args.materials.exists():
        efdb = list(ingestion.parse_ef_database(args.efdb).records)
        options = lcia.AssessOptions(
            provider=efgen.HashingEmbedder(),
            material_db=efgen.load_material_db(args.materials),
        )
    else:
        info("no emission-factor database; footprint error will be skipped")
    info(f"suite: {len(suite)} products")
    args.out.mkdir(parents=True, exist_ok=True)

    thinking = agent.measure_scaling(
        suite,
        [agent.Budget(ms, args.max_rounds, args.max_documents) for ms in args.thinking_ms],
        backend,
        efdb=efdb,
        assess_options=options,
    )
    _write_study(thinking, args.out, "thinking")
    for point in thinking.points:
        info(
            f"thinking {point.budget.max_thinking_ms/1000:5.0f}s: "
            f"tokens {point.tokens_mean:7.1f}  f1 {point.f1_mean:.3f}  "
            f"converged {point.converged}/{point.n_cases}"
        )

    rounds = agent.measure_scaling(
        suite,
        [agent.Budget(args.clock_cap_ms, r, args.max_documents) for r in args.round_grid],
        backend,
        efdb=efdb,
        assess_options=options,
    )
    _write_study(rounds, args.out, "rounds")
    for point in rounds.points:
        shown = f"{point.ape_mean:6.2f}%" if point.ape_mean == point.ape_mean else "    n/a"
        info(
            f"rounds {point.budget.max_rounds:2d}: f1 {point.f1_mean:.3f}  "
            f"footprint ape {shown}  converged {point.converged}/{point.n_cases}"
        )

    info(f"artifacts under {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
