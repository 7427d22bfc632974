#!/usr/bin/env python3
"""Electricity-mix estimation study on the synthetic region world.

Runs three passes over one world and writes JSON + CSV artifacts:

  cross-validation   holdout + k folds at the full region count
  data efficiency    holdout error as the training pool shrinks
  feature masking    holdout error as query features go missing

All randomness is seed-derived, so a rerun with the same flags
reproduces every number bit for bit.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from carbonforge import harness

ROOT = Path(__file__).resolve().parent.parent


def info(msg: str) -> None:
    print(msg, file=sys.stderr)


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--regions", type=int, default=348)
    parser.add_argument("--days", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--holdout", type=float, default=0.2)
    parser.add_argument("--sizes", type=_int_list, default=[30, 60, 120, 240])
    parser.add_argument("--repeats", type=int, default=10)
    parser.add_argument(
        "--fractions", type=_float_list, default=[0.0, 0.25, 0.5, 0.75, 1.0]
    )
    parser.add_argument("--out", type=Path, default=ROOT / "runs" / "grid")
    args = parser.parse_args(argv)

    world = harness.synthetic_grid_world(args.regions, n_days=args.days, seed=args.seed)
    records = harness.grid_region_records(world)
    info(f"world: {len(world)} daily rows -> {len(records)} region records")
    args.out.mkdir(parents=True, exist_ok=True)

    cv = harness.kfold_cv(records, args.folds, args.holdout, seed=args.seed)
    harness.write_json_report(args.out / "cv.json", cv.to_dict())
    header, rows = cv.csv_rows()
    harness.write_csv_report(args.out / "cv.csv", header, rows)
    if cv.holdout:
        info(
            f"cv: holdout mape={cv.holdout.mape:.2f}% r2={cv.holdout.r2:.3f} "
            f"over {cv.holdout.n_eval} regions"
        )

    sweep = harness.scaling_sweep(records, args.sizes, repeats=args.repeats, seed=args.seed)
    harness.write_json_report(args.out / "data_efficiency.json", sweep.to_dict())
    header, rows = sweep.csv_rows()
    harness.write_csv_report(args.out / "data_efficiency.csv", header, rows)
    for row in sweep.rows:
        info(f"size {int(row.x):>4}: mape {row.mape_mean:6.2f}% +- {row.mape_sd:.2f}")

    masking = harness.masking_sweep(records, args.fractions, repeats=args.repeats, seed=args.seed)
    harness.write_json_report(args.out / "masking.json", masking.to_dict())
    header, rows = masking.csv_rows()
    harness.write_csv_report(args.out / "masking.csv", header, rows)
    for row in masking.rows:
        shown = f"{row.mape_mean:6.2f}%" if row.mape_mean != float("inf") else "   inf"
        info(f"masked {row.x:.2f}: mape {shown}  failures {row.failures}")

    info(f"artifacts under {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
