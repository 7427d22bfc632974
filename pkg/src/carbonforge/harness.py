"""Evaluation harness: metrics, resampling protocols, synthetic worlds.

Everything here is deterministic given its seed. Sweeps aggregate per-run
scores with sample statistics so reports carry both a center and a spread.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import FeatureVector, LifeCycleInventory, dump_json
from .ingestion import GRID_FEATURE_SCHEMA, GRID_SOURCES, GridRecord, annual_mean_intensity
from .knn import LabeledRecord, TrainedIndex, build_index, estimate


# ---------------------------------------------------------------------------
# scalar metrics


def ape(true: float, pred: float) -> float:
    """Absolute percentage error, in percent."""
    if true == 0:
        raise ValueError("ape undefined for a zero true value")
    return abs(pred - true) / abs(true) * 100.0


def mape(true: Sequence[float], pred: Sequence[float]) -> float:
    if len(true) != len(pred):
        raise ValueError("true and pred must have equal length")
    if not true:
        raise ValueError("mape of an empty sample is undefined")
    total = 0.0
    for i, (t, p) in enumerate(zip(true, pred)):
        if t == 0:
            raise ValueError(f"mape undefined: true value at index {i} is zero")
        total += abs(p - t) / abs(t)
    return total / len(true) * 100.0


def mae(true: Sequence[float], pred: Sequence[float]) -> float:
    if len(true) != len(pred):
        raise ValueError("true and pred must have equal length")
    if not true:
        raise ValueError("mae of an empty sample is undefined")
    return sum(abs(p - t) for t, p in zip(true, pred)) / len(true)


def r2(true: Sequence[float], pred: Sequence[float]) -> float:
    if len(true) != len(pred):
        raise ValueError("true and pred must have equal length")
    if len(true) < 2:
        raise ValueError("r2 needs at least two points")
    mean_true = statistics.fmean(true)
    ss_tot = sum((t - mean_true) ** 2 for t in true)
    if ss_tot == 0:
        raise ValueError("r2 undefined for constant true values")
    ss_res = sum((t - p) ** 2 for t, p in zip(true, pred))
    return 1.0 - ss_res / ss_tot


def ecdf(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CDF support points and cumulative fractions."""
    xs = np.sort(np.asarray(values, dtype=float))
    if xs.size == 0:
        raise ValueError("ecdf of an empty sample is undefined")
    return xs, np.arange(1, xs.size + 1, dtype=float) / xs.size


# ---------------------------------------------------------------------------
# inventory metrics


def _class_entry_counts(lci: LifeCycleInventory) -> dict[str, int]:
    counts: dict[str, int] = {}
    for entry in lci.entries:
        counts[entry.component_class] = counts.get(entry.component_class, 0) + 1
    return counts


def lci_f1(predicted: LifeCycleInventory, reference: LifeCycleInventory) -> float:
    """F1 over per-class entry counts, pairing entries up to the smaller count.

    Two empty inventories agree perfectly (1.0); one empty against a
    non-empty reference scores 0.0.
    """
    p_counts = _class_entry_counts(predicted)
    r_counts = _class_entry_counts(reference)
    n_pred = sum(p_counts.values())
    n_ref = sum(r_counts.values())
    if n_pred == 0 and n_ref == 0:
        return 1.0
    if n_pred == 0 or n_ref == 0:
        return 0.0
    tp = sum(min(p_counts.get(c, 0), r_counts.get(c, 0)) for c in set(p_counts) | set(r_counts))
    if tp == 0:
        return 0.0
    precision = tp / n_pred
    recall = tp / n_ref
    return 2 * precision * recall / (precision + recall)


def _class_quantity_dist(lci: LifeCycleInventory, classes: Sequence[str]) -> np.ndarray | None:
    totals = np.zeros(len(classes))
    index = {c: i for i, c in enumerate(classes)}
    for entry in lci.entries:
        totals[index[entry.component_class]] += entry.quantity
    total = totals.sum()
    if total <= 0:
        return None
    return totals / total


def lci_jsd(predicted: LifeCycleInventory, reference: LifeCycleInventory) -> float:
    """Jensen-Shannon divergence (base 2) between class quantity shares.

    Quantity-weighted, so mixed-unit inventories are better compared with
    lci_l1; here the shares answer "where does the mass of the inventory
    sit". Bounded in [0, 1]. Two empty inventories score 0, one empty
    scores the maximum.
    """
    classes = sorted(
        {e.component_class for e in predicted.entries}
        | {e.component_class for e in reference.entries}
    )
    p = _class_quantity_dist(predicted, classes) if classes else None
    q = _class_quantity_dist(reference, classes) if classes else None
    if p is None and q is None:
        return 0.0
    if p is None or q is None:
        return 1.0
    m = 0.5 * (p + q)

    def _kl(a: np.ndarray, b: np.ndarray) -> float:
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    return 0.5 * _kl(p, m) + 0.5 * _kl(q, m)


def lci_l1(predicted: LifeCycleInventory, reference: LifeCycleInventory) -> float:
    """L1 distance between total quantities per (class, unit) bucket."""

    def _buckets(lci: LifeCycleInventory) -> dict[tuple[str, str], float]:
        out: dict[tuple[str, str], float] = {}
        for entry in lci.entries:
            key = (entry.component_class, entry.unit)
            out[key] = out.get(key, 0.0) + entry.quantity
        return out

    p = _buckets(predicted)
    q = _buckets(reference)
    return sum(abs(p.get(key, 0.0) - q.get(key, 0.0)) for key in set(p) | set(q))


# ---------------------------------------------------------------------------
# resampling protocols


@dataclass(frozen=True)
class EstimatorConfig:
    k_neighbors: int = 5
    category: str = "eval"

    def __post_init__(self):
        if int(self.k_neighbors) < 1:
            raise ValueError("k_neighbors must be >= 1")
        object.__setattr__(self, "k_neighbors", int(self.k_neighbors))


def kfold_partition(
    n: int, k_folds: int, holdout_frac: float = 0.2, seed: int = 0
) -> tuple[tuple[int, ...], tuple[tuple[int, ...], ...]]:
    """Shuffle indices, carve off a holdout, split the rest into k folds.

    The folds partition the non-holdout indices exactly, with sizes
    differing by at most one.
    """
    if not 0 <= holdout_frac < 1:
        raise ValueError("holdout_frac must be in [0, 1)")
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_hold = int(round(holdout_frac * n))
    holdout = tuple(int(i) for i in perm[:n_hold])
    rest = perm[n_hold:]
    if len(rest) < k_folds:
        raise ValueError("not enough records left for the requested folds")
    folds = tuple(tuple(int(i) for i in chunk) for chunk in np.array_split(rest, k_folds))
    return holdout, folds


@dataclass(frozen=True)
class EvalSplitRow:
    label: str
    n_eval: int
    mape: float
    mae: float
    r2: float
    failures: int

    def to_dict(self) -> dict:
        # degenerate splits carry inf/nan markers with no JSON spelling
        return {
            "label": self.label,
            "n_eval": self.n_eval,
            "mape": _finite_or_none(self.mape),
            "mae": _finite_or_none(self.mae),
            "r2": _finite_or_none(self.r2),
            "failures": self.failures,
        }


def _finite_or_none(value: float) -> float | None:
    return value if math.isfinite(value) else None


def _r2_or_nan(true: Sequence[float], pred: Sequence[float]) -> float:
    # undefined for fewer than two points or a constant truth (duplicate
    # products in one fold); report the gap instead of failing the run
    if len(true) < 2:
        return math.nan
    try:
        return r2(true, pred)
    except ValueError:
        return math.nan


def _eval_split(
    records: Sequence[LabeledRecord],
    train_idx: Sequence[int],
    eval_idx: Sequence[int],
    config: EstimatorConfig,
    label: str,
) -> EvalSplitRow:
    index = build_index([records[i] for i in train_idx], config.category)
    true: list[float] = []
    pred: list[float] = []
    failures = 0
    for i in eval_idx:
        try:
            est = estimate(index, records[i].features, k=config.k_neighbors)
        except ValueError:
            failures += 1
            continue
        true.append(records[i].target)
        pred.append(est.mean)
    return EvalSplitRow(
        label=label,
        n_eval=len(eval_idx),
        mape=mape(true, pred) if true else math.inf,
        mae=mae(true, pred) if true else math.inf,
        r2=_r2_or_nan(true, pred),
        failures=failures,
    )


@dataclass(frozen=True)
class CVReport:
    folds: tuple[EvalSplitRow, ...]
    holdout: EvalSplitRow | None
    n_records: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "seed": self.seed,
            "folds": [f.to_dict() for f in self.folds],
            "holdout": self.holdout.to_dict() if self.holdout else None,
            "fold_mape_mean": _finite_or_none(statistics.fmean(f.mape for f in self.folds)),
        }

    def csv_rows(self) -> tuple[tuple[str, ...], list[tuple]]:
        header = ("label", "n_eval", "mape", "mae", "r2", "failures")
        rows = [
            (f.label, f.n_eval, f.mape, f.mae, f.r2, f.failures)
            for f in self.folds + ((self.holdout,) if self.holdout else ())
        ]
        return header, rows


def kfold_cv(
    records: Sequence[LabeledRecord],
    k_folds: int = 5,
    holdout_frac: float = 0.2,
    config: EstimatorConfig = EstimatorConfig(),
    seed: int = 0,
) -> CVReport:
    """Holdout-then-k-fold cross validation of the neighbor estimator."""
    holdout_idx, folds = kfold_partition(len(records), k_folds, holdout_frac, seed)
    rest = [i for fold in folds for i in fold]
    rows = []
    for fold_no, fold in enumerate(folds, start=1):
        fold_set = set(fold)
        train = [i for i in rest if i not in fold_set]
        rows.append(_eval_split(records, train, fold, config, f"fold{fold_no}"))
    holdout_row = None
    if holdout_idx:
        holdout_row = _eval_split(records, rest, holdout_idx, config, "holdout")
    return CVReport(folds=tuple(rows), holdout=holdout_row, n_records=len(records), seed=seed)


@dataclass(frozen=True)
class SweepRow:
    x: float
    mape_mean: float
    mape_sd: float
    failures: int
    n_runs: int

    def to_dict(self) -> dict:
        # the infinite no-usable-estimate marker has no JSON spelling
        mean = self.mape_mean if math.isfinite(self.mape_mean) else None
        return {
            "x": self.x,
            "mape_mean": mean,
            "mape_sd": self.mape_sd,
            "failures": self.failures,
            "n_runs": self.n_runs,
        }


@dataclass(frozen=True)
class SweepReport:
    x_name: str
    rows: tuple[SweepRow, ...]
    seed: int

    def to_dict(self) -> dict:
        return {"x_name": self.x_name, "seed": self.seed, "rows": [r.to_dict() for r in self.rows]}

    def csv_rows(self) -> tuple[tuple[str, ...], list[tuple]]:
        header = (self.x_name, "mape_mean", "mape_sd", "failures", "n_runs")
        rows = [(r.x, r.mape_mean, r.mape_sd, r.failures, r.n_runs) for r in self.rows]
        return header, rows


def _aggregate(x: float, run_mapes: Sequence[float], failures: int) -> SweepRow:
    finite = [m for m in run_mapes if math.isfinite(m)]
    if not finite:
        mean, sd = math.inf, 0.0
    else:
        mean = statistics.fmean(finite)
        sd = statistics.stdev(finite) if len(finite) > 1 else 0.0
        if len(finite) < len(run_mapes):
            mean = math.inf  # at least one run produced nothing usable
    return SweepRow(x=x, mape_mean=mean, mape_sd=sd, failures=failures, n_runs=len(run_mapes))


def scaling_sweep(
    records: Sequence[LabeledRecord],
    sizes: Sequence[int],
    repeats: int = 10,
    eval_n: int = 30,
    config: EstimatorConfig = EstimatorConfig(),
    seed: int = 0,
) -> SweepReport:
    """Accuracy as a function of training-set size, on a fixed eval budget.

    Each run draws a fresh permutation: the first `size` records train,
    the last `eval_n` are scored. Sizes must leave room for both.
    """
    n = len(records)
    if max(sizes) + eval_n > n:
        raise ValueError("largest size plus eval_n exceeds the record count")
    rows = []
    for size in sizes:
        run_mapes: list[float] = []
        failures = 0
        for rep in range(repeats):
            rng = np.random.default_rng([seed, size, rep])
            perm = rng.permutation(n)
            train = [int(i) for i in perm[:size]]
            eval_idx = [int(i) for i in perm[n - eval_n :]]
            row = _eval_split(records, train, eval_idx, config, f"size{size}r{rep}")
            run_mapes.append(row.mape)
            failures += row.failures
        rows.append(_aggregate(float(size), run_mapes, failures))
    return SweepReport(x_name="train_size", rows=tuple(rows), seed=seed)


def _mask_features(vector: FeatureVector, fraction: float, rng: np.random.Generator) -> FeatureVector:
    present = [name for name, _ in vector.schema if name in vector.values]
    n_drop = int(round(fraction * len(present)))
    n_drop = min(n_drop, len(present))
    if n_drop == 0:
        return vector
    dropped = set(rng.choice(len(present), size=n_drop, replace=False).tolist())
    values = {name: vector.values[name] for i, name in enumerate(present) if i not in dropped}
    return FeatureVector(schema=vector.schema, values=values)


def masking_sweep(
    records: Sequence[LabeledRecord],
    fractions: Sequence[float],
    repeats: int = 5,
    eval_frac: float = 0.2,
    config: EstimatorConfig = EstimatorConfig(),
    seed: int = 0,
) -> SweepReport:
    """Accuracy as query features are randomly hidden.

    Masking drops round(fraction * n_present) features per query. A query
    left with nothing, or sharing nothing with the index, counts as a
    failure; a fraction of 1.0 therefore reports an infinite error marker
    with every attempt failed.
    """
    n = len(records)
    n_eval = max(1, int(round(eval_frac * n)))
    rows = []
    for fraction in fractions:
        if not 0 <= fraction <= 1:
            raise ValueError("fractions must lie in [0, 1]")
        run_mapes: list[float] = []
        failures = 0
        for rep in range(repeats):
            rng = np.random.default_rng([seed, int(fraction * 1000), rep])
            perm = rng.permutation(n)
            eval_idx = [int(i) for i in perm[:n_eval]]
            train_idx = [int(i) for i in perm[n_eval:]]
            index = build_index([records[i] for i in train_idx], config.category)
            true: list[float] = []
            pred: list[float] = []
            for i in eval_idx:
                masked = _mask_features(records[i].features, fraction, rng)
                if not masked.values:
                    failures += 1
                    continue
                try:
                    est = estimate(index, masked, k=config.k_neighbors)
                except ValueError:
                    failures += 1
                    continue
                true.append(records[i].target)
                pred.append(est.mean)
            run_mapes.append(mape(true, pred) if true else math.inf)
        rows.append(_aggregate(float(fraction), run_mapes, failures))
    return SweepReport(x_name="masked_fraction", rows=tuple(rows), seed=seed)


@dataclass(frozen=True)
class CoverageReport:
    n: int
    covered: int
    failures: int

    @property
    def fraction(self) -> float:
        return self.covered / self.n if self.n else math.nan

    def to_dict(self) -> dict:
        return {"n": self.n, "covered": self.covered, "failures": self.failures, "fraction": self.fraction}


def loo_coverage(records: Sequence[LabeledRecord], config: EstimatorConfig = EstimatorConfig()) -> CoverageReport:
    """Leave-one-out check that the 95% interval brackets the held-out value."""
    covered = 0
    failures = 0
    n = 0
    for i, record in enumerate(records):
        rest = list(records[:i]) + list(records[i + 1 :])
        index = build_index(rest, config.category)
        try:
            est = estimate(index, record.features, k=config.k_neighbors)
        except ValueError:
            failures += 1
            continue
        n += 1
        if est.ci95[0] <= record.target <= est.ci95[1]:
            covered += 1
    return CoverageReport(n=n, covered=covered, failures=failures)


def measure_latency_ms(index: TrainedIndex, queries: Sequence[FeatureVector], k: int = 5) -> list[float]:
    """Wall-clock per-query estimate latency in milliseconds."""
    out = []
    for query in queries:
        t0 = time.perf_counter()
        estimate(index, query, k=k)
        out.append((time.perf_counter() - t0) * 1000.0)
    return out


# ---------------------------------------------------------------------------
# synthetic worlds

# Lifecycle intensity of each generation source in the synthetic world,
# gCO2e per kWh. Constants of the world, not estimates of anything real.
SOURCE_INTENSITY_G_PER_KWH = {
    "nuclear": 12.0,
    "wind": 11.0,
    "hydro": 24.0,
    "solar": 45.0,
    "coal": 980.0,
    "gas": 490.0,
    "oil": 740.0,
    "biomass": 230.0,
    "geothermal": 38.0,
    "battery_discharge": 120.0,
    "unknown": 300.0,
}

GRID_ARCHETYPES: dict[str, dict[str, float]] = {
    "coal_heavy": {
        "coal": 0.55, "gas": 0.20, "hydro": 0.05, "wind": 0.05, "nuclear": 0.05,
        "solar": 0.03, "oil": 0.02, "biomass": 0.02, "geothermal": 0.01,
        "battery_discharge": 0.01, "unknown": 0.01,
    },
    "gas_heavy": {
        "gas": 0.50, "coal": 0.10, "nuclear": 0.10, "wind": 0.10, "solar": 0.08,
        "hydro": 0.05, "biomass": 0.03, "oil": 0.01, "geothermal": 0.01,
        "battery_discharge": 0.01, "unknown": 0.01,
    },
    "nuclear_heavy": {
        "nuclear": 0.60, "hydro": 0.10, "gas": 0.10, "wind": 0.08, "solar": 0.05,
        "coal": 0.02, "biomass": 0.02, "oil": 0.01, "geothermal": 0.005,
        "battery_discharge": 0.005, "unknown": 0.01,
    },
    "hydro_heavy": {
        "hydro": 0.60, "wind": 0.10, "gas": 0.10, "nuclear": 0.05, "solar": 0.05,
        "coal": 0.03, "biomass": 0.03, "oil": 0.01, "geothermal": 0.01,
        "battery_discharge": 0.01, "unknown": 0.01,
    },
    "wind_solar": {
        "wind": 0.35, "solar": 0.25, "gas": 0.15, "hydro": 0.08, "nuclear": 0.05,
        "coal": 0.03, "biomass": 0.04, "battery_discharge": 0.02, "oil": 0.01,
        "geothermal": 0.01, "unknown": 0.01,
    },
    "mixed": {
        "gas": 0.20, "coal": 0.15, "nuclear": 0.10, "wind": 0.10, "hydro": 0.10,
        "solar": 0.10, "biomass": 0.08, "oil": 0.05, "geothermal": 0.05,
        "battery_discharge": 0.03, "unknown": 0.04,
    },
}


def synthetic_grid_world(n_regions: int = 348, n_days: int = 4, seed: int = 0) -> list[GridRecord]:
    """Regions drawn from six mix archetypes with day-to-day jitter.

    Daily mixes are Dirichlet draws concentrated on the region archetype;
    intensity is the share-weighted source intensity with 5% relative
    noise. Ground truth is recoverable from the mix, which is the point.
    """
    import datetime

    rng = np.random.default_rng(seed)
    archetype_names = list(GRID_ARCHETYPES)
    records: list[GridRecord] = []
    base_date = datetime.date(2024, 1, 1)
    intensity = np.array([SOURCE_INTENSITY_G_PER_KWH[s] for s in GRID_SOURCES])
    concentration = 200.0
    for region_no in range(n_regions):
        profile = GRID_ARCHETYPES[archetype_names[region_no % len(archetype_names)]]
        alpha = np.array([max(profile.get(s, 0.0), 1e-3) for s in GRID_SOURCES]) * concentration
        region = f"R{region_no:03d}"
        for day in range(n_days):
            shares = rng.dirichlet(alpha)
            noise = 1.0 + 0.05 * float(rng.standard_normal())
            ci = float(shares @ intensity) * max(noise, 0.5)
            records.append(
                GridRecord(
                    region=region,
                    date=(base_date + datetime.timedelta(days=day)).isoformat(),
                    carbon_intensity_g_per_kwh=ci,
                    source_shares=FeatureVector(
                        schema=GRID_FEATURE_SCHEMA,
                        values={s: float(v) for s, v in zip(GRID_SOURCES, shares)},
                    ),
                )
            )
    return records


def grid_region_records(records: Sequence[GridRecord]) -> list[LabeledRecord]:
    """Collapse daily grid records to one labeled record per region.

    Features are per-source mean shares over the days each source was
    observed; the target is the annual mean intensity.
    """
    targets = annual_mean_intensity(records)
    by_region: dict[str, list[GridRecord]] = {}
    for record in records:
        by_region.setdefault(record.region, []).append(record)
    out: list[LabeledRecord] = []
    for region in sorted(by_region):
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}
        for record in by_region[region]:
            for name, value in record.source_shares.values.items():
                sums[name] = sums.get(name, 0.0) + value
                counts[name] = counts.get(name, 0) + 1
        values = {name: sums[name] / counts[name] for name in sums}
        out.append(
            LabeledRecord(
                record_id=region,
                features=FeatureVector(schema=GRID_FEATURE_SCHEMA, values=values),
                target=targets[region],
            )
        )
    return out


_DISPLAY_BONUS = {"lcd": 0.0, "oled": 25.0, "miniled": 18.0}
_CHASSIS_BONUS = {"plastic": 8.0, "magnesium": 22.0, "aluminum": 30.0}


def synthetic_product_records(n: int, seed: int = 0, category: str = "laptop"):
    """Synthetic disclosed footprints whose target is a smooth feature map.

    Used for estimator plumbing checks where the exact functional form is
    irrelevant but locality (near features imply near footprints) matters.
    """
    from .core import ProductRecord
    from .ingestion import PRODUCT_FEATURE_SCHEMA

    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        mass = float(rng.uniform(0.9, 2.8))
        screen = float(rng.uniform(11.0, 17.0))
        memory = float(rng.choice([8, 16, 32, 64]))
        storage = float(rng.choice([256, 512, 1024, 2048]))
        battery = float(rng.uniform(40.0, 100.0))
        node = float(rng.choice([5, 7, 10, 14]))
        display = str(rng.choice(list(_DISPLAY_BONUS)))
        chassis = str(rng.choice(list(_CHASSIS_BONUS)))
        cf = (
            120.0
            + 45.0 * mass
            + 6.0 * screen
            + 0.9 * memory
            + 0.02 * storage
            + 0.8 * battery
            + 300.0 / node
            + _DISPLAY_BONUS[display]
            + _CHASSIS_BONUS[chassis]
            + 8.0 * float(rng.standard_normal())
        )
        records.append(
            ProductRecord(
                company="SynthCo",
                category=category,
                name=f"unit-{i:04d}",
                features=FeatureVector(
                    schema=PRODUCT_FEATURE_SCHEMA,
                    values={
                        "mass_kg": mass,
                        "screen_size_in": screen,
                        "memory_gb": memory,
                        "storage_gb": storage,
                        "battery_capacity_wh": battery,
                        "technology_node_nm": node,
                        "display_type": display,
                        "chassis_material": chassis,
                    },
                ),
                reported_cf_kgco2e=max(cf, 1.0),
            )
        )
    return records


# ---------------------------------------------------------------------------
# report output


def write_json_report(path, payload: Mapping) -> None:
    from pathlib import Path

    Path(path).write_text(dump_json(dict(payload)) + "\n", encoding="utf-8")


def write_csv_report(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    import csv
    from pathlib import Path

    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
