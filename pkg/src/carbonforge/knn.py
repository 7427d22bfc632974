"""Nearest-neighbor footprint estimation with uncertainty.

The estimator finds the k most similar records under a missing-aware
Euclidean distance and summarizes their targets as a completeness-weighted
Gaussian. A linear scan keeps query cost O(n); there is no tree or cache
to invalidate, which keeps estimates auditable down to the neighbor list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    MISSING,
    EstimateDistribution,
    FeatureVector,
    ProductRecord,
    completeness,
)

METHOD_TAG = "knn-weighted-gaussian"

# Relative threshold under which a feature's spread is treated as zero and
# its std replaced by the guard value 1, keeping z-scores finite.
_STD_GUARD_REL = 1e-12


@dataclass(frozen=True)
class LabeledRecord:
    """An identified feature vector with a real-valued target."""

    record_id: str
    features: FeatureVector
    target: float

    def __post_init__(self):
        target = float(self.target)
        if not math.isfinite(target):
            raise ValueError(f"record {self.record_id!r} has non-finite target")
        object.__setattr__(self, "record_id", str(self.record_id))
        object.__setattr__(self, "target", target)


def records_from_products(products: Sequence[ProductRecord]) -> list[LabeledRecord]:
    """Adapt disclosed products to index records; the reported CF is the target."""
    return [
        LabeledRecord(f"{p.company}:{p.name}", p.features, p.reported_cf_kgco2e)
        for p in products
    ]


@dataclass(frozen=True)
class TrainedIndex:
    """Immutable record store plus per-numeric-feature normalization stats.

    The constructor precomputes z-scored numeric columns and integer
    categorical codes so queries reduce to a handful of vectorized passes.
    """

    category: str
    records: tuple[LabeledRecord, ...]
    normalization: Mapping[str, tuple[float, float]]

    def __post_init__(self):
        records = tuple(self.records)
        if not records:
            raise ValueError("cannot build an index from zero records")
        schema = records[0].features.schema
        for rec in records:
            if rec.features.schema != schema:
                raise ValueError(f"record {rec.record_id!r} does not share the index schema")
        ids = [r.record_id for r in records]
        if len(set(ids)) != len(ids):
            raise ValueError("record ids must be unique within an index")
        norm = {str(k): (float(m), float(s)) for k, (m, s) in dict(self.normalization).items()}
        numeric_names = [n for n, kind in schema if kind == "numeric"]
        if set(norm) != set(numeric_names):
            raise ValueError("normalization must cover exactly the numeric features")
        for name, (_, std) in norm.items():
            if not (math.isfinite(std) and std > 0):
                raise ValueError(f"normalization std for {name!r} must be positive")
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "normalization", norm)
        object.__setattr__(self, "_schema", schema)
        self._precompute()

    @property
    def schema(self):
        return self._schema

    def _precompute(self) -> None:
        schema = self._schema
        n = len(self.records)
        numeric_cols: dict[str, np.ndarray] = {}
        cat_cols: dict[str, np.ndarray] = {}
        cat_vocab: dict[str, dict[str, int]] = {}
        for name, kind in schema:
            if kind == "numeric":
                mean, std = self.normalization[name]
                col = np.full(n, np.nan)
                for i, rec in enumerate(self.records):
                    value = rec.features.values.get(name)
                    if value is not None:
                        col[i] = (value - mean) / std
                numeric_cols[name] = col
            else:
                vocab: dict[str, int] = {}
                col = np.full(n, -1, dtype=np.int64)
                for i, rec in enumerate(self.records):
                    value = rec.features.values.get(name)
                    if value is not None:
                        col[i] = vocab.setdefault(value, len(vocab))
                cat_cols[name] = col
                cat_vocab[name] = vocab
        d = len(schema)
        weights = np.array(
            [max(completeness(rec.features), 1.0 / d) for rec in self.records]
        )
        object.__setattr__(self, "_numeric_z", numeric_cols)
        object.__setattr__(self, "_cat_codes", cat_cols)
        object.__setattr__(self, "_cat_vocab", cat_vocab)
        object.__setattr__(self, "_targets", np.array([r.target for r in self.records]))
        object.__setattr__(self, "_weights", weights)
        object.__setattr__(self, "_ids", [r.record_id for r in self.records])

    def __len__(self) -> int:
        return len(self.records)

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "records": [
                {"id": r.record_id, "features": r.features.to_dict(), "target": r.target}
                for r in self.records
            ],
            "normalization": {k: [m, s] for k, (m, s) in self.normalization.items()},
        }

    @staticmethod
    def from_dict(data: Mapping) -> "TrainedIndex":
        return TrainedIndex(
            category=data["category"],
            records=tuple(
                LabeledRecord(r["id"], FeatureVector.from_dict(r["features"]), r["target"])
                for r in data["records"]
            ),
            normalization={k: (m, s) for k, (m, s) in data["normalization"].items()},
        )


def save_index(index: TrainedIndex, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(index.to_dict(), fh, sort_keys=True, indent=2)


def load_index(path) -> TrainedIndex:
    with open(path, "r", encoding="utf-8") as fh:
        return TrainedIndex.from_dict(json.load(fh))


def fit_normalization(records: Sequence[LabeledRecord]) -> dict[str, tuple[float, float]]:
    """Per-numeric-feature (mean, std) over present values, with guards.

    A feature with no present values gets (0, 1); a constant feature keeps
    its mean but stores std 1 so z-scoring stays finite.
    """
    norm: dict[str, tuple[float, float]] = {}
    schema = records[0].features.schema
    for name, kind in schema:
        if kind != "numeric":
            continue
        present = [r.features.values[name] for r in records if name in r.features.values]
        if not present:
            norm[name] = (0.0, 1.0)
            continue
        arr = np.asarray(present)
        mean = float(arr.mean())
        std = float(arr.std())
        if std <= _STD_GUARD_REL * max(1.0, abs(mean)):
            std = 1.0
        norm[name] = (mean, std)
    return norm


def build_index(records: Sequence[LabeledRecord], category: str) -> TrainedIndex:
    """Build an immutable index in one O(n) pass over the records."""
    records = list(records)
    if not records:
        raise ValueError("cannot build an index from an empty record list")
    return TrainedIndex(category=category, records=tuple(records), normalization=fit_normalization(records))


def add_record(index: TrainedIndex, record: LabeledRecord) -> TrainedIndex:
    """Return a new index over the old records plus one; stats recomputed."""
    if record.features.schema != index.schema:
        raise ValueError("new record does not share the index schema")
    return build_index(list(index.records) + [record], index.category)


def distance(a: FeatureVector, b: FeatureVector, normalization: Mapping[str, tuple[float, float]]) -> float:
    """Missing-aware Euclidean distance between two vectors of one schema.

    Only mutually present features S contribute: numeric dimensions as
    z-score differences, categorical as 0/1 mismatch. The result is
    rescaled by sqrt(d / |S|) so sparse overlaps are not rewarded; with no
    overlap the distance is +inf, meaning "not comparable".
    """
    if a.schema != b.schema:
        raise ValueError("feature vectors must share a schema")
    d = len(a.schema)
    if d == 0:
        raise ValueError("degenerate schema: no features")
    sq = 0.0
    shared = 0
    for name, kind in a.schema:
        av = a.values.get(name)
        bv = b.values.get(name)
        if av is None or bv is None:
            continue
        if kind == "numeric":
            mean, std = normalization[name]
            diff = (av - mean) / std - (bv - mean) / std
            sq += diff * diff
        else:
            sq += 0.0 if av == bv else 1.0
        shared += 1
    if shared == 0:
        return math.inf
    return math.sqrt(d / shared) * math.sqrt(sq)


def _query_distances(index: TrainedIndex, query: FeatureVector) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized distances from query to every record; inf where disjoint.

    Contributions accumulate per schema dimension in declaration order, so
    each record's sum is evaluated in the same sequence as distance().
    """
    n = len(index)
    d = len(index.schema)
    sq = np.zeros(n)
    shared = np.zeros(n, dtype=np.int64)
    for name, kind in index.schema:
        value = query.values.get(name)
        if value is None:
            continue
        if kind == "numeric":
            mean, std = index.normalization[name]
            qz = (value - mean) / std
            col = index._numeric_z[name]
            mask = ~np.isnan(col)
            diff = col[mask] - qz
            sq[mask] += diff * diff
        else:
            code = index._cat_vocab[name].get(value, -2)
            col = index._cat_codes[name]
            mask = col >= 0
            sq[mask] += (col[mask] != code).astype(np.float64)
        shared[mask] += 1
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.where(shared > 0, np.sqrt(d / shared) * np.sqrt(sq), np.inf)
    return dist, shared


def estimate(index: TrainedIndex, query: FeatureVector, k: int = 5) -> EstimateDistribution:
    """Weighted Gaussian estimate from the k nearest comparable records.

    Parameters
    ----------
    index : TrainedIndex
    query : FeatureVector
        Must share the index schema; may have any subset of values present.
    k : int
        Neighbor count, clipped to the index size.

    Returns
    -------
    EstimateDistribution
        Completeness-weighted mean and (biased) std of the neighbor
        targets, with the selected neighbors as provenance. Distance ties
        are broken by record id so results are permutation invariant.
    """
    if query.schema != index.schema:
        raise ValueError("query does not share the index schema")
    if int(k) < 1:
        raise ValueError("k must be >= 1")
    k = min(int(k), len(index))
    dist, shared = _query_distances(index, query)
    finite = np.flatnonzero(shared > 0)
    if finite.size == 0:
        raise ValueError("query shares no present features with any record")
    ids = index._ids
    if k < finite.size:
        finite_d = dist[finite]
        kth = np.partition(finite_d, k - 1)[k - 1]
        strict = finite[finite_d < kth]
        ties = sorted(finite[finite_d == kth].tolist(), key=lambda i: ids[i])
        chosen = strict.tolist() + ties[: k - strict.size]
    else:
        chosen = finite.tolist()
    chosen.sort(key=lambda i: (dist[i], ids[i]))
    weights = index._weights
    targets = index._targets
    wsum = 0.0
    wysum = 0.0
    for i in chosen:
        wsum += weights[i]
        wysum += weights[i] * targets[i]
    mean = wysum / wsum
    var = 0.0
    for i in chosen:
        diff = targets[i] - mean
        var += weights[i] * diff * diff
    std = math.sqrt(var / wsum)
    neighbors = tuple((ids[i], float(dist[i]), float(weights[i])) for i in chosen)
    return EstimateDistribution(mean=mean, std=std, neighbors=neighbors, method_tag=METHOD_TAG)


@dataclass(frozen=True)
class CalibrationTransform:
    """Affine target-distribution alignment: scale by median ratio, no shift."""

    scale: float
    shift: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be finite and > 0")
        if not math.isfinite(self.shift):
            raise ValueError("shift must be finite")

    def to_dict(self) -> dict:
        return {"scale": self.scale, "shift": self.shift}

    @staticmethod
    def from_dict(data: Mapping) -> "CalibrationTransform":
        return CalibrationTransform(scale=data["scale"], shift=data.get("shift", 0.0))


def fit_calibration(source_targets: Sequence[float], target_targets: Sequence[float]) -> CalibrationTransform:
    """Median-ratio calibration from a source to a target distribution."""
    import statistics

    if not source_targets or not target_targets:
        raise ValueError("both target samples must be non-empty")
    source_median = statistics.median(source_targets)
    target_median = statistics.median(target_targets)
    if source_median <= 0 or target_median <= 0:
        raise ValueError("medians must be positive for ratio calibration")
    return CalibrationTransform(scale=target_median / source_median, shift=0.0)


def apply_calibration(transform: CalibrationTransform, est: EstimateDistribution) -> EstimateDistribution:
    """Scale an estimate into the calibrated frame; neighbors unchanged."""
    return EstimateDistribution(
        mean=transform.scale * est.mean + transform.shift,
        std=transform.scale * est.std,
        neighbors=est.neighbors,
        method_tag=f"{est.method_tag}+calibrated",
    )
