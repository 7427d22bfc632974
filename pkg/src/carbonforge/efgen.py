"""Generalizing emission factors beyond the published tables.

Two estimators share the kNN machinery: grid carbon intensity from the
generation mix, and material EFs from embedded descriptions plus physical
descriptors. Material EFs span orders of magnitude, so that estimator works
in log space and can never produce a non-positive factor.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import knn
from .core import MISSING, EmissionFactor, EstimateDistribution, FeatureVector
from .ingestion import GRID_FEATURE_SCHEMA, GridRecord


class EmbeddingProvider(Protocol):
    """Deterministic text embedder: same text, same vector, every run."""

    name: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@lru_cache(maxsize=65536)
def _hash_embed(dim: int, seed: int, text: str) -> tuple[float, ...]:
    vec = np.zeros(dim)
    for token in _tokens(text):
        digest = hashlib.sha256(f"{seed}|{token}".encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "big") % dim
        sign = 1.0 if digest[8] & 1 else -1.0
        vec[bucket] += sign
    norm = float(np.linalg.norm(vec))
    if norm > 0:
        vec /= norm
    return tuple(float(x) for x in vec)


@dataclass(frozen=True)
class HashingEmbedder:
    """Seeded feature-hashing embedder; hermetic default, no network.

    Tokens are hashed with SHA-256 (stable across platforms and runs) into
    signed buckets; the result is L2-normalized. Texts with no alphanumeric
    tokens embed to the zero vector.
    """

    dim: int = 256
    seed: int = 0

    @property
    def name(self) -> str:
        return f"feature-hash-{self.dim}-seed{self.seed}"

    def embed(self, text: str) -> np.ndarray:
        return np.array(_hash_embed(self.dim, self.seed, text))


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity; 0.0 when either vector has zero norm."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


TEXT_COORD_DIM = 16

TEXT_COORD_SCHEMA = tuple((f"txt_{i:02d}", "numeric") for i in range(TEXT_COORD_DIM))

MATERIAL_DOMAIN_SCHEMA = (
    ("melting_point_K", "numeric"),
    ("phase_at_stp", "categorical"),
    ("elemental_category", "categorical"),
    ("density_kg_m3", "numeric"),
)

MATERIAL_MODES = ("text_only", "text_plus_domain")


@lru_cache(maxsize=16)
def _projection(dim: int, out_dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim, out_dim)) / math.sqrt(out_dim)


def embed_text_coords(text: str, provider) -> tuple[float, ...]:
    """Embed text and reduce to TEXT_COORD_DIM via a fixed random projection."""
    vec = np.asarray(provider.embed(text))
    proj = _projection(vec.shape[0], TEXT_COORD_DIM, seed=7)
    return tuple(float(x) for x in vec @ proj)


def grid_feature_vector(record: GridRecord) -> FeatureVector:
    """The 11-source share vector of a grid record; absent sources stay MISSING."""
    return record.source_shares


def build_grid_index(records: Sequence[GridRecord], category: str = "grid") -> knn.TrainedIndex:
    """Index region intensities by generation mix. Ids are region/date."""
    labeled = [
        knn.LabeledRecord(
            f"{r.region}/{r.date}", grid_feature_vector(r), r.carbon_intensity_g_per_kwh
        )
        for r in records
    ]
    return knn.build_index(labeled, category)


def estimate_grid_ci(index: knn.TrainedIndex, query_mix: FeatureVector, k: int = 5) -> EstimateDistribution:
    """Estimate carbon intensity for a generation mix.

    Pure delegation: the result is identical to the shared kNN estimator on
    the same index and query.
    """
    return knn.estimate(index, query_mix, k)


@dataclass(frozen=True)
class MaterialEntry:
    """An emission factor plus the coordinates used to find analogues."""

    ef: EmissionFactor
    domain_features: FeatureVector
    text_coords: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.domain_features.schema != MATERIAL_DOMAIN_SCHEMA:
            raise ValueError("domain_features must use the material domain schema")
        coords = self.text_coords
        if coords is not None:
            coords = tuple(float(x) for x in coords)
            if len(coords) != TEXT_COORD_DIM:
                raise ValueError(f"text_coords must have {TEXT_COORD_DIM} dims")
            object.__setattr__(self, "text_coords", coords)
        if coords is None and not self.domain_features.values:
            raise ValueError("entry needs text_coords or at least one domain feature")

    @staticmethod
    def from_ef(ef: EmissionFactor, provider=None) -> "MaterialEntry":
        """Build an entry from an EF, pulling domain features from ef.features."""
        values = {
            name: ef.features.values[name]
            for name, _ in MATERIAL_DOMAIN_SCHEMA
            if name in ef.features.values
        }
        coords = None
        if provider is not None and _tokens(ef.description):
            coords = embed_text_coords(ef.description, provider)
        return MaterialEntry(
            ef=ef,
            domain_features=FeatureVector(MATERIAL_DOMAIN_SCHEMA, values),
            text_coords=coords,
        )

    def to_dict(self) -> dict:
        return {
            "ef": self.ef.to_dict(),
            "domain_features": self.domain_features.to_dict(),
            "text_coords": list(self.text_coords) if self.text_coords is not None else None,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "MaterialEntry":
        return MaterialEntry(
            ef=EmissionFactor.from_dict(data["ef"]),
            domain_features=FeatureVector.from_dict(data["domain_features"]),
            text_coords=tuple(data["text_coords"]) if data.get("text_coords") is not None else None,
        )


def load_material_db(path) -> list[MaterialEntry]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(MaterialEntry.from_dict(json.loads(line)))
    return entries


def save_material_db(entries: Iterable[MaterialEntry], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")


def _combined_features(entry: MaterialEntry, mode: str) -> FeatureVector:
    if mode not in MATERIAL_MODES:
        raise ValueError(f"mode {mode!r} not in {MATERIAL_MODES}")
    values: dict[str, object] = {}
    if entry.text_coords is not None:
        for (name, _), coord in zip(TEXT_COORD_SCHEMA, entry.text_coords):
            values[name] = coord
    if mode == "text_only":
        return FeatureVector(TEXT_COORD_SCHEMA, values)
    schema = TEXT_COORD_SCHEMA + MATERIAL_DOMAIN_SCHEMA
    values.update(entry.domain_features.values)
    return FeatureVector(schema, values)


def material_feature_vector(ef: EmissionFactor, provider, mode: str = "text_plus_domain") -> FeatureVector:
    """Search coordinates for an EF: 16 embedded text dims, plus domain dims
    in text_plus_domain mode."""
    if not _tokens(ef.description):
        raise ValueError(f"EF {ef.id!r} has no describable text to embed")
    return _combined_features(MaterialEntry.from_ef(ef, provider), mode)


def estimate_material_ef(
    db: Sequence[MaterialEntry],
    query: MaterialEntry,
    k: int = 5,
    mode: str = "text_plus_domain",
    mask_ids: frozenset | set | Sequence[str] = (),
) -> EstimateDistribution:
    """Estimate an EF for a material with no published factor.

    The kNN Gaussian runs over log targets; the reported mean is the
    exponentiated weighted log-mean (always positive) and the std is the
    first-order (delta method) transform mean * log_std. The query's own
    entry can be masked by id for leave-one-out runs.
    """
    mask = set(mask_ids)
    pool = [e for e in db if e.ef.id not in mask]
    if len(pool) < int(k):
        raise ValueError(f"need at least k={k} entries after masking, have {len(pool)}")
    labeled = [
        knn.LabeledRecord(e.ef.id, _combined_features(e, mode), math.log(e.ef.kgco2e_per_unit))
        for e in pool
    ]
    index = knn.build_index(labeled, category=f"material-{mode}")
    log_est = knn.estimate(index, _combined_features(query, mode), k)
    mean = math.exp(log_est.mean)
    return EstimateDistribution(
        mean=mean,
        std=mean * log_est.std,
        neighbors=log_est.neighbors,
        method_tag="material-ef-lognormal",
    )


@dataclass(frozen=True)
class MaskedRow:
    ef_id: str
    true_value: float
    estimate: float
    ape_pct: float
    neighbor_ids: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "ef_id": self.ef_id,
            "true_value": self.true_value,
            "estimate": self.estimate,
            "ape_pct": self.ape_pct,
            "neighbor_ids": list(self.neighbor_ids),
        }


@dataclass(frozen=True)
class MaskedBenchmarkReport:
    """Per-entry errors of a masked re-estimation run plus aggregates.

    Trimmed aggregates drop rows whose APE lies beyond 3 standard
    deviations of the APE distribution (grossly wrong analogue picks).
    """

    mode: str
    k: int
    seed: int
    rows: tuple[MaskedRow, ...]
    mape_pct: float
    mae: float
    trimmed_mape_pct: float
    trimmed_mae: float

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "k": self.k,
            "seed": self.seed,
            "rows": [r.to_dict() for r in self.rows],
            "mape_pct": self.mape_pct,
            "mae": self.mae,
            "trimmed_mape_pct": self.trimmed_mape_pct,
            "trimmed_mae": self.trimmed_mae,
        }

    def csv_rows(self) -> list[list]:
        header = ["ef_id", "true_value", "estimate", "ape_pct"]
        return [header] + [[r.ef_id, r.true_value, r.estimate, r.ape_pct] for r in self.rows]


def run_masked_benchmark(
    db: Sequence[MaterialEntry],
    n_masked: int,
    k: int = 5,
    mode: str = "text_plus_domain",
    seed: int = 0,
) -> MaskedBenchmarkReport:
    """Hide n_masked entries one at a time and re-estimate each from the rest."""
    if not (1 <= n_masked <= len(db)):
        raise ValueError(f"n_masked must be in [1, {len(db)}]")
    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(db), size=n_masked, replace=False).tolist())
    rows: list[MaskedRow] = []
    for i in picked:
        entry = db[i]
        est = estimate_material_ef(db, entry, k=k, mode=mode, mask_ids={entry.ef.id})
        truth = entry.ef.kgco2e_per_unit
        ape = abs(est.mean - truth) / truth * 100.0
        rows.append(
            MaskedRow(
                ef_id=entry.ef.id,
                true_value=truth,
                estimate=est.mean,
                ape_pct=ape,
                neighbor_ids=tuple(nid for nid, _, _ in est.neighbors),
            )
        )
    apes = np.array([r.ape_pct for r in rows])
    errors = np.array([abs(r.estimate - r.true_value) for r in rows])
    cut = apes.mean() + 3.0 * apes.std()
    keep = apes <= cut
    return MaskedBenchmarkReport(
        mode=mode,
        k=k,
        seed=seed,
        rows=tuple(rows),
        mape_pct=float(apes.mean()),
        mae=float(errors.mean()),
        trimmed_mape_pct=float(apes[keep].mean()),
        trimmed_mae=float(errors[keep].mean()),
    )
