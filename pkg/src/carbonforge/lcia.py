"""Impact assessment: match inventory entries to emission factors and sum.

Matching is semantic but guarded: an EF must share the entry's unit before
its description similarity counts, and anything below the similarity
threshold is handed to the generalizing estimator instead of being forced
onto the nearest published factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (
    CFBreakdown,
    EmissionFactor,
    EstimateDistribution,
    InventoryEntry,
    LifeCycleInventory,
    validate_inventory,
)
from .efgen import (
    MATERIAL_DOMAIN_SCHEMA,
    MaterialEntry,
    cosine_similarity,
    estimate_material_ef,
)

GENERATED = "generated"

DEFAULT_SIMILARITY_THRESHOLD = 0.6


class AssessError(ValueError):
    """Assessment failed; carries one message per unmatched entry."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one entry: an EF id, or a generate directive."""

    ef_id: str | None
    similarity: float

    @property
    def generate(self) -> bool:
        return self.ef_id is None


def match_entry(
    entry: InventoryEntry,
    db: Sequence[EmissionFactor],
    provider,
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
    allow_fallback: bool = True,
) -> MatchResult:
    """Pick the best unit-compatible EF by description similarity.

    Below-threshold best matches become generate directives when fallback
    is allowed; otherwise they are errors, as is an empty unit-compatible
    candidate set.
    """
    if not db:
        raise ValueError("emission factor database is empty")
    candidates = [ef for ef in db if ef.unit == entry.unit]
    if not candidates:
        if allow_fallback:
            return MatchResult(ef_id=None, similarity=0.0)
        raise ValueError(
            f"no unit-compatible emission factor for entry {entry.description!r} ({entry.unit})"
        )
    query_vec = provider.embed(entry.description)
    best_id = None
    best_sim = -math.inf
    for ef in sorted(candidates, key=lambda e: e.id):
        sim = cosine_similarity(query_vec, provider.embed(ef.description))
        if sim > best_sim:
            best_id = ef.id
            best_sim = sim
    if best_sim >= threshold:
        return MatchResult(ef_id=best_id, similarity=best_sim)
    if allow_fallback:
        return MatchResult(ef_id=None, similarity=best_sim)
    raise ValueError(
        f"best similarity {best_sim:.3f} for entry {entry.description!r} is below {threshold}"
    )


@dataclass(frozen=True)
class AssessOptions:
    """Knobs for assess(): matching threshold, fallback and its database."""

    provider: object
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD
    fallback: bool = True
    material_db: tuple[MaterialEntry, ...] | None = None
    k: int = 5
    mode: str = "text_only"

    def __post_init__(self):
        if self.material_db is not None:
            object.__setattr__(self, "material_db", tuple(self.material_db))


@dataclass(frozen=True)
class AssessmentResult:
    """A CFBreakdown plus propagated uncertainty and match provenance."""

    breakdown: CFBreakdown
    total_std: float
    matches: tuple[MatchResult, ...]
    generated: Mapping[int, EstimateDistribution]

    def to_dict(self) -> dict:
        return {
            "breakdown": self.breakdown.to_dict(),
            "total_std": self.total_std,
            "matches": [
                {"ef_id": m.ef_id, "similarity": m.similarity} for m in self.matches
            ],
            "generated": {str(i): e.to_dict() for i, e in self.generated.items()},
        }


def _query_entry_for(entry: InventoryEntry, index: int, provider) -> MaterialEntry | None:
    """Search coordinates for a generation query, or None if the entry
    offers neither embeddable text nor domain attributes."""
    from .core import FeatureVector

    values = {
        name: entry.attributes[name]
        for name, _ in MATERIAL_DOMAIN_SCHEMA
        if name in entry.attributes
    }
    ef = EmissionFactor(
        id=f"query:{index}",
        description=entry.description,
        isic_class="",
        unit=entry.unit,
        kgco2e_per_unit=1.0,  # placeholder; targets come from the database
        features=FeatureVector(MATERIAL_DOMAIN_SCHEMA, values),
    )
    try:
        return MaterialEntry.from_ef(ef, provider=provider)
    except ValueError:
        return None


def assess(
    lci: LifeCycleInventory,
    db: Sequence[EmissionFactor],
    options: AssessOptions,
) -> AssessmentResult:
    """Cradle-to-gate total: sum of quantity x kgCO2e per unit over entries.

    Generated EFs contribute their estimate's mean and carry its std into
    the total as independent variance. Entries that can be neither matched
    nor generated raise a single AssessError naming all of them.
    """
    violations = validate_inventory(lci)
    if violations:
        raise AssessError([f"invalid inventory: {v}" for v in violations])
    by_id = {ef.id: ef for ef in db}
    provider = options.provider
    per_entry: list[tuple[int, str, float]] = []
    matches: list[MatchResult] = []
    generated: dict[int, EstimateDistribution] = {}
    problems: list[str] = []
    variance = 0.0
    for i, entry in enumerate(lci.entries):
        try:
            match = match_entry(
                entry, db, provider, threshold=options.threshold, allow_fallback=options.fallback
            )
        except ValueError as exc:
            problems.append(str(exc))
            continue
        matches.append(match)
        if not match.generate:
            contribution = entry.quantity * by_id[match.ef_id].kgco2e_per_unit
            per_entry.append((i, match.ef_id, contribution))
            continue
        if options.material_db is None:
            problems.append(f"entry {entry.description!r} needs generation but no material db given")
            continue
        pool = [m for m in options.material_db if m.ef.unit == entry.unit]
        if not pool:
            problems.append(
                f"entry {entry.description!r} ({entry.unit}) has no unit-compatible material analogues"
            )
            continue
        query = _query_entry_for(entry, i, provider)
        if query is None:
            problems.append(f"entry {entry.description!r} has nothing to generate an EF from")
            continue
        mode = options.mode if query.domain_features.values else "text_only"
        est = estimate_material_ef(pool, query, k=min(options.k, len(pool)), mode=mode)
        generated[i] = est
        contribution = entry.quantity * est.mean
        variance += (entry.quantity * est.std) ** 2
        per_entry.append((i, GENERATED, contribution))
    if problems:
        raise AssessError(problems)
    total = 0.0
    per_class: dict[str, float] = {}
    for i, _, contribution in per_entry:
        total += contribution
        cls = lci.entries[i].component_class
        per_class[cls] = per_class.get(cls, 0.0) + contribution
    breakdown = CFBreakdown(total_kgco2e=total, per_entry=tuple(per_entry), per_class=per_class)
    return AssessmentResult(
        breakdown=breakdown,
        total_std=math.sqrt(variance),
        matches=tuple(matches),
        generated=generated,
    )


@dataclass(frozen=True)
class DeviationReport:
    """Estimated vs reported footprint for one product."""

    product: str
    reported_kgco2e: float
    estimated_kgco2e: float
    ape_pct: float
    signed_error_kgco2e: float
    per_class_ranked: tuple[tuple[str, float], ...]

    def to_dict(self) -> dict:
        return {
            "product": self.product,
            "reported_kgco2e": self.reported_kgco2e,
            "estimated_kgco2e": self.estimated_kgco2e,
            "ape_pct": self.ape_pct,
            "signed_error_kgco2e": self.signed_error_kgco2e,
            "per_class_ranked": [[c, v] for c, v in self.per_class_ranked],
        }


def compare_to_reported(
    breakdown: CFBreakdown, reported_kgco2e: float, product: str = ""
) -> DeviationReport:
    """Absolute percentage error and signed gap against a disclosed value."""
    reported = float(reported_kgco2e)
    if not (math.isfinite(reported) and reported > 0):
        raise ValueError("reported footprint must be finite and > 0")
    estimated = breakdown.total_kgco2e
    ranked = tuple(sorted(breakdown.per_class.items(), key=lambda kv: (-kv[1], kv[0])))
    return DeviationReport(
        product=product,
        reported_kgco2e=reported,
        estimated_kgco2e=estimated,
        ape_pct=abs(estimated - reported) / reported * 100.0,
        signed_error_kgco2e=estimated - reported,
        per_class_ranked=ranked,
    )


def rank_fleet(reports: Sequence[DeviationReport]) -> list[DeviationReport]:
    """Order products by how far off their estimate is, worst first."""
    return sorted(reports, key=lambda r: (-r.ape_pct, r.product))


def deviation_csv_rows(reports: Sequence[DeviationReport]) -> list[list]:
    header = ["product", "reported_kgco2e", "estimated_kgco2e", "ape_pct", "signed_error_kgco2e"]
    return [header] + [
        [r.product, r.reported_kgco2e, r.estimated_kgco2e, r.ape_pct, r.signed_error_kgco2e]
        for r in reports
    ]


def render_breakdown_table(breakdown: CFBreakdown, lci: LifeCycleInventory | None = None) -> str:
    """Plain-text contribution table for human reading."""
    lines = [f"{'entry':>5}  {'factor':<24} {'kgCO2e':>12}"]
    for i, ef_id, contribution in breakdown.per_entry:
        label = ef_id
        if lci is not None:
            label = f"{ef_id} ({lci.entries[i].component_class})"
        lines.append(f"{i:>5}  {label:<24} {contribution:>12.4f}")
    lines.append(f"{'':>5}  {'TOTAL':<24} {breakdown.total_kgco2e:>12.4f}")
    return "\n".join(lines)
