"""Shared domain types for the carbon footprint engine.

Everything in this module is a value type: immutable after construction,
no I/O, no hidden state. Validation failures raise ValueError at
construction time, except inventory content problems, which are reported
as data by validate_inventory so that bad inventories can still be
represented and audited.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

UNITS = ("count", "gram", "mm2", "kWh")

PRODUCT_CATEGORIES = ("desktop", "display", "laptop", "phone", "other")

FEATURE_KINDS = ("numeric", "categorical")

STAGES = ("manufacturing", "transport", "use", "eol")


class _Missing:
    """Singleton marker for an absent value. Falsy, prints as MISSING."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MISSING"

    def __bool__(self) -> bool:
        return False


MISSING = _Missing()

Schema = tuple  # ((name, kind), ...) with kind in FEATURE_KINDS


def _normalize_schema(schema: Iterable) -> Schema:
    out = tuple((str(name), str(kind)) for name, kind in schema)
    names = [n for n, _ in out]
    if len(set(names)) != len(names):
        raise ValueError("duplicate feature names in schema")
    for name, kind in out:
        if kind not in FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {kind!r} for {name!r}")
    return out


@dataclass(frozen=True)
class FeatureVector:
    """Ordered schema of (name, kind) plus the present values.

    Absent names are MISSING; values stores present entries only.
    Numeric values must be finite, categorical values are strings.
    """

    schema: Schema
    values: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        schema = _normalize_schema(self.schema)
        kinds = dict(schema)
        vals: dict[str, Any] = {}
        for name, value in dict(self.values).items():
            if value is MISSING or value is None:
                continue
            if name not in kinds:
                raise ValueError(f"value for {name!r} is not in the schema")
            if kinds[name] == "numeric":
                value = float(value)
                if not math.isfinite(value):
                    raise ValueError(f"non-finite value for {name!r}")
            else:
                value = str(value)
            vals[name] = value
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "values", vals)

    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.schema)

    def kind_of(self, name: str) -> str:
        for n, kind in self.schema:
            if n == name:
                return kind
        raise KeyError(name)

    def present(self, name: str) -> bool:
        return name in self.values

    def get(self, name: str):
        if name not in dict(self.schema):
            raise KeyError(name)
        return self.values.get(name, MISSING)

    def to_dict(self) -> dict:
        return {
            "schema": [[n, k] for n, k in self.schema],
            "values": {n: self.values.get(n) for n, _ in self.schema},
        }

    @staticmethod
    def from_dict(data: Mapping) -> "FeatureVector":
        values = {k: v for k, v in dict(data["values"]).items() if v is not None}
        return FeatureVector(tuple((n, k) for n, k in data["schema"]), values)


def completeness(v: FeatureVector) -> float:
    """Fraction of schema names with a present value."""
    if not v.schema:
        raise ValueError("degenerate schema: no features")
    return len(v.values) / len(v.schema)


@dataclass(frozen=True)
class DataAbstraction:
    """Which component classes and attributes matter for a product class."""

    product_class: str
    component_classes: tuple[str, ...]
    required_attributes: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        classes = tuple(str(c) for c in self.component_classes)
        if not classes:
            raise ValueError("component_classes must be non-empty")
        if len(set(classes)) != len(classes):
            raise ValueError("component_classes must be duplicate-free")
        required = {str(c): tuple(str(a) for a in attrs) for c, attrs in dict(self.required_attributes).items()}
        for cls in required:
            if cls not in classes:
                raise ValueError(f"required attributes for unknown class {cls!r}")
        seen: dict[str, str] = {}
        for cls, attrs in required.items():
            for attr in attrs:
                if attr in seen:
                    raise ValueError(f"attribute {attr!r} required by both {seen[attr]!r} and {cls!r}")
                seen[attr] = cls
        object.__setattr__(self, "component_classes", classes)
        object.__setattr__(self, "required_attributes", required)

    def to_dict(self) -> dict:
        return {
            "product_class": self.product_class,
            "component_classes": list(self.component_classes),
            "required_attributes": {c: list(a) for c, a in self.required_attributes.items()},
        }

    @staticmethod
    def from_dict(data: Mapping) -> "DataAbstraction":
        return DataAbstraction(
            product_class=data["product_class"],
            component_classes=tuple(data["component_classes"]),
            required_attributes={c: tuple(a) for c, a in data.get("required_attributes", {}).items()},
        )


@dataclass(frozen=True)
class InventoryEntry:
    """One line of a life cycle inventory.

    Construction is permissive about quantity, unit and class so that
    invalid inventories remain representable; validate_inventory reports
    content violations as data.
    """

    component_class: str
    description: str
    quantity: float
    unit: str
    attributes: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "quantity", float(self.quantity))
        object.__setattr__(self, "attributes", dict(self.attributes))

    def to_dict(self) -> dict:
        return {
            "component_class": self.component_class,
            "description": self.description,
            "quantity": self.quantity,
            "unit": self.unit,
            "attributes": dict(self.attributes),
        }

    @staticmethod
    def from_dict(data: Mapping) -> "InventoryEntry":
        return InventoryEntry(
            component_class=data["component_class"],
            description=data["description"],
            quantity=data["quantity"],
            unit=data["unit"],
            attributes=dict(data.get("attributes", {})),
        )


@dataclass(frozen=True)
class LifeCycleInventory:
    """A product's inventory entries plus one provenance tag per entry."""

    product: str
    da: DataAbstraction
    entries: tuple[InventoryEntry, ...]
    provenance: tuple[str, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        provenance = tuple(str(p) for p in self.provenance)
        if len(entries) != len(provenance):
            raise ValueError("provenance must have one tag per entry")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "provenance", provenance)

    def to_dict(self) -> dict:
        return {
            "product": self.product,
            "da": self.da.to_dict(),
            "entries": [e.to_dict() for e in self.entries],
            "provenance": list(self.provenance),
        }

    @staticmethod
    def from_dict(data: Mapping) -> "LifeCycleInventory":
        return LifeCycleInventory(
            product=data["product"],
            da=DataAbstraction.from_dict(data["da"]),
            entries=tuple(InventoryEntry.from_dict(e) for e in data["entries"]),
            provenance=tuple(data["provenance"]),
        )


def validate_inventory(lci: LifeCycleInventory) -> list[str]:
    """Return content violations, one message per problem. Empty means valid."""
    violations: list[str] = []
    classes = set(lci.da.component_classes)
    for i, entry in enumerate(lci.entries):
        label = f"entry {i} ({entry.component_class!r}: {entry.description!r})"
        if entry.component_class not in classes:
            violations.append(f"{label}: class not in data abstraction")
        if entry.unit not in UNITS:
            violations.append(f"{label}: unit {entry.unit!r} not in {UNITS}")
        if not math.isfinite(entry.quantity):
            violations.append(f"{label}: quantity is not finite")
        elif entry.quantity < 0:
            violations.append(f"{label}: quantity {entry.quantity} is negative")
    return violations


@dataclass(frozen=True)
class EmissionFactor:
    """kgCO2e per unit of a flow, with describable provenance features."""

    id: str
    description: str
    isic_class: str
    unit: str
    kgco2e_per_unit: float
    features: FeatureVector = field(default_factory=lambda: FeatureVector(()))

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ValueError(f"unit {self.unit!r} not in {UNITS}")
        value = float(self.kgco2e_per_unit)
        if not (math.isfinite(value) and value > 0):
            raise ValueError("kgco2e_per_unit must be finite and > 0")
        object.__setattr__(self, "kgco2e_per_unit", value)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "isic_class": self.isic_class,
            "unit": self.unit,
            "kgco2e_per_unit": self.kgco2e_per_unit,
            "features": self.features.to_dict(),
        }

    @staticmethod
    def from_dict(data: Mapping) -> "EmissionFactor":
        return EmissionFactor(
            id=data["id"],
            description=data["description"],
            isic_class=data.get("isic_class", ""),
            unit=data["unit"],
            kgco2e_per_unit=data["kgco2e_per_unit"],
            features=FeatureVector.from_dict(data["features"]) if "features" in data else FeatureVector(()),
        )


@dataclass(frozen=True)
class ProductRecord:
    """A disclosed product carbon footprint with its describable features."""

    company: str
    category: str
    name: str
    features: FeatureVector
    reported_cf_kgco2e: float
    reported_uncertainty: float | None = None
    stage_shares: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.category not in PRODUCT_CATEGORIES:
            raise ValueError(f"category {self.category!r} not in {PRODUCT_CATEGORIES}")
        cf = float(self.reported_cf_kgco2e)
        if not (math.isfinite(cf) and cf > 0):
            raise ValueError("reported_cf_kgco2e must be finite and > 0")
        object.__setattr__(self, "reported_cf_kgco2e", cf)
        if self.reported_uncertainty is not None:
            object.__setattr__(self, "reported_uncertainty", float(self.reported_uncertainty))
        if self.stage_shares is not None:
            shares = {str(k): float(v) for k, v in dict(self.stage_shares).items()}
            if set(shares) != set(STAGES):
                raise ValueError(f"stage_shares must cover exactly {STAGES}")
            total = sum(shares.values())
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"stage_shares sum to {total}, expected 1 within 1e-6")
            object.__setattr__(self, "stage_shares", shares)

    def to_dict(self) -> dict:
        return {
            "company": self.company,
            "category": self.category,
            "name": self.name,
            "features": self.features.to_dict(),
            "reported_cf_kgco2e": self.reported_cf_kgco2e,
            "reported_uncertainty": self.reported_uncertainty,
            "stage_shares": dict(self.stage_shares) if self.stage_shares is not None else None,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "ProductRecord":
        return ProductRecord(
            company=data["company"],
            category=data["category"],
            name=data["name"],
            features=FeatureVector.from_dict(data["features"]),
            reported_cf_kgco2e=data["reported_cf_kgco2e"],
            reported_uncertainty=data.get("reported_uncertainty"),
            stage_shares=data.get("stage_shares"),
        )


Z95 = 1.96


@dataclass(frozen=True)
class EstimateDistribution:
    """Weighted Gaussian estimate with neighbor provenance.

    ci95 is derived as mean +/- 1.96 std at construction, so the interval
    always brackets the mean.
    """

    mean: float
    std: float
    neighbors: tuple[tuple[str, float, float], ...]
    method_tag: str
    ci95: tuple[float, float] = field(init=False)

    def __post_init__(self):
        mean = float(self.mean)
        std = float(self.std)
        if not math.isfinite(mean):
            raise ValueError("mean must be finite")
        if not (math.isfinite(std) and std >= 0):
            raise ValueError("std must be finite and >= 0")
        neighbors = []
        for rec_id, dist, weight in self.neighbors:
            dist = float(dist)
            weight = float(weight)
            if not (math.isfinite(dist) and dist >= 0):
                raise ValueError(f"neighbor {rec_id!r} has invalid distance {dist}")
            if not (math.isfinite(weight) and weight > 0):
                raise ValueError(f"neighbor {rec_id!r} has invalid weight {weight}")
            neighbors.append((str(rec_id), dist, weight))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        object.__setattr__(self, "neighbors", tuple(neighbors))
        object.__setattr__(self, "ci95", (mean - Z95 * std, mean + Z95 * std))

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "ci95": [self.ci95[0], self.ci95[1]],
            "neighbors": [[i, d, w] for i, d, w in self.neighbors],
            "method_tag": self.method_tag,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "EstimateDistribution":
        return EstimateDistribution(
            mean=data["mean"],
            std=data["std"],
            neighbors=tuple((i, d, w) for i, d, w in data["neighbors"]),
            method_tag=data["method_tag"],
        )


@dataclass(frozen=True)
class CFBreakdown:
    """Assessed footprint total with per-entry and per-class contributions."""

    total_kgco2e: float
    per_entry: tuple[tuple[int, str, float], ...]
    per_class: Mapping[str, float]

    def __post_init__(self):
        total = float(self.total_kgco2e)
        if not (math.isfinite(total) and total >= 0):
            raise ValueError("total_kgco2e must be finite and >= 0")
        per_entry = tuple((int(i), str(ef), float(c)) for i, ef, c in self.per_entry)
        per_class = {str(k): float(v) for k, v in dict(self.per_class).items()}
        entry_sum = sum(c for _, _, c in per_entry)
        class_sum = sum(per_class.values())
        tol = 1e-9 * max(1.0, abs(total))
        if abs(entry_sum - total) > tol or abs(class_sum - total) > tol:
            raise ValueError(
                f"inconsistent breakdown: total={total}, per-entry sum={entry_sum}, per-class sum={class_sum}"
            )
        object.__setattr__(self, "total_kgco2e", total)
        object.__setattr__(self, "per_entry", per_entry)
        object.__setattr__(self, "per_class", per_class)

    def to_dict(self) -> dict:
        return {
            "total_kgco2e": self.total_kgco2e,
            "per_entry": [[i, ef, c] for i, ef, c in self.per_entry],
            "per_class": dict(self.per_class),
        }

    @staticmethod
    def from_dict(data: Mapping) -> "CFBreakdown":
        return CFBreakdown(
            total_kgco2e=data["total_kgco2e"],
            per_entry=tuple((i, ef, c) for i, ef, c in data["per_entry"]),
            per_class=dict(data["per_class"]),
        )


def to_canonical_json(data: Any) -> str:
    """Deterministic JSON: sorted keys, compact separators, no NaN."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dump_json(data: Any) -> str:
    """Human-facing JSON: sorted keys, indented, still deterministic."""
    return json.dumps(data, sort_keys=True, indent=2, allow_nan=False)
