"""Parsers and normalizers for disclosed footprints, grid mixes and EF databases.

Row-level problems are reported next to the parsed records, never silently
dropped and never fatal; a malformed header is fatal because nothing after
it can be trusted.
"""

from __future__ import annotations

import base64
import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import (
    MISSING,
    FeatureVector,
    EmissionFactor,
    ProductRecord,
    STAGES,
)

# Default describable-attribute schema for consumer electronics. Disclosed
# footprint tables rarely agree on columns, so ingestion normalizes to this
# fixed 8-attribute schema; absent cells stay MISSING.
PRODUCT_FEATURE_SCHEMA = (
    ("mass_kg", "numeric"),
    ("screen_size_in", "numeric"),
    ("memory_gb", "numeric"),
    ("storage_gb", "numeric"),
    ("battery_capacity_wh", "numeric"),
    ("technology_node_nm", "numeric"),
    ("display_type", "categorical"),
    ("chassis_material", "categorical"),
)

STAGE_COLUMNS = tuple(f"stage_{s}" for s in STAGES)

PCF_COLUMNS = (
    "company",
    "category",
    "name",
    "reported_cf_kgco2e",
    "reported_uncertainty",
) + STAGE_COLUMNS + tuple(name for name, _ in PRODUCT_FEATURE_SCHEMA)

# Electricity source vocabulary for grid mixes, in canonical order.
GRID_SOURCES = (
    "nuclear",
    "wind",
    "hydro",
    "solar",
    "coal",
    "gas",
    "oil",
    "biomass",
    "geothermal",
    "battery_discharge",
    "unknown",
)

GRID_FEATURE_SCHEMA = tuple((s, "numeric") for s in GRID_SOURCES)

GRID_COLUMNS = ("region", "date", "carbon_intensity_g_per_kwh") + GRID_SOURCES


class SchemaError(ValueError):
    """The input header does not match the expected column layout."""


@dataclass(frozen=True)
class GridRecord:
    """One region-day of grid carbon intensity plus the generation mix."""

    region: str
    date: str
    carbon_intensity_g_per_kwh: float
    source_shares: FeatureVector

    def __post_init__(self):
        import datetime

        datetime.date.fromisoformat(self.date)
        ci = float(self.carbon_intensity_g_per_kwh)
        if not (math.isfinite(ci) and ci > 0):
            raise ValueError("carbon_intensity_g_per_kwh must be finite and > 0")
        if self.source_shares.schema != GRID_FEATURE_SCHEMA:
            raise ValueError("source_shares must use the grid source schema")
        shares = self.source_shares.values
        for name, value in shares.items():
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"share {name!r}={value} outside [0, 1]")
        if len(shares) == len(GRID_SOURCES):
            total = sum(shares.values())
            if abs(total - 1.0) > 1e-3:
                raise ValueError(f"fully observed shares sum to {total}, expected 1 within 1e-3")
        object.__setattr__(self, "carbon_intensity_g_per_kwh", ci)

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "date": self.date,
            "carbon_intensity_g_per_kwh": self.carbon_intensity_g_per_kwh,
            "source_shares": self.source_shares.to_dict(),
        }

    @staticmethod
    def from_dict(data: Mapping) -> "GridRecord":
        return GridRecord(
            region=data["region"],
            date=data["date"],
            carbon_intensity_g_per_kwh=data["carbon_intensity_g_per_kwh"],
            source_shares=FeatureVector.from_dict(data["source_shares"]),
        )


@dataclass(frozen=True)
class RowIssue:
    """One rejected input row: its 1-based position and the reason."""

    row: int
    reason: str

    def to_dict(self) -> dict:
        return {"row": self.row, "reason": self.reason}


@dataclass(frozen=True)
class ParseResult:
    records: tuple
    rejected: tuple[RowIssue, ...]

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "rejected": [i.to_dict() for i in self.rejected],
        }


def _open_text(source) -> io.TextIOBase:
    if isinstance(source, (str, Path)):
        return open(source, "r", newline="", encoding="utf-8")
    return source


def _check_header(header: Sequence[str], expected: Sequence[str]) -> None:
    missing = [c for c in expected if c not in header]
    if missing:
        raise SchemaError(f"missing column {missing[0]!r}")
    if tuple(header) != tuple(expected):
        raise SchemaError(f"columns must be exactly {list(expected)}, got {list(header)}")


def parse_pcf_records(source) -> ParseResult:
    """Parse a disclosed-footprint CSV into ProductRecords.

    Empty cells become MISSING features. Rows that cannot be parsed are
    reported with their 1-based data row number.
    """
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty input: no header row")
        _check_header(header, PCF_COLUMNS)
        records: list[ProductRecord] = []
        rejected: list[RowIssue] = []
        for row_number, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                records.append(_pcf_row_to_record(row))
            except (ValueError, IndexError) as exc:
                rejected.append(RowIssue(row_number, str(exc)))
        return ParseResult(tuple(records), tuple(rejected))
    finally:
        if isinstance(source, (str, Path)):
            fh.close()


def _pcf_row_to_record(row: Sequence[str]) -> ProductRecord:
    if len(row) != len(PCF_COLUMNS):
        raise ValueError(f"expected {len(PCF_COLUMNS)} cells, got {len(row)}")
    cells = dict(zip(PCF_COLUMNS, (c.strip() for c in row)))
    uncertainty = float(cells["reported_uncertainty"]) if cells["reported_uncertainty"] else None
    stage_cells = [cells[c] for c in STAGE_COLUMNS]
    if all(not c for c in stage_cells):
        stage_shares = None
    elif all(c for c in stage_cells):
        stage_shares = {s: float(cells[f"stage_{s}"]) for s in STAGES}
    else:
        raise ValueError("stage shares must be all present or all absent")
    values: dict[str, object] = {}
    for name, kind in PRODUCT_FEATURE_SCHEMA:
        cell = cells[name]
        if not cell:
            continue
        values[name] = float(cell) if kind == "numeric" else cell
    return ProductRecord(
        company=cells["company"],
        category=cells["category"],
        name=cells["name"],
        features=FeatureVector(PRODUCT_FEATURE_SCHEMA, values),
        reported_cf_kgco2e=float(cells["reported_cf_kgco2e"]) if cells["reported_cf_kgco2e"] else float("nan"),
        reported_uncertainty=uncertainty,
        stage_shares=stage_shares,
    )


def write_pcf_csv(records: Iterable[ProductRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PCF_COLUMNS)
        for rec in records:
            stage = rec.stage_shares or {}
            row = [
                rec.company,
                rec.category,
                rec.name,
                repr(rec.reported_cf_kgco2e),
                repr(rec.reported_uncertainty) if rec.reported_uncertainty is not None else "",
            ]
            row += [repr(stage[s]) if stage else "" for s in STAGES]
            for name, kind in PRODUCT_FEATURE_SCHEMA:
                value = rec.features.get(name)
                if value is MISSING:
                    row.append("")
                else:
                    row.append(repr(value) if kind == "numeric" else str(value))
            writer.writerow(row)


def dedup_similar(records: Sequence[ProductRecord]) -> tuple[list[ProductRecord], list[ProductRecord]]:
    """Collapse records with identical feature vectors to one representative.

    All records must share one category. Within a group the
    lexicographically smallest name is kept; ties on name keep the record
    seen first. Returns (kept, excluded), both in input order.
    """
    categories = {r.category for r in records}
    if len(categories) > 1:
        raise ValueError(f"records span multiple categories: {sorted(categories)}")
    groups: dict[tuple, int] = {}
    for i, rec in enumerate(records):
        key = tuple(
            (name, rec.features.values.get(name, MISSING)) for name, _ in rec.features.schema
        )
        j = groups.get(key)
        if j is None or rec.name < records[j].name:
            groups[key] = i
    keep = set(groups.values())
    kept = [r for i, r in enumerate(records) if i in keep]
    excluded = [r for i, r in enumerate(records) if i not in keep]
    return kept, excluded


def parse_grid_records(source) -> ParseResult:
    """Parse a daily grid-mix CSV into GridRecords, reporting bad rows."""
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty input: no header row")
        _check_header(header, GRID_COLUMNS)
        records: list[GridRecord] = []
        rejected: list[RowIssue] = []
        for row_number, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                records.append(_grid_row_to_record(row))
            except (ValueError, IndexError) as exc:
                rejected.append(RowIssue(row_number, str(exc)))
        return ParseResult(tuple(records), tuple(rejected))
    finally:
        if isinstance(source, (str, Path)):
            fh.close()


def _grid_row_to_record(row: Sequence[str]) -> GridRecord:
    if len(row) != len(GRID_COLUMNS):
        raise ValueError(f"expected {len(GRID_COLUMNS)} cells, got {len(row)}")
    cells = dict(zip(GRID_COLUMNS, (c.strip() for c in row)))
    values = {s: float(cells[s]) for s in GRID_SOURCES if cells[s]}
    return GridRecord(
        region=cells["region"],
        date=cells["date"],
        carbon_intensity_g_per_kwh=float(cells["carbon_intensity_g_per_kwh"]),
        source_shares=FeatureVector(GRID_FEATURE_SCHEMA, values),
    )


def write_grid_csv(records: Iterable[GridRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(GRID_COLUMNS)
        for rec in records:
            row = [rec.region, rec.date, repr(rec.carbon_intensity_g_per_kwh)]
            for s in GRID_SOURCES:
                value = rec.source_shares.get(s)
                row.append("" if value is MISSING else repr(value))
            writer.writerow(row)


def annual_mean_intensity(records: Sequence[GridRecord]) -> dict[str, float]:
    """Arithmetic mean of daily intensities per region, keyed by region."""
    if not records:
        raise ValueError("no grid records to average")
    by_region: dict[str, list[float]] = {}
    for rec in records:
        by_region.setdefault(rec.region, []).append(rec.carbon_intensity_g_per_kwh)
    return {region: statistics.fmean(vals) for region, vals in sorted(by_region.items())}


def parse_ef_database(source) -> ParseResult:
    """Parse a JSON-lines emission factor database; bad lines are reported."""
    fh = _open_text(source)
    try:
        factors: list[EmissionFactor] = []
        rejected: list[RowIssue] = []
        seen_ids: set[str] = set()
        for line_number, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ef = EmissionFactor.from_dict(json.loads(line))
                if ef.id in seen_ids:
                    raise ValueError(f"duplicate emission factor id {ef.id!r}")
                seen_ids.add(ef.id)
                factors.append(ef)
            except (ValueError, KeyError, TypeError) as exc:
                rejected.append(RowIssue(line_number, str(exc)))
        return ParseResult(tuple(factors), tuple(rejected))
    finally:
        if isinstance(source, (str, Path)):
            fh.close()


def write_ef_database(factors: Iterable[EmissionFactor], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ef in factors:
            fh.write(json.dumps(ef.to_dict(), sort_keys=True) + "\n")


DOC_MODALITIES = ("text", "image", "pdf-extract")


@dataclass(frozen=True)
class DocumentFixture:
    """A canned retrievable document: text or image payload plus query keys."""

    doc_id: str
    query_keys: tuple[str, ...]
    modality: str
    payload: str | bytes

    def __post_init__(self):
        if self.modality not in DOC_MODALITIES:
            raise ValueError(f"modality {self.modality!r} not in {DOC_MODALITIES}")
        if self.modality == "image":
            if not isinstance(self.payload, (bytes, bytearray)):
                raise ValueError("image payload must be bytes")
            object.__setattr__(self, "payload", bytes(self.payload))
        else:
            if not isinstance(self.payload, str):
                raise ValueError("text payload must be a string")
        object.__setattr__(self, "query_keys", tuple(str(k) for k in self.query_keys))

    def to_dict(self) -> dict:
        if isinstance(self.payload, bytes):
            payload = base64.b64encode(self.payload).decode("ascii")
            encoding = "base64"
        else:
            payload = self.payload
            encoding = "utf-8"
        return {
            "doc_id": self.doc_id,
            "query_keys": list(self.query_keys),
            "modality": self.modality,
            "payload": payload,
            "payload_encoding": encoding,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "DocumentFixture":
        payload = data["payload"]
        if data.get("payload_encoding") == "base64":
            payload = base64.b64decode(payload)
        return DocumentFixture(
            doc_id=data["doc_id"],
            query_keys=tuple(data["query_keys"]),
            modality=data["modality"],
            payload=payload,
        )


@dataclass(frozen=True)
class FixtureCorpus:
    """All documents of a fixture corpus plus the query-key index."""

    documents: Mapping[str, DocumentFixture]
    index: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        docs = dict(self.documents)
        index = {str(k): tuple(v) for k, v in dict(self.index).items()}
        for key, ids in index.items():
            for doc_id in ids:
                if doc_id not in docs:
                    raise ValueError(f"index key {key!r} references unknown document {doc_id!r}")
        object.__setattr__(self, "documents", docs)
        object.__setattr__(self, "index", index)


def load_corpus(directory) -> FixtureCorpus:
    """Load a corpus directory: one JSON file per document plus index.json."""
    directory = Path(directory)
    index_path = directory / "index.json"
    if not index_path.exists():
        raise ValueError(f"corpus index not found: {index_path}")
    with open(index_path, "r", encoding="utf-8") as fh:
        index = json.load(fh)
    documents: dict[str, DocumentFixture] = {}
    for path in sorted(directory.glob("*.json")):
        if path.name == "index.json":
            continue
        with open(path, "r", encoding="utf-8") as fh:
            doc = DocumentFixture.from_dict(json.load(fh))
        documents[doc.doc_id] = doc
    return FixtureCorpus(documents, {k: tuple(v) for k, v in index.items()})


def save_corpus(corpus: FixtureCorpus, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for doc_id, doc in sorted(corpus.documents.items()):
        with open(directory / f"{doc_id}.json", "w", encoding="utf-8") as fh:
            json.dump(doc.to_dict(), fh, sort_keys=True, indent=2)
    with open(directory / "index.json", "w", encoding="utf-8") as fh:
        json.dump({k: list(v) for k, v in sorted(corpus.index.items())}, fh, sort_keys=True, indent=2)
