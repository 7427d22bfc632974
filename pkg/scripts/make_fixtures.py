#!/usr/bin/env python3
"""Regenerate everything under fixtures/ deterministically.

Each section ends with self-checks asserting the properties the test
suite relies on (parse counts, convergence, metric orderings, exact
dimensions). If an assert fires the fixtures are wrong, not the tests.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import cv2
import numpy as np

from carbonforge import efgen, harness, ingestion, knn, lcia
from carbonforge.agent import AgentConfig, Budget, FixtureBackend, SuiteCase, run_selfplay
from carbonforge.core import EmissionFactor, FeatureVector, ProductRecord, dump_json
from carbonforge.ingestion import (
    GRID_FEATURE_SCHEMA,
    PRODUCT_FEATURE_SCHEMA,
    DocumentFixture,
    FixtureCorpus,
)

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def info(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# disclosed footprints


def make_pcf_demo() -> None:
    rng = np.random.default_rng(11)
    records = []
    names = [
        "argon 13", "boron 14", "cirrus 15", "dune 13x", "ember 14s", "flint 16",
        "garnet 15e", "halite 14", "iris 17", "jasper 15t", "karst 16x",
    ]
    for i, name in enumerate(names):
        mass = round(float(rng.uniform(1.1, 2.6)), 3)
        screen = round(float(rng.uniform(13.0, 16.5)), 1)
        memory = float(rng.choice([8, 16, 32]))
        storage = float(rng.choice([256, 512, 1024]))
        battery = round(float(rng.uniform(45.0, 90.0)), 1)
        node = float(rng.choice([5, 7, 10]))
        display = str(rng.choice(["lcd", "oled"]))
        chassis = str(rng.choice(["aluminum", "plastic"]))
        values = {
            "mass_kg": mass,
            "screen_size_in": screen,
            "memory_gb": memory,
            "storage_gb": storage,
            "battery_capacity_wh": battery,
            "technology_node_nm": node,
            "display_type": display,
            "chassis_material": chassis,
        }
        # a couple of sparse rows: drop two features
        if i in (3, 8):
            values.pop("technology_node_nm")
            values.pop("chassis_material")
        cf = round(200.0 + 60.0 * mass + 5.0 * screen + 0.5 * battery + float(rng.normal(0, 12)), 2)
        records.append(
            ProductRecord(
                company="Northlight",
                category="laptop",
                name=name,
                features=FeatureVector(PRODUCT_FEATURE_SCHEMA, values),
                reported_cf_kgco2e=cf,
                reported_uncertainty=round(cf * 0.12, 2),
                stage_shares={"manufacturing": 0.78, "transport": 0.05, "use": 0.15, "eol": 0.02},
            )
        )
    path = FIXTURES / "pcf_demo.csv"
    ingestion.write_pcf_csv(records, path)
    # inject one malformed row (no reported footprint) mid-file
    lines = path.read_text(encoding="utf-8").splitlines()
    bad = "Northlight,laptop,lapse 00,,,,,,,1.4,14.0,16,512,60.0,7,lcd,aluminum"
    lines.insert(7, bad)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    result = ingestion.parse_pcf_records(path)
    assert len(result.records) == 11, len(result.records)
    assert len(result.rejected) == 1 and result.rejected[0].row == 7, result.rejected
    sparse = [r for r in result.records if r.name in ("dune 13x", "iris 17")]
    assert len(sparse) == 2 and all(len(r.features.values) == 6 for r in sparse)
    info(f"pcf_demo.csv: {len(result.records)} records, {len(result.rejected)} rejected")

    # demo index + query for the estimate CLI path
    labeled = knn.records_from_products(result.records)
    index = knn.build_index(labeled, "laptop")
    knn.save_index(index, FIXTURES / "demo_index.json")
    query = FeatureVector(
        PRODUCT_FEATURE_SCHEMA,
        {"mass_kg": 1.7, "screen_size_in": 14.5, "memory_gb": 16.0, "battery_capacity_wh": 62.0,
         "display_type": "oled"},
    )
    (FIXTURES / "demo_query.json").write_text(dump_json(query.to_dict()) + "\n", encoding="utf-8")
    est = knn.estimate(knn.load_index(FIXTURES / "demo_index.json"), query, k=5)
    assert est.mean > 0 and len(est.neighbors) == 5
    info(f"demo_index.json + demo_query.json: estimate {est.mean:.1f} kgCO2e")


def make_pcf_dedup() -> None:
    rng = np.random.default_rng(23)
    records = []
    base_specs = []
    for i in range(17):
        values = {
            "mass_kg": round(float(rng.uniform(1.0, 2.5)), 3),
            "screen_size_in": round(float(rng.uniform(13.0, 16.0)), 1),
            "memory_gb": float(rng.choice([8, 16, 32])),
            "storage_gb": float(rng.choice([256, 512])),
            "battery_capacity_wh": round(float(rng.uniform(45.0, 80.0)), 1),
            "technology_node_nm": float(rng.choice([5, 7])),
            "display_type": str(rng.choice(["lcd", "oled"])),
            "chassis_material": str(rng.choice(["aluminum", "plastic"])),
        }
        base_specs.append(values)
        records.append(
            ProductRecord(
                company="Meridian",
                category="laptop",
                name=f"model {chr(97 + i)}",
                features=FeatureVector(PRODUCT_FEATURE_SCHEMA, values),
                reported_cf_kgco2e=round(250.0 + 40.0 * values["mass_kg"] + float(rng.normal(0, 10)), 2),
            )
        )
    # three rebadges: identical features under a different name
    for j, src in enumerate((2, 5, 11)):
        records.append(
            ProductRecord(
                company="Meridian",
                category="laptop",
                name=f"model {chr(97 + src)} refresh {j}",
                features=FeatureVector(PRODUCT_FEATURE_SCHEMA, dict(base_specs[src])),
                reported_cf_kgco2e=records[src].reported_cf_kgco2e,
            )
        )
    order = rng.permutation(len(records))
    shuffled = [records[int(i)] for i in order]
    path = FIXTURES / "pcf_dedup.csv"
    ingestion.write_pcf_csv(shuffled, path)

    parsed = ingestion.parse_pcf_records(path)
    assert len(parsed.records) == 20
    kept, excluded = ingestion.dedup_similar(parsed.records)
    assert len(kept) == 17 and len(excluded) == 3, (len(kept), len(excluded))
    # the representative of each rebadge pair is the shorter original name
    kept_names = {r.name for r in kept}
    for src in (2, 5, 11):
        assert f"model {chr(97 + src)}" in kept_names
    info(f"pcf_dedup.csv: 20 rows -> {len(kept)} kept, {len(excluded)} rebadges dropped")


def make_grid_daily() -> None:
    records = harness.synthetic_grid_world(n_regions=348, n_days=4, seed=42)
    # one region reports a partial mix on its first day: three shares unreported
    patched = []
    for rec in records:
        if rec.region == "R007" and rec.date == "2024-01-01":
            values = dict(rec.source_shares.values)
            for gone in ("oil", "geothermal", "battery_discharge"):
                values.pop(gone)
            rec = ingestion.GridRecord(
                region=rec.region,
                date=rec.date,
                carbon_intensity_g_per_kwh=rec.carbon_intensity_g_per_kwh,
                source_shares=FeatureVector(GRID_FEATURE_SCHEMA, values),
            )
        patched.append(rec)
    path = FIXTURES / "grid_daily.csv"
    ingestion.write_grid_csv(patched, path)

    parsed = ingestion.parse_grid_records(path)
    assert len(parsed.records) == 348 * 4 and not parsed.rejected
    partial = [
        r for r in parsed.records if r.region == "R007" and r.date == "2024-01-01"
    ]
    assert len(partial) == 1 and len(partial[0].source_shares.values) == 8
    means = ingestion.annual_mean_intensity(parsed.records)
    assert len(means) == 348
    info(f"grid_daily.csv: {len(parsed.records)} region-days, one partial mix row")


# ---------------------------------------------------------------------------
# emission factors

EF_SPECS = [
    ("ef-pcb-area", "printed circuit board area", "C2610", "mm2", 6.0e-4),
    ("ef-ic-ap", "application processor integrated circuit", "C2610", "count", 8.0),
    ("ef-ic-mem", "memory integrated circuit", "C2610", "count", 3.5),
    ("ef-ic-pmic", "power management integrated circuit", "C2610", "count", 0.9),
    ("ef-ic-gpu", "graphics processor integrated circuit", "C2610", "count", 11.0),
    ("ef-ic-chipset", "chipset controller integrated circuit", "C2610", "count", 2.2),
    ("ef-ic-driver", "display driver integrated circuit", "C2610", "count", 1.6),
    ("ef-sens-img", "image sensor module", "C2670", "count", 1.8),
    ("ef-sens-imu", "inertial sensor module", "C2651", "count", 0.35),
    ("ef-sens-hr", "heart rate sensor module", "C2660", "count", 0.4),
    ("ef-sens-als", "ambient light sensor module", "C2670", "count", 0.2),
    ("ef-sens-thermal", "thermal sensor module", "C2651", "count", 0.15),
    ("ef-passive", "chip passive component", "C2610", "count", 0.004),
    ("ef-mech-alu", "aluminum frame housing", "C2431", "gram", 0.011),
    ("ef-mech-steel", "steel bracket housing", "C2410", "gram", 0.002),
    ("ef-mech-plastic", "plastic chassis housing", "C2220", "gram", 0.0035),
    ("ef-battery", "lithium ion battery pack", "C2720", "count", 9.0),
    ("ef-disp-amoled", "amoled display module", "C2640", "count", 30.0),
    ("ef-disp-oled", "oled display module", "C2640", "count", 28.0),
    ("ef-disp-lcd", "lcd display module", "C2640", "count", 22.0),
    ("ef-energy", "electricity grid consumption", "D3510", "kWh", 0.4),
]


def make_efdb() -> list[EmissionFactor]:
    factors = [
        EmissionFactor(id=i, description=d, isic_class=c, unit=u, kgco2e_per_unit=v)
        for i, d, c, u, v in EF_SPECS
    ]
    path = FIXTURES / "efdb_fixture.jsonl"
    ingestion.write_ef_database(factors, path)
    parsed = ingestion.parse_ef_database(path)
    assert len(parsed.records) == len(EF_SPECS) and not parsed.rejected
    info(f"efdb_fixture.jsonl: {len(factors)} factors")
    return factors


# ---------------------------------------------------------------------------
# material database

_FAMILIES = {
    # name -> (desc suffix, elemental_category, phase, density range, melt range, base kg/kg)
    "ferrous": ("steel alloy metal", "ferrous", "solid", (7600, 7950), (1650, 1850), 1.9),
    "nonferrous": ("nonferrous metal alloy", "nonferrous", "solid", (2600, 8900), (880, 1400), 7.5),
    "polymer": ("polymer resin compound", "polymer", "solid", (900, 1500), (400, 560), 3.2),
    "ceramic": ("technical ceramic body", "ceramic", "crystalline", (2800, 4000), (1950, 2400), 6.0),
    "glass": ("silicate glass stock", "glass", "amorphous", (2200, 2600), (1350, 1700), 1.1),
    "composite": ("fiber composite laminate", "composite", "layered", (1450, 2050), (580, 820), 12.0),
}

_VARIANT_WORDS = [
    "annealed", "cold rolled", "hot pressed", "extruded", "sintered", "cast",
    "forged", "tempered", "laminated", "calendered",
]


def _material_ef_per_gram(family: str, density: float, melt: float) -> float:
    _, _, _, d_range, m_range, base = _FAMILIES[family]
    d_mid = (d_range[0] + d_range[1]) / 2
    m_mid = (m_range[0] + m_range[1]) / 2
    return (base / 1000.0) * (density / d_mid) ** 0.8 * math.exp(0.5 * (melt - m_mid) / 1000.0)


def make_materials() -> list[efgen.MaterialEntry]:
    provider = efgen.HashingEmbedder()
    rng = np.random.default_rng(31)
    entries: list[efgen.MaterialEntry] = []
    mat_no = 0
    for family, (suffix, category, phase, d_range, m_range, _) in _FAMILIES.items():
        descs: list[str] = []
        # five twin pairs: same trade name, different physical spec
        for word in _VARIANT_WORDS[:5]:
            descs += [f"{word} {suffix}"] * 2
        # five uniquely named grades
        for word in _VARIANT_WORDS[5:]:
            descs.append(f"{word} {suffix}")
        for desc in descs:
            density = round(float(rng.uniform(*d_range)), 1)
            melt = round(float(rng.uniform(*m_range)), 1)
            ef_value = _material_ef_per_gram(family, density, melt)
            ef = EmissionFactor(
                id=f"mat-{mat_no:03d}",
                description=desc,
                isic_class="C2399",
                unit="gram",
                kgco2e_per_unit=ef_value,
                features=FeatureVector(
                    efgen.MATERIAL_DOMAIN_SCHEMA,
                    {
                        "melting_point_K": melt,
                        "phase_at_stp": phase,
                        "elemental_category": category,
                        "density_kg_m3": density,
                    },
                ),
            )
            entries.append(efgen.MaterialEntry.from_ef(ef, provider))
            mat_no += 1
    assert len(entries) == 90
    path = FIXTURES / "materials_fixture.jsonl"
    efgen.save_material_db(entries, path)
    loaded = efgen.load_material_db(path)
    assert len(loaded) == 90

    # leave-one-out: physical descriptors must beat text alone, reproducibly
    def loo_mape(mode: str) -> float:
        errors = []
        for entry in loaded:
            est = efgen.estimate_material_ef(
                loaded, entry, k=5, mode=mode, mask_ids={entry.ef.id}
            )
            errors.append(abs(est.mean - entry.ef.kgco2e_per_unit) / entry.ef.kgco2e_per_unit)
        return 100.0 * sum(errors) / len(errors)

    text_mape = loo_mape("text_only")
    domain_mape = loo_mape("text_plus_domain")
    assert domain_mape + 2.0 < text_mape, (domain_mape, text_mape)
    assert abs(loo_mape("text_plus_domain") - domain_mape) == 0.0
    info(
        f"materials_fixture.jsonl: 90 entries, LOO MAPE text={text_mape:.2f}% "
        f"domain={domain_mape:.2f}%"
    )
    return loaded


# ---------------------------------------------------------------------------
# agent corpus and benchmark suite

# (product query, kind). Brand tokens are unique so retrieval cannot leak
# across products.
SUITE_PRODUCTS = [
    ("Aurora Phone 12", "phone"),
    ("Zenith Phone 8", "phone"),
    ("Cobalt Phone 5G", "phone"),
    ("Borealis Laptop 15", "laptop"),
    ("Drift Laptop Air", "laptop"),
    ("Granite Laptop Pro", "laptop"),
    ("Tundra Laptop 14", "laptop"),
    ("Lumen Tablet 11", "tablet"),
    ("Vertex Tablet Mini", "tablet"),
    ("Pulse Watch 2", "watch"),
    ("Stride Watch Active", "watch"),
    ("Prism Monitor 27", "monitor"),
    ("Vista Monitor 32", "monitor"),
    ("Falcon Monitor UW", "monitor"),
    ("Keystone Z790 Motherboard", "motherboard"),
    ("Summit B550 Mainboard", "motherboard"),
    ("Ridge X570 Motherboard", "motherboard"),
    ("Nimbus GPU 7", "gpu"),
    ("Ember Graphics 9", "gpu"),
    ("Quarry GPU Max", "gpu"),
]


def _entry_line(cls: str, desc: str, qty, unit: str, attrs: dict | None = None) -> str:
    line = f"entry: class={cls}; desc={desc}; qty={qty:g}; unit={unit}"
    for name, value in (attrs or {}).items():
        line += f"; attr.{name}={value}"
    return line


def _attr_line(cls: str, name: str, value) -> str:
    return f"attr: class={cls}; name={name}; value={value}"


def _product_docs(query: str, kind: str, rng: np.random.Generator) -> list[DocumentFixture]:
    lp = query.lower()
    slug = lp.replace(" ", "-")
    docs: list[DocumentFixture] = []

    def doc(part: str, keys: list[str], prose: str, lines: list[str]) -> None:
        payload = prose + "\n" + "\n".join(lines) + "\n"
        docs.append(DocumentFixture(f"{slug}-{part}", tuple(keys), "text", payload))

    pcb_area = {
        "phone": (5500, 8200), "laptop": (18000, 27000), "tablet": (9000, 13000),
        "watch": (1100, 1700), "monitor": (10000, 15000),
        "motherboard": (48000, 74000), "gpu": (20000, 26000),
    }[kind]
    area = int(round(float(rng.uniform(*pcb_area)), -1))
    doc("pcb", [f"{lp} pcb"], f"Main board survey for the {query}.",
        [_entry_line("PCB", "printed circuit board area", area, "mm2")])

    ic_lines = []
    if kind in ("phone", "laptop", "tablet", "watch"):
        node = int(rng.choice([3, 4, 5] if kind == "phone" else [4, 5, 7]))
        ic_lines.append(_entry_line("IC", "application processor integrated circuit", 1, "count",
                                    {"technology_node_nm": node}))
        if kind != "watch":
            ic_lines.append(_entry_line("IC", "memory integrated circuit",
                                        int(rng.integers(2, 5)), "count"))
    elif kind == "monitor":
        ic_lines.append(_entry_line("IC", "display driver integrated circuit",
                                    int(rng.integers(1, 3)), "count"))
    elif kind == "motherboard":
        ic_lines.append(_entry_line("IC", "chipset controller integrated circuit", 1, "count"))
    else:  # gpu
        ic_lines.append(_entry_line("IC", "graphics processor integrated circuit", 1, "count"))
        ic_lines.append(_entry_line("IC", "memory integrated circuit", 8, "count"))
    ic_lines.append(_entry_line("IC", "power management integrated circuit",
                                int(rng.integers(1, 6)), "count"))
    doc("ic", [f"{lp} ic"], f"Silicon content notes for the {query}.", ic_lines)

    sensor_lines = []
    if kind in ("phone", "tablet"):
        sensor_lines.append(_entry_line("sensor", "image sensor module",
                                        int(rng.integers(2, 5)), "count"))
        sensor_lines.append(_entry_line("sensor", "inertial sensor module", 1, "count"))
    elif kind == "laptop":
        sensor_lines.append(_entry_line("sensor", "image sensor module", 1, "count"))
        sensor_lines.append(_entry_line("sensor", "ambient light sensor module", 1, "count"))
    elif kind == "watch":
        sensor_lines.append(_entry_line("sensor", "heart rate sensor module", 1, "count"))
        sensor_lines.append(_entry_line("sensor", "inertial sensor module", 1, "count"))
    elif kind == "monitor":
        sensor_lines.append(_entry_line("sensor", "ambient light sensor module", 1, "count"))
    else:
        sensor_lines.append(_entry_line("sensor", "thermal sensor module", 1, "count"))
    doc("sensor", [f"{lp} sensor"], f"Sensing subsystem of the {query}.", sensor_lines)

    passive_range = {
        "phone": (180, 340), "laptop": (400, 700), "tablet": (220, 420), "watch": (40, 90),
        "monitor": (150, 300), "motherboard": (500, 900), "gpu": (300, 600),
    }[kind]
    doc("passive", [f"{lp} passive"], f"Passive component count for the {query}.",
        [_entry_line("passive", "chip passive component", int(rng.integers(*passive_range)), "count")])

    mech_lines = []
    if kind in ("phone", "tablet"):
        mech_lines.append(_entry_line("mechanical", "aluminum frame housing",
                                      int(rng.integers(18, 42)), "gram"))
    elif kind == "laptop":
        if "tundra" in lp:
            # deliberately unlisted material: forces the generation fallback
            mech_lines.append(_entry_line("mechanical", "magnesium alloy frame",
                                          int(rng.integers(140, 220)), "gram"))
        else:
            mech_lines.append(_entry_line("mechanical", "aluminum frame housing",
                                          int(rng.integers(180, 320)), "gram"))
        mech_lines.append(_entry_line("mechanical", "steel bracket housing",
                                      int(rng.integers(40, 90)), "gram"))
    elif kind == "watch":
        mech_lines.append(_entry_line("mechanical", "steel bracket housing",
                                      int(rng.integers(8, 15)), "gram"))
    elif kind == "monitor":
        mech_lines.append(_entry_line("mechanical", "steel bracket housing",
                                      int(rng.integers(400, 800)), "gram"))
        mech_lines.append(_entry_line("mechanical", "plastic chassis housing",
                                      int(rng.integers(600, 1100)), "gram"))
    elif kind == "motherboard":
        mech_lines.append(_entry_line("mechanical", "steel bracket housing",
                                      int(rng.integers(30, 60)), "gram"))
    else:
        mech_lines.append(_entry_line("mechanical", "aluminum frame housing",
                                      int(rng.integers(250, 450)), "gram"))
    doc("mech", [f"{lp} mechanical"], f"Enclosure and fasteners of the {query}.", mech_lines)

    if kind in ("phone", "laptop", "tablet", "watch"):
        capacity = {
            "phone": round(float(rng.uniform(12, 20)), 1),
            "laptop": round(float(rng.uniform(50, 75)), 1),
            "tablet": round(float(rng.uniform(25, 35)), 1),
            "watch": round(float(rng.uniform(1.1, 2.2)), 2),
        }[kind]
        doc("battery", [f"{lp} battery"], f"Battery module teardown of the {query}.",
            [_entry_line("battery", "lithium ion battery pack", 1, "count")])
        doc("battery-specs", [f"{lp} battery", f"{lp} battery capacity"],
            f"Battery electrical specification for the {query}.",
            [_attr_line("battery", "capacity_wh", capacity)])
    if kind in ("phone", "laptop", "tablet", "watch", "monitor"):
        display = {
            "phone": str(rng.choice(["amoled", "oled"])),
            "laptop": str(rng.choice(["lcd", "oled"])),
            "tablet": str(rng.choice(["lcd", "amoled"])),
            "watch": "amoled",
            "monitor": "lcd",
        }[kind]
        doc("display", [f"{lp} display"], f"Display module of the {query}.",
            [_entry_line("display", f"{display} display module", 1, "count")])
        doc("display-specs", [f"{lp} display", f"{lp} display type"],
            f"Panel specification sheet for the {query}.",
            [_attr_line("display", "display_type", display)])
    return docs


def make_corpus_and_suite(efdb: list[EmissionFactor], materials) -> None:
    rng = np.random.default_rng(51)
    documents: dict[str, DocumentFixture] = {}
    index: dict[str, list[str]] = {}
    for query, kind in SUITE_PRODUCTS:
        for doc in _product_docs(query, kind, rng):
            assert doc.doc_id not in documents, doc.doc_id
            documents[doc.doc_id] = doc
            for key in doc.query_keys:
                index.setdefault(key, []).append(doc.doc_id)
    corpus = FixtureCorpus(documents, {k: tuple(sorted(v)) for k, v in index.items()})
    ingestion.save_corpus(corpus, FIXTURES / "corpus")
    reloaded = ingestion.load_corpus(FIXTURES / "corpus")
    assert set(reloaded.documents) == set(documents)

    backend = FixtureBackend(reloaded)
    options = lcia.AssessOptions(
        provider=efgen.HashingEmbedder(), material_db=tuple(materials)
    )
    budget = Budget(max_thinking_ms=300_000, max_rounds=20, max_documents=60)
    suite_dir = FIXTURES / "suite"
    suite_dir.mkdir(parents=True, exist_ok=True)
    generated_products = []
    for case_no, (query, kind) in enumerate(SUITE_PRODUCTS):
        result = run_selfplay(query, budget, backend)
        t = result.transcript
        assert t.status == "converged", (query, t.status)
        assert not result.lci.entries or harness.lci_f1(result.lci, result.lci) == 1.0
        assert len(result.lci.entries) >= 5, (query, len(result.lci.entries))
        outcome = lcia.assess(result.lci, efdb, options)
        if outcome.generated:
            generated_products.append(query)
        case = SuiteCase(
            query=query,
            reference_lci=result.lci,
            reference_cf_kgco2e=outcome.breakdown.total_kgco2e,
        )
        (suite_dir / f"case_{case_no:02d}.json").write_text(
            dump_json(case.to_dict()) + "\n", encoding="utf-8"
        )
    assert generated_products == ["Tundra Laptop 14"], generated_products
    info(f"corpus: {len(documents)} documents; suite: {len(SUITE_PRODUCTS)} cases "
         f"(1 exercising the generation fallback)")


# ---------------------------------------------------------------------------
# images


def _checkerboard(cell: int, side: int = 512) -> np.ndarray:
    tiles = (side + cell - 1) // cell
    row = np.arange(tiles) % 2
    board = (row[:, None] ^ row[None, :]).astype(np.uint8) * 200 + 30
    return np.kron(board, np.ones((cell, cell), dtype=np.uint8))[:side, :side]


def make_images() -> None:
    images_dir = FIXTURES / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    from carbonforge import vision

    flat = np.full((512, 512), 128, dtype=np.uint8)
    coarse = _checkerboard(64)
    fine = _checkerboard(8)
    cv2.imwrite(str(images_dir / "flat.png"), flat)
    cv2.imwrite(str(images_dir / "coarse.png"), coarse)
    cv2.imwrite(str(images_dir / "fine.png"), fine)
    s_flat = vision.hpf_score(flat)
    s_coarse = vision.hpf_score(coarse)
    s_fine = vision.hpf_score(fine)
    assert s_flat < s_coarse < s_fine, (s_flat, s_coarse, s_fine)

    # demo board: bright substrate on dark bench, components as dark patches
    board = np.full((900, 1600), 25, dtype=np.uint8)
    board[100:800, 150:1350] = 165  # substrate 1200x700 px
    components = []  # (x, y, w, h, value, expected class)
    ic_boxes = [(300, 220, 80, 80), (700, 500, 60, 60)]
    for x, y, w, h in ic_boxes:
        board[y : y + h, x : x + w] = 40
        components.append((x, y, w, h, "IC"))
    sensor_boxes = [(1000, 240, 22, 22), (520, 640, 24, 24)]
    for x, y, w, h in sensor_boxes:
        board[y : y + h, x : x + w] = 45
        components.append((x, y, w, h, "sensor"))
    passive_boxes = [(420 + 30 * i, 380, 9, 5) for i in range(6)]
    for x, y, w, h in passive_boxes:
        board[y : y + h, x : x + w] = 60
        components.append((x, y, w, h, "passive"))
    cv2.imwrite(str(images_dir / "board_demo.png"), board)

    detector = vision.BlobDetector()
    detections = detector.detect(board)
    by_class = {}
    for det in detections:
        by_class[det.component_class] = by_class.get(det.component_class, 0) + 1
    assert by_class == {"IC": 2, "sensor": 2, "passive": 6}, by_class
    bbox = vision.find_board_bbox(board)
    assert bbox == (150, 100, 1200, 700), bbox

    # reference-scaled board whose mm dimensions are exact at 0.1 mm/px
    exact = np.full((900, 1800), 20, dtype=np.uint8)
    exact[115 : 115 + 670, 135 : 135 + 1530] = 170
    cv2.imwrite(str(images_dir / "board_exact.png"), exact)
    bbox = vision.find_board_bbox(exact)
    assert bbox == (135, 115, 1530, 670), bbox
    cal = vision.calibrate_scale((10.0, 10.0), (0, 0, 100, 100))
    width_mm, height_mm, _ = vision.board_dimensions(bbox, cal)
    assert width_mm == 153.0 and height_mm == 67.0, (width_mm, height_mm)
    info("images: flat/coarse/fine ordering, demo board detections, exact-dims board all check out")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    make_pcf_demo()
    make_pcf_dedup()
    make_grid_daily()
    efdb = make_efdb()
    materials = make_materials()
    make_corpus_and_suite(efdb, materials)
    make_images()
    info("all fixture self-checks passed")


if __name__ == "__main__":
    main()
