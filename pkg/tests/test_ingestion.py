import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carbonforge import ingestion
from carbonforge.core import EmissionFactor, FeatureVector, MISSING, ProductRecord
from carbonforge.ingestion import (
    GRID_COLUMNS,
    GRID_FEATURE_SCHEMA,
    GRID_SOURCES,
    PCF_COLUMNS,
    PRODUCT_FEATURE_SCHEMA,
    DocumentFixture,
    FixtureCorpus,
    GridRecord,
    SchemaError,
)


def _record(name="m1", **overrides):
    values = {
        "mass_kg": 1.5,
        "screen_size_in": 14.0,
        "memory_gb": 16.0,
        "storage_gb": 512.0,
        "battery_capacity_wh": 60.0,
        "technology_node_nm": 7.0,
        "display_type": "lcd",
        "chassis_material": "aluminum",
    }
    values.update(overrides.pop("values", {}))
    defaults = dict(
        company="acme",
        category="laptop",
        name=name,
        features=FeatureVector(PRODUCT_FEATURE_SCHEMA, values),
        reported_cf_kgco2e=250.0,
    )
    defaults.update(overrides)
    return ProductRecord(**defaults)


class TestPcfParsing:
    def test_header_mismatch_names_first_missing_column(self):
        cols = list(PCF_COLUMNS)
        cols.remove("reported_cf_kgco2e")
        src = io.StringIO(",".join(cols) + "\n")
        with pytest.raises(SchemaError, match="reported_cf_kgco2e"):
            ingestion.parse_pcf_records(src)

    def test_empty_input_is_schema_error(self):
        with pytest.raises(SchemaError, match="header"):
            ingestion.parse_pcf_records(io.StringIO(""))

    def test_fixture_round_trip(self, fixtures_dir):
        result = ingestion.parse_pcf_records(fixtures_dir / "pcf_demo.csv")
        assert len(result.records) == 11
        assert len(result.rejected) == 1
        assert result.rejected[0].row == 7
        assert "reported_cf" in result.rejected[0].reason

    def test_write_parse_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        records = []
        for i in range(8):
            values = {"mass_kg": float(rng.uniform(0.5, 3)), "display_type": "oled"}
            if i % 3 == 0:
                values.pop("display_type")
            records.append(
                _record(
                    name=f"m{i}",
                    values=values | ({"memory_gb": None} if i % 2 else {}),
                    reported_cf_kgco2e=float(rng.uniform(50, 500)),
                    reported_uncertainty=float(rng.uniform(1, 20)) if i % 2 else None,
                    stage_shares=(
                        {"manufacturing": 0.7, "transport": 0.1, "use": 0.15, "eol": 0.05}
                        if i % 4 == 0
                        else None
                    ),
                )
            )
        # only the features passed in 'values' above survive; rebuild records
        # with sparse vectors so they exercise MISSING cells on disk
        path = tmp_path / "pcf.csv"
        ingestion.write_pcf_csv(records, path)
        parsed = ingestion.parse_pcf_records(path)
        assert not parsed.rejected
        assert list(parsed.records) == records

    def test_missing_stage_cell_rejects_row(self, tmp_path):
        path = tmp_path / "pcf.csv"
        shares = {"manufacturing": 0.7, "transport": 0.1, "use": 0.15, "eol": 0.05}
        ingestion.write_pcf_csv([_record(stage_shares=shares)], path)
        lines = path.read_text().splitlines()
        cells = lines[1].split(",")
        cells[PCF_COLUMNS.index("stage_transport")] = ""
        lines[1] = ",".join(cells)
        path.write_text("\n".join(lines) + "\n")
        parsed = ingestion.parse_pcf_records(path)
        assert not parsed.records and len(parsed.rejected) == 1


class TestDedup:
    def test_mixed_categories_rejected(self):
        with pytest.raises(ValueError, match="categories"):
            ingestion.dedup_similar([_record(), _record(category="phone", name="p")])

    def test_keeps_smallest_name_of_each_group(self):
        a = _record(name="alpha")
        b = _record(name="beta")  # same features as alpha
        c = _record(name="gamma", values={"mass_kg": 9.0})
        kept, excluded = ingestion.dedup_similar([b, c, a])
        assert [r.name for r in kept] == ["gamma", "alpha"]
        assert [r.name for r in excluded] == ["beta"]

    def test_missing_values_participate_in_identity(self):
        sparse1 = _record(name="s1", values={"mass_kg": None})
        sparse2 = _record(name="s2", values={"mass_kg": None})
        full = _record(name="s3")
        kept, excluded = ingestion.dedup_similar([sparse1, sparse2, full])
        assert {r.name for r in kept} == {"s1", "s3"}

    @settings(max_examples=25)
    @given(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=12))
    def test_kept_plus_excluded_partition_input(self, tags):
        records = [
            _record(name=f"{tag}{i}", values={"display_type": tag}) for i, tag in enumerate(tags)
        ]
        kept, excluded = ingestion.dedup_similar(records)
        assert len(kept) == len(set(tags))
        assert sorted([r.name for r in kept] + [r.name for r in excluded]) == sorted(
            r.name for r in records
        )

    def test_fixture_dedup_counts(self, fixtures_dir):
        parsed = ingestion.parse_pcf_records(fixtures_dir / "pcf_dedup.csv")
        kept, excluded = ingestion.dedup_similar(parsed.records)
        assert len(parsed.records) == 20 and len(kept) == 17 and len(excluded) == 3


class TestGridParsing:
    def test_fixture_parses_clean(self, fixtures_dir):
        result = ingestion.parse_grid_records(fixtures_dir / "grid_daily.csv")
        assert len(result.records) == 348 * 4
        assert not result.rejected

    def test_partial_mix_row_is_permitted(self, fixtures_dir):
        result = ingestion.parse_grid_records(fixtures_dir / "grid_daily.csv")
        partial = [r for r in result.records if len(r.source_shares.values) < len(GRID_SOURCES)]
        assert len(partial) == 1
        assert partial[0].region == "R007"
        assert len(partial[0].source_shares.values) == 8

    def test_full_mix_must_sum_to_one(self):
        values = {s: 0.0 for s in GRID_SOURCES}
        values["coal"] = 0.5  # sums to 0.5
        with pytest.raises(ValueError, match="sum"):
            GridRecord("R0", "2024-01-01", 400.0, FeatureVector(GRID_FEATURE_SCHEMA, values))

    def test_share_bounds(self):
        values = {s: 0.0 for s in GRID_SOURCES if s != "coal"}
        values["coal"] = 1.2
        with pytest.raises(ValueError, match="outside"):
            GridRecord("R0", "2024-01-01", 400.0, FeatureVector(GRID_FEATURE_SCHEMA, values))

    def test_bad_date_rejected_per_row(self):
        header = ",".join(GRID_COLUMNS)
        good = "R0,2024-01-01,400," + ",".join(["0.09"] * 10) + ",0.1"
        bad = "R1,January 5,400," + ",".join(["0.09"] * 10) + ",0.1"
        result = ingestion.parse_grid_records(io.StringIO(f"{header}\n{good}\n{bad}\n"))
        assert len(result.records) == 1 and len(result.rejected) == 1
        assert result.rejected[0].row == 2

    def test_annual_mean_intensity(self):
        def rec(region, date, ci):
            values = dict(zip(GRID_SOURCES, [0.09] * 10 + [0.1]))
            return GridRecord(region, date, ci, FeatureVector(GRID_FEATURE_SCHEMA, values))

        means = ingestion.annual_mean_intensity(
            [rec("B", "2024-01-01", 100), rec("A", "2024-01-01", 300), rec("B", "2024-01-02", 200)]
        )
        assert means == {"A": 300.0, "B": 150.0}
        assert list(means) == ["A", "B"]

    def test_annual_mean_empty_is_error(self):
        with pytest.raises(ValueError):
            ingestion.annual_mean_intensity([])


class TestEfDatabase:
    def test_duplicate_ids_rejected_with_line_numbers(self, tmp_path):
        ef = EmissionFactor("dup", "steel part", "C24", "gram", 0.002)
        path = tmp_path / "efs.jsonl"
        ingestion.write_ef_database([ef, ef], path)
        result = ingestion.parse_ef_database(path)
        assert len(result.records) == 1
        assert len(result.rejected) == 1
        assert result.rejected[0].row == 2
        assert "duplicate" in result.rejected[0].reason

    def test_malformed_json_line_rejected(self, tmp_path):
        path = tmp_path / "efs.jsonl"
        path.write_text('{"id": "a", "description": "x", "unit": "gram", "kgco2e_per_unit": 1.0}\nnot json\n')
        result = ingestion.parse_ef_database(path)
        assert len(result.records) == 1 and len(result.rejected) == 1

    def test_fixture_round_trip(self, fixtures_dir, tmp_path, efdb):
        path = tmp_path / "efs.jsonl"
        ingestion.write_ef_database(efdb, path)
        again = ingestion.parse_ef_database(path)
        assert list(again.records) == efdb


class TestCorpus:
    def test_index_referential_integrity(self):
        doc = DocumentFixture("d1", ("k",), "text", "hello")
        with pytest.raises(ValueError, match="unknown document"):
            FixtureCorpus({"d1": doc}, {"k": ("d1", "d2")})

    def test_image_payload_round_trips_base64(self, tmp_path):
        blob = bytes(range(256))
        doc = DocumentFixture("img-1", ("board photo",), "image", blob)
        data = json.loads(json.dumps(doc.to_dict()))
        assert data["payload_encoding"] == "base64"
        assert DocumentFixture.from_dict(data) == doc

    def test_text_payload_must_be_str(self):
        with pytest.raises(ValueError, match="string"):
            DocumentFixture("d1", (), "text", b"bytes")

    def test_image_payload_must_be_bytes(self):
        with pytest.raises(ValueError, match="bytes"):
            DocumentFixture("d1", (), "image", "str")

    def test_save_load_round_trip(self, tmp_path):
        docs = {
            "a-doc": DocumentFixture("a-doc", ("alpha",), "text", "entry: x\n"),
            "b-img": DocumentFixture("b-img", ("beta",), "image", b"\x89PNG fake"),
        }
        corpus = FixtureCorpus(docs, {"alpha": ("a-doc",), "beta": ("b-img",)})
        ingestion.save_corpus(corpus, tmp_path / "c")
        loaded = ingestion.load_corpus(tmp_path / "c")
        assert loaded.documents == corpus.documents
        assert loaded.index == corpus.index

    def test_fixture_corpus_loads(self, corpus):
        assert len(corpus.documents) == 150
        for key, ids in corpus.index.items():
            for doc_id in ids:
                assert doc_id in corpus.documents
