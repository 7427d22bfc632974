import json
import math

import pytest
from hypothesis import given, strategies as st

from carbonforge.core import (
    CFBreakdown,
    DataAbstraction,
    EmissionFactor,
    EstimateDistribution,
    FeatureVector,
    InventoryEntry,
    LifeCycleInventory,
    MISSING,
    ProductRecord,
    completeness,
    dump_json,
    to_canonical_json,
    validate_inventory,
)

SCHEMA = (("mass_kg", "numeric"), ("color", "categorical"))


class TestFeatureVector:
    def test_missing_and_none_are_dropped(self):
        v = FeatureVector(SCHEMA, {"mass_kg": 1.5, "color": None})
        assert v.values == {"mass_kg": 1.5}
        assert v.get("color") is MISSING
        assert not v.present("color") and v.present("mass_kg")

    def test_unknown_name_rejected(self):
        with pytest.raises(ValueError, match="not in the schema"):
            FeatureVector(SCHEMA, {"weight": 2.0})

    def test_numeric_must_be_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            FeatureVector(SCHEMA, {"mass_kg": math.inf})

    def test_categorical_coerced_to_str(self):
        v = FeatureVector(SCHEMA, {"color": 7})
        assert v.values["color"] == "7"

    def test_round_trip(self):
        v = FeatureVector(SCHEMA, {"mass_kg": 2.25})
        assert FeatureVector.from_dict(v.to_dict()) == v
        assert v.to_dict()["values"]["color"] is None

    def test_bad_kind_rejected(self):
        with pytest.raises(ValueError):
            FeatureVector((("x", "boolean"),), {})

    @given(
        mass=st.one_of(st.none(), st.floats(-1e9, 1e9)),
        color=st.one_of(st.none(), st.sampled_from(["red", "blue"])),
    )
    def test_completeness_counts_present(self, mass, color):
        values = {}
        if mass is not None:
            values["mass_kg"] = mass
        if color is not None:
            values["color"] = color
        v = FeatureVector(SCHEMA, values)
        assert completeness(v) == len(values) / 2

    def test_completeness_empty_schema_degenerate(self):
        with pytest.raises(ValueError, match="degenerate"):
            completeness(FeatureVector((), {}))


class TestDataAbstraction:
    def test_duplicate_classes_rejected(self):
        with pytest.raises(ValueError):
            DataAbstraction("phone", ("IC", "IC"), {})

    def test_required_attr_for_unknown_class_rejected(self):
        with pytest.raises(ValueError):
            DataAbstraction("phone", ("IC",), {"battery": ("capacity_wh",)})

    def test_round_trip(self):
        da = DataAbstraction("phone", ("IC", "battery"), {"battery": ("capacity_wh",)})
        assert DataAbstraction.from_dict(da.to_dict()) == da


class TestInventoryValidation:
    def _lci(self, entries):
        da = DataAbstraction("phone", ("IC", "battery"), {})
        return LifeCycleInventory("p", da, tuple(entries), tuple("src" for _ in entries))

    def test_valid_inventory_is_clean(self):
        lci = self._lci([InventoryEntry("IC", "chip", 2, "count")])
        assert validate_inventory(lci) == []

    def test_violations_are_reported_as_data(self):
        lci = self._lci(
            [
                InventoryEntry("motor", "m", 1, "count"),
                InventoryEntry("IC", "chip", -2, "count"),
                InventoryEntry("IC", "chip", 1, "furlong"),
                InventoryEntry("IC", "chip", math.nan, "count"),
            ]
        )
        problems = validate_inventory(lci)
        assert len(problems) == 4
        assert any("class" in p for p in problems)
        assert any("negative" in p for p in problems)
        assert any("furlong" in p for p in problems)
        assert any("finite" in p for p in problems)

    def test_provenance_length_enforced(self):
        da = DataAbstraction("phone", ("IC",), {})
        with pytest.raises(ValueError, match="provenance"):
            LifeCycleInventory("p", da, (InventoryEntry("IC", "chip", 1, "count"),), ())

    def test_round_trip(self):
        lci = self._lci([InventoryEntry("IC", "chip", 2, "count", {"node": 5})])
        assert LifeCycleInventory.from_dict(lci.to_dict()) == lci


class TestEmissionFactor:
    def test_unit_vocabulary_enforced(self):
        with pytest.raises(ValueError, match="unit"):
            EmissionFactor("e1", "steel", "C24", "pound", 1.0)

    def test_positive_factor_enforced(self):
        with pytest.raises(ValueError):
            EmissionFactor("e1", "steel", "C24", "gram", 0.0)

    def test_round_trip(self):
        ef = EmissionFactor("e1", "steel", "C24", "gram", 0.002)
        assert EmissionFactor.from_dict(ef.to_dict()) == ef


class TestProductRecord:
    def test_stage_shares_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum"):
            ProductRecord(
                "acme", "laptop", "x", FeatureVector(SCHEMA, {}), 100.0,
                stage_shares={"manufacturing": 0.9, "transport": 0.2, "use": 0.0, "eol": 0.0},
            )

    def test_stage_shares_must_cover_all_stages(self):
        with pytest.raises(ValueError, match="cover"):
            ProductRecord(
                "acme", "laptop", "x", FeatureVector(SCHEMA, {}), 100.0,
                stage_shares={"manufacturing": 1.0},
            )

    def test_category_vocabulary(self):
        with pytest.raises(ValueError, match="category"):
            ProductRecord("acme", "toaster", "x", FeatureVector(SCHEMA, {}), 100.0)


class TestEstimateDistribution:
    @given(mean=st.floats(-1e6, 1e6), std=st.floats(0, 1e6))
    def test_ci95_brackets_mean(self, mean, std):
        est = EstimateDistribution(mean, std, (), "t")
        lo, hi = est.ci95
        assert lo <= mean <= hi
        assert lo == mean - 1.96 * std and hi == mean + 1.96 * std

    def test_neighbor_validation(self):
        with pytest.raises(ValueError, match="weight"):
            EstimateDistribution(1.0, 0.0, (("a", 0.0, 0.0),), "t")
        with pytest.raises(ValueError, match="distance"):
            EstimateDistribution(1.0, 0.0, (("a", -1.0, 1.0),), "t")

    def test_round_trip(self):
        est = EstimateDistribution(10.0, 2.0, (("a", 0.5, 1.0),), "t")
        assert EstimateDistribution.from_dict(est.to_dict()) == est


class TestCFBreakdown:
    def test_consistent_breakdown_accepted(self):
        b = CFBreakdown(10.0, ((0, "e1", 4.0), (1, "e2", 6.0)), {"IC": 10.0})
        assert b.total_kgco2e == 10.0

    def test_total_mismatch_rejected(self):
        with pytest.raises(ValueError):
            CFBreakdown(11.0, ((0, "e1", 4.0), (1, "e2", 6.0)), {"IC": 10.0})

    def test_per_class_mismatch_rejected(self):
        with pytest.raises(ValueError):
            CFBreakdown(10.0, ((0, "e1", 4.0), (1, "e2", 6.0)), {"IC": 9.0})


class TestCanonicalJson:
    def test_keys_sorted_and_compact(self):
        s = to_canonical_json({"b": 1, "a": [1.5, 2]})
        assert s == '{"a":[1.5,2],"b":1}'

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            to_canonical_json({"x": math.nan})

    def test_dump_json_parses_back(self):
        payload = {"a": 1, "b": {"c": [1, 2, 3]}}
        assert json.loads(dump_json(payload)) == payload
