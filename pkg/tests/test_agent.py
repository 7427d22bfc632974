import json

import cv2
import numpy as np
import pytest

from carbonforge import agent as agent_mod
from carbonforge.agent import (
    ANSWER_BASE_MS,
    IMAGE_DOC_COST_MS,
    IMAGE_DOC_TOKENS,
    MS_PER_TOKEN,
    SEARCH_BASE_MS,
    SEARCH_SNIPPET_TOKENS,
    AgentConfig,
    AgentTranscript,
    AttributeAssertion,
    BackendError,
    Budget,
    EntryAssertion,
    FixtureBackend,
    LiveBackend,
    RoundRecord,
    VirtualClock,
    WallClock,
    assertion_from_dict,
    build_data_abstraction,
    critique,
    load_suite,
    measure_scaling,
    parse_payload_assertions,
    replay_transcript,
    run_selfplay,
)
from carbonforge.core import (
    DataAbstraction,
    InventoryEntry,
    LifeCycleInventory,
    validate_inventory,
)
from carbonforge.ingestion import DocumentFixture, FixtureCorpus
from carbonforge.vision import Detection

PHONE = "Aurora Phone 12"


class TestDataAbstraction:
    def test_phone_gets_battery_and_display(self):
        da = build_data_abstraction(PHONE)
        assert da.product_class == "phone"
        assert da.component_classes == (
            "PCB", "IC", "sensor", "passive", "mechanical", "battery", "display",
        )
        assert da.required_attributes == {
            "battery": ("capacity_wh",),
            "display": ("display_type",),
        }

    def test_monitor_gets_display_only(self):
        da = build_data_abstraction("Prism Monitor 27")
        assert da.product_class == "monitor"
        assert "battery" not in da.component_classes
        assert da.required_attributes == {"display": ("display_type",)}

    def test_keyword_matches_inside_tokens(self):
        assert build_data_abstraction("FoldX Smartphone").product_class == "phone"

    def test_chipset_pattern_implies_motherboard(self):
        da = build_data_abstraction("Keystone Z790 Pro")
        assert da.product_class == "motherboard"
        assert da.component_classes == ("PCB", "IC", "sensor", "passive", "mechanical")

    def test_chipset_needs_exact_shape(self):
        with pytest.warns(UserWarning, match="unknown product kind"):
            da = build_data_abstraction("Z7900 Hub")
        assert da.product_class == "electronics"

    def test_unknown_kind_warns_and_uses_base(self):
        with pytest.warns(UserWarning, match="unknown product kind"):
            da = build_data_abstraction("Espresso Grinder")
        assert da.product_class == "electronics"
        assert da.component_classes == ("PCB", "IC", "sensor", "passive", "mechanical")

    def test_empty_query_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            build_data_abstraction("  !! ")


class TestCritique:
    def _lci(self, da, entries):
        return LifeCycleInventory(PHONE, da, tuple(entries), ("d",) * len(entries))

    def test_class_gaps_come_first_in_abstraction_order(self):
        da = build_data_abstraction(PHONE)
        entries = [
            InventoryEntry("battery", "cell", 40.0, "gram"),
            InventoryEntry("IC", "soc", 1.0, "count"),
        ]
        queries = critique(self._lci(da, entries), da)
        gap_classes = [q.component_class for q in queries if q.kind == "class_gap"]
        assert gap_classes == ["PCB", "sensor", "passive", "mechanical", "display"]
        attr_gaps = [q for q in queries if q.kind == "attribute_gap"]
        assert [(q.component_class, q.attribute) for q in attr_gaps] == [
            ("battery", "capacity_wh")
        ]
        assert all(
            queries.index(a) > queries.index(c)
            for a in attr_gaps
            for c in [q for q in queries if q.kind == "class_gap"]
        )

    def test_attribute_satisfied_by_any_entry(self):
        da = build_data_abstraction(PHONE)
        entries = [
            InventoryEntry("battery", "cell a", 1.0, "count"),
            InventoryEntry("battery", "cell b", 1.0, "count", {"capacity_wh": 15.0}),
        ]
        queries = critique(self._lci(da, entries), da)
        assert not any(q.kind == "attribute_gap" for q in queries)

    def test_empty_critique_signals_convergence(self):
        da = DataAbstraction("widget", ("PCB",))
        entries = [InventoryEntry("PCB", "board", 100.0, "mm2")]
        assert critique(self._lci(da, entries), da) == []


class TestPayloadGrammar:
    def test_entry_and_attr_lines(self):
        doc = DocumentFixture(
            "spec-1",
            (),
            "text",
            "The teardown notes follow.\n"
            "entry: class=IC; desc=application processor; qty=1; unit=count; attr.node_nm=7\n"
            "attr: class=battery; name=capacity_wh; value=12.5\n"
            "Total mass is irrelevant prose.\n",
        )
        entry, attr = parse_payload_assertions(doc)
        assert entry == EntryAssertion(
            "IC", "application processor", 1.0, "count", {"node_nm": 7.0}, "spec-1"
        )
        assert attr == AttributeAssertion("battery", "capacity_wh", 12.5, "spec-1")

    def test_non_numeric_values_stay_strings(self):
        doc = DocumentFixture(
            "spec-2", (), "text", "attr: class=display; name=display_type; value=amoled\n"
        )
        (attr,) = parse_payload_assertions(doc)
        assert attr.value == "amoled"

    def test_malformed_lines_skipped(self):
        doc = DocumentFixture(
            "spec-3",
            (),
            "text",
            "entry: class=IC; desc=incomplete\n"  # no qty/unit
            "entry: class=IC; desc=bad qty; qty=many; unit=count\n"
            "entry: class=IC; desc=good; qty=2; unit=count\n",
        )
        assertions = parse_payload_assertions(doc)
        assert [a.description for a in assertions] == ["good"]

    def test_image_payloads_produce_nothing(self):
        doc = DocumentFixture("img", (), "image", b"entry: class=IC")
        assert parse_payload_assertions(doc) == []

    def test_assertion_round_trip(self):
        entry = EntryAssertion("IC", "chip", 2.0, "count", {"node_nm": 5.0}, "d")
        attr = AttributeAssertion("battery", "capacity_wh", 11.0, "d")
        assert assertion_from_dict(json.loads(json.dumps(entry.to_dict()))) == entry
        assert assertion_from_dict(json.loads(json.dumps(attr.to_dict()))) == attr
        with pytest.raises(ValueError, match="kind"):
            assertion_from_dict({"kind": "rumor"})


def _mini_corpus():
    docs = {
        "w-pcb": DocumentFixture(
            "w-pcb",
            ("widgetco gizmo pcb",),
            "text",
            "entry: class=PCB; desc=main board; qty=1800; unit=mm2\n",
        ),
        "w-ic": DocumentFixture(
            "w-ic",
            ("widgetco gizmo ic",),
            "text",
            "entry: class=IC; desc=controller; qty=2; unit=count\n",
        ),
        "w-rest": DocumentFixture(
            "w-rest",
            ("widgetco gizmo sensor", "widgetco gizmo passive", "widgetco gizmo mechanical"),
            "text",
            "entry: class=sensor; desc=imu; qty=1; unit=count\n"
            "entry: class=passive; desc=capacitor bank; qty=40; unit=count\n"
            "entry: class=mechanical; desc=shield can; qty=3; unit=gram\n",
        ),
    }
    index: dict[str, tuple[str, ...]] = {}
    for doc in docs.values():
        for key in doc.query_keys:
            index[key] = index.get(key, ()) + (doc.doc_id,)
    return FixtureCorpus(docs, index)


class TestFixtureBackendAccounting:
    def test_search_token_and_cost_formula(self):
        backend = FixtureBackend(_mini_corpus())
        response = backend.search("WidgetCo Gizmo PCB components")
        assert [d.doc_id for d in response.documents] == ["w-pcb"]
        expected_tokens = 4 + SEARCH_SNIPPET_TOKENS * 1
        assert response.tokens == expected_tokens
        assert response.cost_ms == SEARCH_BASE_MS + MS_PER_TOKEN * expected_tokens

    def test_search_requires_full_key_in_query(self):
        backend = FixtureBackend(_mini_corpus())
        assert backend.search("gizmo pcb").documents == ()  # key token missing

    def test_matches_return_in_doc_id_order(self):
        docs = {
            "b-doc": DocumentFixture("b-doc", ("shared key",), "text", "x"),
            "a-doc": DocumentFixture("a-doc", ("shared key",), "text", "y"),
        }
        corpus = FixtureCorpus(docs, {"shared key": ("b-doc", "a-doc")})
        response = FixtureBackend(corpus).search("shared key lookup")
        assert [d.doc_id for d in response.documents] == ["a-doc", "b-doc"]

    def test_answer_token_and_cost_formula(self):
        corpus = _mini_corpus()
        backend = FixtureBackend(corpus)
        doc = corpus.documents["w-ic"]
        response = backend.answer("what ICs are inside", [doc])
        expected_tokens = 4 + len(doc.payload.split())
        assert response.tokens == expected_tokens
        assert response.cost_ms == ANSWER_BASE_MS + MS_PER_TOKEN * expected_tokens
        assert [a.description for a in response.assertions] == ["controller"]

    def test_modality_filter(self):
        docs = {
            "t": DocumentFixture("t", ("k",), "text", "x"),
            "i": DocumentFixture("i", ("k",), "image", b"png"),
        }
        backend = FixtureBackend(FixtureCorpus(docs, {"k": ("t", "i")}))
        assert [d.doc_id for d in backend.search("k lookup", "image").documents] == ["i"]


class TestBudget:
    def test_validation(self):
        with pytest.raises(ValueError, match="max_rounds"):
            Budget(max_thinking_ms=1, max_rounds=0, max_documents=1)
        with pytest.raises(ValueError, match="max_documents"):
            Budget(max_thinking_ms=1, max_rounds=1, max_documents=-2)

    def test_round_trip(self):
        budget = Budget(40000, 8, 12)
        assert Budget.from_dict(budget.to_dict()) == budget


class TestSelfplay:
    def test_converges_on_mini_corpus(self):
        backend = FixtureBackend(_mini_corpus())
        result = run_selfplay(
            "WidgetCo Gizmo GPU", Budget(600000, 10, 20), backend
        )
        transcript = result.transcript
        assert transcript.status == "converged"
        assert validate_inventory(result.lci) == []
        classes = {e.component_class for e in result.lci.entries}
        assert classes == {"PCB", "IC", "sensor", "passive", "mechanical"}
        # final round is the empty convergence check
        assert transcript.rounds[-1].critic_queries == ()
        assert transcript.rounds[-1].doc_ids == ()

    def test_round_bandwidth_is_three_queries(self):
        backend = FixtureBackend(_mini_corpus())
        result = run_selfplay("WidgetCo Gizmo GPU", Budget(600000, 10, 20), backend)
        assert len(result.transcript.rounds[0].critic_queries) == 3

    def test_max_rounds_budget(self):
        backend = FixtureBackend(_mini_corpus())
        result = run_selfplay("WidgetCo Gizmo GPU", Budget(600000, 1, 20), backend)
        assert result.transcript.status == "budget:max_rounds"
        assert result.transcript.reasoning_steps == 1

    def test_thinking_budget_with_grace(self):
        backend = FixtureBackend(_mini_corpus())
        result = run_selfplay("WidgetCo Gizmo GPU", Budget(1, 10, 20), backend)
        transcript = result.transcript
        assert transcript.status == "budget:max_thinking_ms"
        # the started round ran to completion past the cap
        assert transcript.reasoning_steps == 1
        assert transcript.elapsed_ms > 1
        assert transcript.grace_ms == transcript.elapsed_ms - 1

    def test_document_budget_caps_reads_mid_round(self):
        backend = FixtureBackend(_mini_corpus())
        result = run_selfplay("WidgetCo Gizmo GPU", Budget(600000, 10, 1), backend)
        assert result.transcript.documents_read == 1
        assert result.transcript.status == "budget:max_documents"

    def test_virtual_clock_used_for_fixture_backend(self):
        backend = FixtureBackend(_mini_corpus())
        result = run_selfplay("WidgetCo Gizmo GPU", Budget(600000, 10, 20), backend)
        search_tokens = 0
        # reconstruct the cost ledger from the transcript's own rounds
        assert result.transcript.elapsed_ms > 0
        assert result.transcript.elapsed_ms % 1 == 0

    def test_tokens_accumulate_search_and_answer(self):
        corpus = _mini_corpus()
        backend = FixtureBackend(corpus)
        result = run_selfplay("WidgetCo Gizmo GPU", Budget(600000, 10, 20), backend)
        assert result.transcript.tokens_used > 0

    def test_transcripts_identical_across_runs(self, corpus):
        backend = FixtureBackend(corpus)
        budget = Budget(60000, 8, 12)
        first = run_selfplay(PHONE, budget, backend)
        for _ in range(4):
            again = run_selfplay(PHONE, budget, backend)
            assert again.transcript.to_dict() == first.transcript.to_dict()
            assert again.lci == first.lci


class TestFullCorpusRuns:
    def test_phone_converges_with_required_attributes(self, corpus):
        backend = FixtureBackend(corpus)
        result = run_selfplay(PHONE, Budget(600000, 12, 20), backend)
        assert result.transcript.status == "converged"
        lci = result.lci
        batteries = [e for e in lci.entries if e.component_class == "battery"]
        displays = [e for e in lci.entries if e.component_class == "display"]
        assert any("capacity_wh" in e.attributes for e in batteries)
        assert any("display_type" in e.attributes for e in displays)

    def test_replay_reproduces_inventory_exactly(self, corpus):
        backend = FixtureBackend(corpus)
        for budget in (Budget(12000, 2, 4), Budget(600000, 12, 20)):
            result = run_selfplay(PHONE, budget, backend)
            replayed = replay_transcript(result.transcript, corpus)
            assert replayed == result.lci

    def test_transcript_json_round_trip(self, corpus):
        backend = FixtureBackend(corpus)
        result = run_selfplay(PHONE, Budget(60000, 8, 12), backend)
        data = json.loads(json.dumps(result.transcript.to_dict()))
        assert AgentTranscript.from_dict(data) == result.transcript

    def test_products_stay_within_their_own_corpus(self, corpus):
        backend = FixtureBackend(corpus)
        result = run_selfplay("Zenith Phone 8", Budget(600000, 12, 20), backend)
        for round_record in result.transcript.rounds:
            for doc_id in round_record.doc_ids:
                assert doc_id.startswith("zenith-phone-8")


class TestInventoryStateRules:
    def test_attribute_fact_stamps_future_entries(self):
        da = build_data_abstraction(PHONE)
        state = agent_mod._InventoryState(da)
        state.apply(
            [AttributeAssertion("battery", "capacity_wh", 11.5, "doc-a")], "doc-a"
        )
        state.apply(
            [EntryAssertion("battery", "li-ion cell", 1.0, "count", {}, "doc-b")], "doc-b"
        )
        (entry,) = state.entries
        assert entry.attributes == {"capacity_wh": 11.5}

    def test_first_assertion_wins_for_attributes(self):
        da = build_data_abstraction(PHONE)
        state = agent_mod._InventoryState(da)
        state.apply([AttributeAssertion("battery", "capacity_wh", 10.0, "a")], "a")
        state.apply([AttributeAssertion("battery", "capacity_wh", 99.0, "b")], "b")
        state.apply([EntryAssertion("battery", "cell", 1.0, "count", {}, "c")], "c")
        assert state.entries[0].attributes["capacity_wh"] == 10.0

    def test_entry_dedup_on_identity_key(self):
        da = build_data_abstraction(PHONE)
        state = agent_mod._InventoryState(da)
        entry = EntryAssertion("IC", "soc", 1.0, "count", {}, "a")
        assert state.apply([entry, entry], "a") == ["+entry IC 'soc' x1 count"]
        assert len(state.entries) == 1

    def test_out_of_abstraction_assertions_skipped_with_note(self):
        da = build_data_abstraction("Keystone Z790 Pro")  # no battery class
        state = agent_mod._InventoryState(da)
        delta = state.apply(
            [EntryAssertion("battery", "cell", 1.0, "count", {}, "a")], "a"
        )
        assert delta == ["!skip entry 'cell': class 'battery' outside abstraction"]
        assert not state.entries

    def test_invalid_quantity_and_unit_skipped(self):
        da = build_data_abstraction("Keystone Z790 Pro")
        state = agent_mod._InventoryState(da)
        delta = state.apply(
            [
                EntryAssertion("IC", "neg", -1.0, "count", {}, "a"),
                EntryAssertion("IC", "odd unit", 1.0, "furlong", {}, "a"),
            ],
            "a",
        )
        assert all(line.startswith("!skip") for line in delta)
        assert not state.entries


def _board_png_bytes():
    frame = np.zeros((200, 300), dtype=np.uint8)
    cv2.rectangle(frame, (20, 20), (219, 119), 190, thickness=-1)  # 200x100 board
    ok, encoded = cv2.imencode(".png", frame)
    assert ok
    return encoded.tobytes()


class _CannedDetector:
    def __init__(self, detections):
        self.detections = detections

    def detect(self, image):
        return list(self.detections)


class TestImageDocuments:
    def _image_corpus(self):
        docs = {
            "g-photo": DocumentFixture(
                "g-photo", ("gadgetco unit pcb",), "image", _board_png_bytes()
            ),
        }
        return FixtureCorpus(docs, {"gadgetco unit pcb": ("g-photo",)})

    def test_calibrated_reference_yields_board_area_entry(self):
        detector = _CannedDetector(
            [
                Detection("IC", (40, 40, 100, 100), 0.9, label_text="CAL-CHIP"),
                Detection("passive", (160, 50, 10, 6), 0.5),
            ]
        )
        config = AgentConfig(reference_dims_mm={"CAL-CHIP": (10.0, 10.0)})
        backend = FixtureBackend(self._image_corpus())
        result = run_selfplay(
            "GadgetCo Unit GPU", Budget(600000, 1, 5), backend, detector=detector, config=config
        )
        pcb = [e for e in result.lci.entries if e.component_class == "PCB"]
        assert len(pcb) == 1
        assert pcb[0].unit == "mm2"
        assert pcb[0].quantity == pytest.approx(20.0 * 10.0)  # 0.1 mm/px over 200x100 px
        ics = [e for e in result.lci.entries if e.component_class == "IC"]
        assert ics and ics[0].attributes["area_mm2"] == pytest.approx(100.0)

    def test_uncalibrated_detections_become_pixel_entries(self):
        detector = _CannedDetector([Detection("sensor", (5, 5, 20, 24), 0.7)])
        backend = FixtureBackend(self._image_corpus())
        result = run_selfplay(
            "GadgetCo Unit GPU", Budget(600000, 1, 5), backend, detector=detector
        )
        (sensor,) = [e for e in result.lci.entries if e.component_class == "sensor"]
        assert sensor.unit == "count"
        assert sensor.attributes["w_px"] == 20 and sensor.attributes["h_px"] == 24

    def test_image_tokens_charged(self):
        detector = _CannedDetector([])
        backend = FixtureBackend(self._image_corpus())
        result = run_selfplay(
            "GadgetCo Unit GPU", Budget(600000, 1, 5), backend, detector=detector
        )
        search_response = backend.search("GadgetCo Unit GPU PCB components")
        assert result.transcript.tokens_used >= search_response.tokens + IMAGE_DOC_TOKENS
        assert result.transcript.elapsed_ms >= IMAGE_DOC_COST_MS

    def test_replay_with_image_documents(self):
        detector = _CannedDetector(
            [Detection("IC", (40, 40, 100, 100), 0.9, label_text="CAL-CHIP")]
        )
        config = AgentConfig(reference_dims_mm={"cal-chip": (10.0, 10.0)})
        backend = FixtureBackend(self._image_corpus())
        corpus = self._image_corpus()
        result = run_selfplay(
            "GadgetCo Unit GPU", Budget(600000, 1, 5), backend, detector=detector, config=config
        )
        replayed = replay_transcript(
            result.transcript, corpus, detector=detector, config=config
        )
        assert replayed == result.lci


class TestTranscriptInvariants:
    def _round(self, index, start, end, docs=()):
        return RoundRecord(index, start, end, ("q",), tuple(docs), ())

    def test_reasoning_steps_must_match_rounds(self):
        with pytest.raises(ValueError, match="reasoning_steps"):
            AgentTranscript(
                product="p",
                rounds=(self._round(1, 0, 5),),
                elapsed_ms=5,
                documents_read=0,
                reasoning_steps=2,
                tokens_used=0,
                grace_ms=0,
                status="converged",
                budget=Budget(1000, 4, 4),
            )

    def test_documents_read_must_match_distinct_ids(self):
        with pytest.raises(ValueError, match="documents_read"):
            AgentTranscript(
                product="p",
                rounds=(self._round(1, 0, 5, docs=("a", "b")),),
                elapsed_ms=5,
                documents_read=1,
                reasoning_steps=1,
                tokens_used=0,
                grace_ms=0,
                status="converged",
                budget=Budget(1000, 4, 4),
            )

    def test_timestamps_must_be_monotone(self):
        with pytest.raises(ValueError, match="monotone"):
            AgentTranscript(
                product="p",
                rounds=(self._round(1, 0, 10), self._round(2, 5, 8)),
                elapsed_ms=10,
                documents_read=0,
                reasoning_steps=2,
                tokens_used=0,
                grace_ms=0,
                status="converged",
                budget=Budget(1000, 4, 4),
            )


class _FakeResponse:
    def __init__(self, status_code=200, payload=None, raise_on_json=False):
        self.status_code = status_code
        self._payload = payload or {}
        self._raise = raise_on_json

    def json(self):
        if self._raise:
            raise ValueError("bad json")
        return self._payload


class _FakeSession:
    def __init__(self, response):
        self.response = response
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append((url, json, headers))
        if isinstance(self.response, Exception):
            raise self.response
        return self.response


class TestLiveBackend:
    def test_search_round_trip(self):
        doc = DocumentFixture("d1", ("k",), "text", "entry: class=IC; desc=x; qty=1; unit=count")
        session = _FakeSession(
            _FakeResponse(payload={"documents": [doc.to_dict()], "tokens": 17})
        )
        backend = LiveBackend("http://backend.local/api/", api_key="secret", session=session)
        response = backend.search("ic parts")
        assert response.documents == (doc,)
        assert response.tokens == 17
        url, payload, headers = session.calls[0]
        assert url == "http://backend.local/api/search"
        assert payload == {"query": "ic parts", "modality": None}
        assert headers == {"Authorization": "Bearer secret"}

    def test_answer_round_trip(self):
        session = _FakeSession(
            _FakeResponse(
                payload={
                    "assertions": [
                        {
                            "kind": "attribute",
                            "class": "battery",
                            "component_class": "battery",
                            "name": "capacity_wh",
                            "value": 10.0,
                        }
                    ],
                    "tokens": 3,
                }
            )
        )
        backend = LiveBackend("http://b", session=session)
        response = backend.answer("capacity?", [])
        assert response.assertions[0].name == "capacity_wh"

    def test_non_200_raises(self):
        backend = LiveBackend("http://b", session=_FakeSession(_FakeResponse(status_code=503)))
        with pytest.raises(BackendError, match="503"):
            backend.search("q")

    def test_malformed_json_raises(self):
        backend = LiveBackend(
            "http://b", session=_FakeSession(_FakeResponse(raise_on_json=True))
        )
        with pytest.raises(BackendError, match="malformed JSON"):
            backend.search("q")

    def test_missing_documents_key_raises(self):
        backend = LiveBackend("http://b", session=_FakeSession(_FakeResponse(payload={})))
        with pytest.raises(BackendError, match="malformed search response"):
            backend.search("q")

    def test_transport_errors_wrapped(self):
        backend = LiveBackend("http://b", session=_FakeSession(ConnectionError("refused")))
        with pytest.raises(BackendError, match="request failed"):
            backend.search("q")

    def test_from_env_requires_url(self, monkeypatch):
        monkeypatch.delenv("CARBONFORGE_BACKEND_URL", raising=False)
        with pytest.raises(BackendError, match="CARBONFORGE_BACKEND_URL"):
            LiveBackend.from_env()

    def test_from_env_reads_url_and_key(self, monkeypatch):
        monkeypatch.setenv("CARBONFORGE_BACKEND_URL", "http://b/")
        monkeypatch.setenv("CARBONFORGE_API_KEY", "k")
        backend = LiveBackend.from_env()
        assert backend.base_url == "http://b"
        assert backend._headers == {"Authorization": "Bearer k"}


class TestClocks:
    def test_virtual_clock_advances_by_declared_cost(self):
        clock = VirtualClock()
        assert clock.now_ms() == 0
        clock.advance(1500)
        clock.advance(250)
        assert clock.now_ms() == 1750

    def test_wall_clock_monotone_and_ignores_advance(self):
        clock = WallClock()
        before = clock.now_ms()
        clock.advance(10_000_000)
        assert clock.now_ms() >= before
        assert clock.now_ms() < 10_000_000


class TestConfig:
    def test_queries_per_round_validated(self):
        with pytest.raises(ValueError, match="queries_per_round"):
            AgentConfig(queries_per_round=0)

    def test_reference_labels_lowercased(self):
        config = AgentConfig(reference_dims_mm={"CAL-Chip": (10, 12)})
        assert config.reference_dims_mm == {"cal-chip": (10.0, 12.0)}


class TestSuiteAndScaling:
    def test_fixture_suite_loads(self, fixtures_dir):
        suite = load_suite(fixtures_dir / "suite")
        assert len(suite) == 20
        for case in suite:
            assert validate_inventory(case.reference_lci) == []
            assert case.reference_cf_kgco2e > 0

    def test_missing_suite_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_suite(tmp_path)

    def test_measure_scaling_shapes(self, fixtures_dir, corpus):
        suite = load_suite(fixtures_dir / "suite")[:3]
        backend = FixtureBackend(corpus)
        budgets = [Budget(10000, 2, 4), Budget(600000, 12, 20)]
        study = measure_scaling(suite, budgets, backend)
        assert len(study.points) == 2
        small, big = study.points
        assert small.n_cases == big.n_cases == 3
        assert big.f1_mean >= small.f1_mean
        assert big.tokens_mean >= small.tokens_mean
        header, rows = study.csv_rows()
        assert len(rows) == 2 and len(rows[0]) == len(header)
        # no efdb passed: footprint errors stay out of the aggregates
        assert big.ape_mean != big.ape_mean  # NaN
