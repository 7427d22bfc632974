"""Two-agent self-play loop for building life cycle inventories.

The critic agent owns the data abstraction: it inspects the inventory so
far, names the component classes and required attributes still missing,
and stops when nothing is. The stakeholders agent owns retrieval: it
answers each targeted query from documents behind a pluggable backend.
Budgets (thinking time, rounds, documents) bound the loop hard.

Time is read from a clock abstraction. Backends that declare per-call
costs (the fixture backend does) run against a virtual clock, which makes
transcripts bit-identical across runs while keeping thinking-time budgets
meaningful; live backends fall back to wall time.
"""

from __future__ import annotations

import json
import math
import os
import re
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

from .core import (
    UNITS,
    DataAbstraction,
    InventoryEntry,
    LifeCycleInventory,
    validate_inventory,
)
from .ingestion import DocumentFixture, FixtureCorpus

ELECTRONICS_CLASSES = ("PCB", "IC", "sensor", "passive", "mechanical")

# Conditional subsystems and the attribute each one must carry.
SUBSYSTEM_ATTRIBUTES = {"battery": ("capacity_wh",), "display": ("display_type",)}

# Product-kind rules: first match on the query tokens wins. The chipset
# pattern catches board names like Z790 or B550 that never say "board".
_KIND_RULES: tuple[tuple[str, tuple[str, ...], tuple[str, ...]], ...] = (
    ("phone", ("phone", "handset"), ("battery", "display")),
    ("tablet", ("tablet",), ("battery", "display")),
    ("laptop", ("laptop", "notebook", "ultrabook"), ("battery", "display")),
    ("watch", ("watch",), ("battery", "display")),
    ("monitor", ("monitor",), ("display",)),
    ("motherboard", ("motherboard", "mainboard"), ()),
    ("gpu", ("gpu", "graphics", "geforce", "radeon"), ()),
)

_CHIPSET_RE = re.compile(r"^[abhxz]\d{3}$")

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def build_data_abstraction(query: str) -> DataAbstraction:
    """Resolve a product query to its data abstraction via the rule table.

    Unknown product kinds fall back to the base electronics abstraction
    with a warning rather than failing.
    """
    tokens = _tokens(query)
    if not tokens:
        raise ValueError("empty product query")
    kind = None
    subsystems: tuple[str, ...] = ()
    for name, keywords, subs in _KIND_RULES:
        if any(kw in tok for tok in tokens for kw in keywords):
            kind, subsystems = name, subs
            break
    if kind is None and any(_CHIPSET_RE.match(tok) for tok in tokens):
        kind, subsystems = "motherboard", ()
    if kind is None:
        warnings.warn(f"unknown product kind for {query!r}; using base electronics", stacklevel=2)
        kind, subsystems = "electronics", ()
    classes = ELECTRONICS_CLASSES + subsystems
    required = {sub: SUBSYSTEM_ATTRIBUTES[sub] for sub in subsystems}
    return DataAbstraction(product_class=kind, component_classes=classes, required_attributes=required)


@dataclass(frozen=True)
class TargetedQuery:
    """One gap the critic wants closed: a missing class or attribute."""

    kind: str  # "class_gap" | "attribute_gap"
    component_class: str
    attribute: str | None
    text: str


def critique(lci: LifeCycleInventory, da: DataAbstraction) -> list[TargetedQuery]:
    """Queries for every empty class and every missing required attribute.

    An empty critique is the convergence signal: each class has at least
    one entry and every required attribute is present somewhere.
    """
    queries: list[TargetedQuery] = []
    by_class: dict[str, list[InventoryEntry]] = {c: [] for c in da.component_classes}
    for entry in lci.entries:
        if entry.component_class in by_class:
            by_class[entry.component_class].append(entry)
    for cls in da.component_classes:
        if not by_class[cls]:
            queries.append(
                TargetedQuery("class_gap", cls, None, f"{lci.product} {cls} components")
            )
    for cls in da.component_classes:
        entries = by_class[cls]
        if not entries:
            continue  # the class gap query comes first
        for attr in da.required_attributes.get(cls, ()):
            if not any(attr in e.attributes for e in entries):
                queries.append(
                    TargetedQuery("attribute_gap", cls, attr, f"{lci.product} {cls} {attr}")
                )
    return queries


@dataclass(frozen=True)
class Budget:
    """Hard resource bounds for one self-play run."""

    max_thinking_ms: int
    max_rounds: int
    max_documents: int

    def __post_init__(self):
        for name in ("max_thinking_ms", "max_rounds", "max_documents"):
            value = int(getattr(self, name))
            if value < 1:
                raise ValueError(f"{name} must be a positive integer")
            object.__setattr__(self, name, value)

    def to_dict(self) -> dict:
        return {
            "max_thinking_ms": self.max_thinking_ms,
            "max_rounds": self.max_rounds,
            "max_documents": self.max_documents,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "Budget":
        return Budget(
            max_thinking_ms=data["max_thinking_ms"],
            max_rounds=data["max_rounds"],
            max_documents=data["max_documents"],
        )


class VirtualClock:
    """Deterministic clock advanced by declared operation costs."""

    def __init__(self):
        self._now_ms = 0

    def now_ms(self) -> int:
        return self._now_ms

    def advance(self, cost_ms: int) -> None:
        self._now_ms += int(cost_ms)


class WallClock:
    def __init__(self):
        self._t0 = time.perf_counter()

    def now_ms(self) -> int:
        return int((time.perf_counter() - self._t0) * 1000)

    def advance(self, cost_ms: int) -> None:
        pass  # real time passes on its own


@dataclass(frozen=True)
class EntryAssertion:
    component_class: str
    description: str
    quantity: float
    unit: str
    attributes: Mapping[str, object]
    source: str

    def to_dict(self) -> dict:
        return {
            "kind": "entry",
            "component_class": self.component_class,
            "description": self.description,
            "quantity": self.quantity,
            "unit": self.unit,
            "attributes": dict(self.attributes),
            "source": self.source,
        }


@dataclass(frozen=True)
class AttributeAssertion:
    component_class: str
    name: str
    value: object
    source: str

    def to_dict(self) -> dict:
        return {
            "kind": "attribute",
            "component_class": self.component_class,
            "name": self.name,
            "value": self.value,
            "source": self.source,
        }


def assertion_from_dict(data: Mapping):
    if data["kind"] == "entry":
        return EntryAssertion(
            component_class=data["component_class"],
            description=data["description"],
            quantity=data["quantity"],
            unit=data["unit"],
            attributes=dict(data.get("attributes", {})),
            source=data.get("source", ""),
        )
    if data["kind"] == "attribute":
        return AttributeAssertion(
            component_class=data["component_class"],
            name=data["name"],
            value=data["value"],
            source=data.get("source", ""),
        )
    raise ValueError(f"unknown assertion kind {data.get('kind')!r}")


@dataclass(frozen=True)
class SearchResponse:
    documents: tuple[DocumentFixture, ...]
    tokens: int
    cost_ms: int


@dataclass(frozen=True)
class AnswerResponse:
    assertions: tuple
    tokens: int
    cost_ms: int


class QueryBackend(Protocol):
    def search(self, query: str, modality: str | None = None) -> SearchResponse: ...

    def answer(self, question: str, documents: Sequence[DocumentFixture]) -> AnswerResponse: ...


class BackendError(RuntimeError):
    """The retrieval backend failed or returned garbage."""


def _parse_value(raw: str):
    try:
        return float(raw)
    except ValueError:
        return raw


def parse_payload_assertions(doc: DocumentFixture) -> list:
    """Extract structured assertion lines from a text document payload.

    Lines look like
        entry: class=IC; desc=memory chip; qty=2; unit=count; attr.node_nm=7
        attr: class=battery; name=capacity_wh; value=10.8
    Prose lines are ignored. Malformed assertion lines are skipped; a
    canned document that cannot even parse should not sink the run.
    """
    if doc.modality == "image":
        return []
    assertions: list = []
    for line in doc.payload.splitlines():
        line = line.strip()
        if not (line.startswith("entry:") or line.startswith("attr:")):
            continue
        head, _, body = line.partition(":")
        fields: dict[str, str] = {}
        for part in body.split(";"):
            key, eq, value = part.strip().partition("=")
            if eq:
                fields[key.strip()] = value.strip()
        try:
            if head == "entry":
                attributes = {
                    key[len("attr.") :]: _parse_value(value)
                    for key, value in fields.items()
                    if key.startswith("attr.")
                }
                assertions.append(
                    EntryAssertion(
                        component_class=fields["class"],
                        description=fields["desc"],
                        quantity=float(fields["qty"]),
                        unit=fields["unit"],
                        attributes=attributes,
                        source=doc.doc_id,
                    )
                )
            else:
                assertions.append(
                    AttributeAssertion(
                        component_class=fields["class"],
                        name=fields["name"],
                        value=_parse_value(fields["value"]),
                        source=doc.doc_id,
                    )
                )
        except (KeyError, ValueError):
            continue
    return assertions


# Simulated cost model for the fixture backend, in virtual milliseconds.
# One token is one whitespace-separated word.
SEARCH_BASE_MS = 1000
ANSWER_BASE_MS = 1400
MS_PER_TOKEN = 12
SEARCH_SNIPPET_TOKENS = 5
IMAGE_DOC_TOKENS = 40
IMAGE_DOC_COST_MS = 2500


def _word_count(text: str) -> int:
    return len(text.split())


class FixtureBackend:
    """Deterministic retrieval over a canned corpus; no network, no state.

    A document matches a query when the tokens of one of its index keys
    all appear in the query. Matches return in doc_id order. Token charges
    are word counts of the prompt and whatever was read.
    """

    virtual_time = True

    def __init__(self, corpus: FixtureCorpus):
        self.corpus = corpus
        self._key_tokens = {key: frozenset(_tokens(key)) for key in corpus.index}

    def search(self, query: str, modality: str | None = None) -> SearchResponse:
        query_tokens = set(_tokens(query))
        matched_ids: set[str] = set()
        for key, key_tokens in self._key_tokens.items():
            if key_tokens and key_tokens <= query_tokens:
                matched_ids.update(self.corpus.index[key])
        docs = [self.corpus.documents[i] for i in sorted(matched_ids)]
        if modality is not None:
            docs = [d for d in docs if d.modality == modality]
        tokens = _word_count(query) + SEARCH_SNIPPET_TOKENS * len(docs)
        return SearchResponse(
            documents=tuple(docs),
            tokens=tokens,
            cost_ms=SEARCH_BASE_MS + MS_PER_TOKEN * tokens,
        )

    def answer(self, question: str, documents: Sequence[DocumentFixture]) -> AnswerResponse:
        assertions: list = []
        tokens = _word_count(question)
        for doc in documents:
            if doc.modality == "image":
                tokens += IMAGE_DOC_TOKENS
                continue
            tokens += _word_count(doc.payload)
            assertions.extend(parse_payload_assertions(doc))
        return AnswerResponse(
            assertions=tuple(assertions),
            tokens=tokens,
            cost_ms=ANSWER_BASE_MS + MS_PER_TOKEN * tokens,
        )


class LiveBackend:
    """HTTP retrieval backend mirroring the QueryBackend contract.

    Endpoints: POST {base}/search and POST {base}/answer, JSON in and out.
    Token counts come from the provider. Never exercised by fixtures.
    """

    virtual_time = False

    def __init__(self, base_url: str, api_key: str | None = None, session=None, timeout_s: float = 30.0):
        import requests

        self.base_url = base_url.rstrip("/")
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._session = session if session is not None else requests.Session()
        self._timeout_s = timeout_s

    @staticmethod
    def from_env() -> "LiveBackend":
        url = os.environ.get("CARBONFORGE_BACKEND_URL")
        if not url:
            raise BackendError("CARBONFORGE_BACKEND_URL is not set")
        return LiveBackend(url, api_key=os.environ.get("CARBONFORGE_API_KEY"))

    def _post(self, endpoint: str, payload: dict) -> dict:
        try:
            response = self._session.post(
                f"{self.base_url}/{endpoint}",
                json=payload,
                headers=self._headers,
                timeout=self._timeout_s,
            )
        except Exception as exc:  # connection/timeout errors vary by transport
            raise BackendError(f"backend request failed: {exc}") from exc
        if getattr(response, "status_code", 500) != 200:
            raise BackendError(f"backend returned status {response.status_code}")
        try:
            return response.json()
        except Exception as exc:
            raise BackendError("backend returned malformed JSON") from exc

    def search(self, query: str, modality: str | None = None) -> SearchResponse:
        data = self._post("search", {"query": query, "modality": modality})
        try:
            docs = tuple(DocumentFixture.from_dict(d) for d in data["documents"])
            return SearchResponse(documents=docs, tokens=int(data.get("tokens", 0)), cost_ms=0)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed search response: {exc}") from exc

    def answer(self, question: str, documents: Sequence[DocumentFixture]) -> AnswerResponse:
        payload = {"question": question, "documents": [d.to_dict() for d in documents]}
        data = self._post("answer", payload)
        try:
            assertions = tuple(assertion_from_dict(a) for a in data["assertions"])
            return AnswerResponse(assertions=assertions, tokens=int(data.get("tokens", 0)), cost_ms=0)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed answer response: {exc}") from exc


@dataclass(frozen=True)
class RoundRecord:
    index: int
    started_ms: int
    ended_ms: int
    critic_queries: tuple[str, ...]
    doc_ids: tuple[str, ...]
    lci_delta: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "started_ms": self.started_ms,
            "ended_ms": self.ended_ms,
            "critic_queries": list(self.critic_queries),
            "doc_ids": list(self.doc_ids),
            "lci_delta": list(self.lci_delta),
        }

    @staticmethod
    def from_dict(data: Mapping) -> "RoundRecord":
        return RoundRecord(
            index=data["index"],
            started_ms=data["started_ms"],
            ended_ms=data["ended_ms"],
            critic_queries=tuple(data["critic_queries"]),
            doc_ids=tuple(data["doc_ids"]),
            lci_delta=tuple(data["lci_delta"]),
        )


TRANSCRIPT_VERSION = 1


@dataclass(frozen=True)
class AgentTranscript:
    """Complete accounting of one self-play run."""

    product: str
    rounds: tuple[RoundRecord, ...]
    elapsed_ms: int
    documents_read: int
    reasoning_steps: int
    tokens_used: int
    grace_ms: int
    status: str
    budget: Budget
    version: int = TRANSCRIPT_VERSION

    def __post_init__(self):
        if self.reasoning_steps != len(self.rounds):
            raise ValueError("reasoning_steps must equal the number of rounds")
        unique_docs = {doc_id for r in self.rounds for doc_id in r.doc_ids}
        if self.documents_read != len(unique_docs):
            raise ValueError("documents_read must equal the number of distinct doc_ids")
        last = 0
        for r in self.rounds:
            if r.started_ms < last or r.ended_ms < r.started_ms:
                raise ValueError("round timestamps must be monotone")
            last = r.ended_ms

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "product": self.product,
            "status": self.status,
            "elapsed_ms": self.elapsed_ms,
            "documents_read": self.documents_read,
            "reasoning_steps": self.reasoning_steps,
            "tokens_used": self.tokens_used,
            "grace_ms": self.grace_ms,
            "budget": self.budget.to_dict(),
            "rounds": [r.to_dict() for r in self.rounds],
        }

    @staticmethod
    def from_dict(data: Mapping) -> "AgentTranscript":
        return AgentTranscript(
            product=data["product"],
            rounds=tuple(RoundRecord.from_dict(r) for r in data["rounds"]),
            elapsed_ms=data["elapsed_ms"],
            documents_read=data["documents_read"],
            reasoning_steps=data["reasoning_steps"],
            tokens_used=data["tokens_used"],
            grace_ms=data["grace_ms"],
            status=data["status"],
            budget=Budget.from_dict(data["budget"]),
            version=data.get("version", TRANSCRIPT_VERSION),
        )


@dataclass(frozen=True)
class AgentConfig:
    """Protocol knobs: consultation bandwidth and known reference parts."""

    queries_per_round: int = 3
    reference_dims_mm: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.queries_per_round) < 1:
            raise ValueError("queries_per_round must be >= 1")
        object.__setattr__(self, "queries_per_round", int(self.queries_per_round))
        object.__setattr__(
            self,
            "reference_dims_mm",
            {str(k).lower(): (float(w), float(h)) for k, (w, h) in dict(self.reference_dims_mm).items()},
        )


@dataclass(frozen=True)
class SelfplayResult:
    lci: LifeCycleInventory
    transcript: AgentTranscript


class _InventoryState:
    """Accumulates entries and attribute facts as documents are applied.

    Application is a pure fold over documents in read order: entry
    assertions deduplicate on (class, description, quantity, unit), and
    attribute facts follow first-assertion-wins, stamped onto present and
    future entries of the class. Replaying the same documents in the same
    order therefore reproduces the same inventory exactly.
    """

    def __init__(self, da: DataAbstraction):
        self.da = da
        self.entries: list[InventoryEntry] = []
        self.provenance: list[str] = []
        self._seen: set[tuple] = set()
        self._attr_facts: dict[tuple[str, str], object] = {}

    def apply(self, assertions: Sequence, source: str) -> list[str]:
        delta: list[str] = []
        for assertion in assertions:
            if isinstance(assertion, EntryAssertion):
                delta.extend(self._apply_entry(assertion, source))
            elif isinstance(assertion, AttributeAssertion):
                delta.extend(self._apply_attribute(assertion, source))
        return delta

    def _apply_entry(self, assertion: EntryAssertion, source: str) -> list[str]:
        cls = assertion.component_class
        if cls not in self.da.component_classes:
            return [f"!skip entry {assertion.description!r}: class {cls!r} outside abstraction"]
        if assertion.unit not in UNITS:
            return [f"!skip entry {assertion.description!r}: unit {assertion.unit!r} invalid"]
        if not (math.isfinite(assertion.quantity) and assertion.quantity >= 0):
            return [f"!skip entry {assertion.description!r}: quantity {assertion.quantity} invalid"]
        key = (cls, assertion.description, assertion.quantity, assertion.unit)
        if key in self._seen:
            return []
        self._seen.add(key)
        attributes = dict(assertion.attributes)
        for (fact_cls, name), value in self._attr_facts.items():
            if fact_cls == cls and name not in attributes:
                attributes[name] = value
        self.entries.append(
            InventoryEntry(
                component_class=cls,
                description=assertion.description,
                quantity=assertion.quantity,
                unit=assertion.unit,
                attributes=attributes,
            )
        )
        self.provenance.append(source)
        return [f"+entry {cls} {assertion.description!r} x{assertion.quantity:g} {assertion.unit}"]

    def _apply_attribute(self, assertion: AttributeAssertion, source: str) -> list[str]:
        cls = assertion.component_class
        if cls not in self.da.component_classes:
            return [f"!skip attr {assertion.name!r}: class {cls!r} outside abstraction"]
        key = (cls, assertion.name)
        if key in self._attr_facts:
            return []
        self._attr_facts[key] = assertion.value
        delta = [f"~attr {cls}.{assertion.name}={assertion.value}"]
        for i, entry in enumerate(self.entries):
            if entry.component_class == cls and assertion.name not in entry.attributes:
                attributes = dict(entry.attributes)
                attributes[assertion.name] = assertion.value
                self.entries[i] = InventoryEntry(
                    component_class=entry.component_class,
                    description=entry.description,
                    quantity=entry.quantity,
                    unit=entry.unit,
                    attributes=attributes,
                )
        return delta

    def build(self, product: str) -> LifeCycleInventory:
        return LifeCycleInventory(
            product=product,
            da=self.da,
            entries=tuple(self.entries),
            provenance=tuple(self.provenance),
        )


def _image_assertions(doc: DocumentFixture, detector, config: AgentConfig) -> list:
    """Route an image document through the vision pipeline.

    Detections become count entries. When a detection's label matches a
    known reference part, its physical size calibrates the scale and a PCB
    area entry is added from the board outline.
    """
    from . import vision

    if detector is None:
        return []
    detections = detector.detect(doc.payload)
    calibration = None
    for det in detections:
        label = (det.label_text or "").lower()
        if label in config.reference_dims_mm:
            calibration = vision.calibrate_scale(
                config.reference_dims_mm[label], det.bbox_px, ref_id=label
            )
            break
    assertions: list = []
    if calibration is not None:
        board_bbox = vision.find_board_bbox(doc.payload)
        entries = vision.inventory_from_detections(detections, calibration, board_bbox)
        for entry in entries:
            assertions.append(
                EntryAssertion(
                    component_class=entry.component_class,
                    description=entry.description,
                    quantity=entry.quantity,
                    unit=entry.unit,
                    attributes=dict(entry.attributes),
                    source=doc.doc_id,
                )
            )
        return assertions
    for det in detections:
        _, _, w, h = det.bbox_px
        assertions.append(
            EntryAssertion(
                component_class=det.component_class,
                description=det.label_text or f"{det.component_class} {w}x{h} px",
                quantity=1.0,
                unit="count",
                attributes={"w_px": w, "h_px": h, "confidence": det.confidence},
                source=doc.doc_id,
            )
        )
    return assertions


def run_selfplay(
    query: str,
    budget: Budget,
    backend: QueryBackend,
    detector=None,
    embed_provider=None,
    config: AgentConfig | None = None,
    clock=None,
) -> SelfplayResult:
    """Run the critic/stakeholders loop until convergence or budget.

    Budgets are checked between rounds, so a started round finishes on its
    grace; documents are capped hard mid-round. The embed provider is part
    of the pluggable surface for live backends and is unused by the
    fixture path. The returned inventory always validates cleanly.
    """
    config = config or AgentConfig()
    if clock is None:
        clock = VirtualClock() if getattr(backend, "virtual_time", False) else WallClock()
    da = build_data_abstraction(query)
    state = _InventoryState(da)
    read_docs: dict[str, DocumentFixture] = {}
    rounds: list[RoundRecord] = []
    tokens_used = 0
    status = "converged"
    while True:
        if len(rounds) >= budget.max_rounds:
            status = "budget:max_rounds"
            break
        if clock.now_ms() >= budget.max_thinking_ms:
            status = "budget:max_thinking_ms"
            break
        if len(read_docs) >= budget.max_documents:
            status = "budget:max_documents"
            break
        started_ms = clock.now_ms()
        queries = critique(state.build(query), da)
        if not queries:
            rounds.append(
                RoundRecord(
                    index=len(rounds) + 1,
                    started_ms=started_ms,
                    ended_ms=started_ms,
                    critic_queries=(),
                    doc_ids=(),
                    lci_delta=(),
                )
            )
            status = "converged"
            break
        batch = queries[: config.queries_per_round]
        round_doc_ids: list[str] = []
        delta: list[str] = []
        for targeted in batch:
            response = backend.search(targeted.text, None)
            tokens_used += response.tokens
            clock.advance(response.cost_ms)
            unread = [d for d in response.documents if d.doc_id not in read_docs]
            if unread and len(read_docs) < budget.max_documents:
                context = [unread[0]]
                read_docs[context[0].doc_id] = context[0]
                round_doc_ids.append(context[0].doc_id)
            else:
                context = [d for d in response.documents if d.doc_id in read_docs]
            if not context:
                continue
            image_docs = [d for d in context if d.modality == "image"]
            text_docs = [d for d in context if d.modality != "image"]
            if text_docs:
                answer = backend.answer(targeted.text, text_docs)
                tokens_used += answer.tokens
                clock.advance(answer.cost_ms)
                for doc in text_docs:
                    doc_assertions = [a for a in answer.assertions if a.source == doc.doc_id]
                    delta.extend(state.apply(doc_assertions, doc.doc_id))
            for doc in image_docs:
                tokens_used += IMAGE_DOC_TOKENS
                clock.advance(IMAGE_DOC_COST_MS)
                delta.extend(state.apply(_image_assertions(doc, detector, config), doc.doc_id))
        rounds.append(
            RoundRecord(
                index=len(rounds) + 1,
                started_ms=started_ms,
                ended_ms=clock.now_ms(),
                critic_queries=tuple(q.text for q in batch),
                doc_ids=tuple(round_doc_ids),
                lci_delta=tuple(delta),
            )
        )
    elapsed_ms = clock.now_ms()
    transcript = AgentTranscript(
        product=query,
        rounds=tuple(rounds),
        elapsed_ms=elapsed_ms,
        documents_read=len(read_docs),
        reasoning_steps=len(rounds),
        tokens_used=tokens_used,
        grace_ms=max(0, elapsed_ms - budget.max_thinking_ms),
        status=status,
        budget=budget,
    )
    lci = state.build(query)
    leftover = validate_inventory(lci)
    if leftover:
        raise RuntimeError(f"orchestrator produced an invalid inventory: {leftover}")
    return SelfplayResult(lci=lci, transcript=transcript)


def replay_transcript(
    transcript: AgentTranscript,
    corpus: FixtureCorpus,
    detector=None,
    config: AgentConfig | None = None,
) -> LifeCycleInventory:
    """Rebuild the inventory from the transcript's documents alone.

    Because document application is a pure fold in read order, replaying
    the recorded doc_ids reproduces the run's final inventory exactly.
    """
    config = config or AgentConfig()
    da = build_data_abstraction(transcript.product)
    state = _InventoryState(da)
    for round_record in transcript.rounds:
        for doc_id in round_record.doc_ids:
            doc = corpus.documents[doc_id]
            if doc.modality == "image":
                state.apply(_image_assertions(doc, detector, config), doc_id)
            else:
                state.apply(parse_payload_assertions(doc), doc_id)
    return state.build(transcript.product)


@dataclass(frozen=True)
class SuiteCase:
    """A benchmark product: the query plus its reference answer."""

    query: str
    reference_lci: LifeCycleInventory
    reference_cf_kgco2e: float

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "reference_lci": self.reference_lci.to_dict(),
            "reference_cf_kgco2e": self.reference_cf_kgco2e,
        }

    @staticmethod
    def from_dict(data: Mapping) -> "SuiteCase":
        return SuiteCase(
            query=data["query"],
            reference_lci=LifeCycleInventory.from_dict(data["reference_lci"]),
            reference_cf_kgco2e=float(data["reference_cf_kgco2e"]),
        )


def load_suite(directory) -> list[SuiteCase]:
    """Load benchmark cases from a directory of case JSON files."""
    path = Path(directory)
    cases = []
    for case_file in sorted(path.glob("case_*.json")):
        cases.append(SuiteCase.from_dict(json.loads(case_file.read_text(encoding="utf-8"))))
    if not cases:
        raise FileNotFoundError(f"no case_*.json files under {path}")
    return cases


@dataclass(frozen=True)
class ScalingPoint:
    budget: Budget
    n_cases: int
    f1_mean: float
    f1_sd: float
    ape_mean: float
    ape_sd: float
    jsd_mean: float
    l1_mean: float
    tokens_mean: float
    documents_mean: float
    steps_mean: float
    elapsed_ms_mean: float
    converged: int
    assess_failures: int

    def to_dict(self) -> dict:
        out = {"budget": self.budget.to_dict()}
        for name in (
            "n_cases", "f1_mean", "f1_sd", "ape_mean", "ape_sd", "jsd_mean",
            "l1_mean", "tokens_mean", "documents_mean", "steps_mean",
            "elapsed_ms_mean", "converged", "assess_failures",
        ):
            out[name] = getattr(self, name)
        return out


@dataclass(frozen=True)
class ScalingStudy:
    points: tuple[ScalingPoint, ...]

    def to_dict(self) -> dict:
        return {"points": [p.to_dict() for p in self.points]}

    def csv_rows(self) -> tuple[tuple[str, ...], list[tuple]]:
        header = (
            "max_thinking_ms", "max_rounds", "max_documents", "n_cases",
            "f1_mean", "f1_sd", "ape_mean", "ape_sd", "jsd_mean", "l1_mean",
            "tokens_mean", "documents_mean", "steps_mean", "elapsed_ms_mean",
            "converged", "assess_failures",
        )
        rows = [
            (
                p.budget.max_thinking_ms, p.budget.max_rounds, p.budget.max_documents,
                p.n_cases, p.f1_mean, p.f1_sd, p.ape_mean, p.ape_sd, p.jsd_mean,
                p.l1_mean, p.tokens_mean, p.documents_mean, p.steps_mean,
                p.elapsed_ms_mean, p.converged, p.assess_failures,
            )
            for p in self.points
        ]
        return header, rows


def _mean_sd(values: Sequence[float]) -> tuple[float, float]:
    import statistics

    if not values:
        return math.nan, 0.0
    mean = statistics.fmean(values)
    sd = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, sd


def measure_scaling(
    suite: Sequence[SuiteCase],
    budgets: Sequence[Budget],
    backend: QueryBackend,
    detector=None,
    config: AgentConfig | None = None,
    efdb=None,
    assess_options=None,
) -> ScalingStudy:
    """Run the suite under each budget and aggregate quality and cost.

    Footprint error is only computed when an emission factor database is
    supplied; inventory agreement metrics always are.
    """
    from .harness import ape as ape_metric
    from .harness import lci_f1, lci_jsd, lci_l1

    points = []
    for budget in budgets:
        f1s: list[float] = []
        apes: list[float] = []
        jsds: list[float] = []
        l1s: list[float] = []
        tokens: list[float] = []
        docs: list[float] = []
        steps: list[float] = []
        elapsed: list[float] = []
        converged = 0
        assess_failures = 0
        for case in suite:
            result = run_selfplay(case.query, budget, backend, detector=detector, config=config)
            f1s.append(lci_f1(result.lci, case.reference_lci))
            jsds.append(lci_jsd(result.lci, case.reference_lci))
            l1s.append(lci_l1(result.lci, case.reference_lci))
            tokens.append(result.transcript.tokens_used)
            docs.append(result.transcript.documents_read)
            steps.append(result.transcript.reasoning_steps)
            elapsed.append(result.transcript.elapsed_ms)
            converged += result.transcript.status == "converged"
            if efdb is not None:
                from .lcia import AssessError, assess

                try:
                    outcome = assess(result.lci, efdb, assess_options)
                    apes.append(ape_metric(case.reference_cf_kgco2e, outcome.breakdown.total_kgco2e))
                except AssessError:
                    assess_failures += 1
        f1_mean, f1_sd = _mean_sd(f1s)
        ape_mean, ape_sd = _mean_sd(apes)
        points.append(
            ScalingPoint(
                budget=budget,
                n_cases=len(suite),
                f1_mean=f1_mean,
                f1_sd=f1_sd,
                ape_mean=ape_mean,
                ape_sd=ape_sd,
                jsd_mean=_mean_sd(jsds)[0],
                l1_mean=_mean_sd(l1s)[0],
                tokens_mean=_mean_sd(tokens)[0],
                documents_mean=_mean_sd(docs)[0],
                steps_mean=_mean_sd(steps)[0],
                elapsed_ms_mean=_mean_sd(elapsed)[0],
                converged=converged,
                assess_failures=assess_failures,
            )
        )
    return ScalingStudy(points=tuple(points))
