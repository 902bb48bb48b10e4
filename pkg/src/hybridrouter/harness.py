"""Batch tooling: synthetic corpus generation, three-mode evaluation, load sweep.

The corpus generator mirrors the evaluation mixture the routing engine is
tuned for: 40% predefined-FAQ queries (paraphrase-light exemplar
variants answered by the canned response), 30% contextual queries (an
intent topic mixed with a knowledge-base fact), 30% out-of-domain
queries (knowledge-base topics with no intent), and a 20% follow-up
share spread across categories as second turns referencing their
antecedent pronominally. Every item is validated against the live
classifier at generation time so its category is true by construction,
and generation is fully deterministic under the seed.

Absolute published accuracy/latency figures for systems of this shape
are not reproducible offline; the harness instead verifies orderings
(hybrid accuracy >= canned-only, hybrid latency <= rag-only) and the
metric arithmetic itself.
"""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from math import floor

from .classifier import Band, classify
from .context import ContextConfig, SessionContext, append_turn
from .embedding import tokenize
from .intent_store import IntentStore, IntentStoreSnapshot
from .metrics import (
    BaselineStats,
    Category,
    EvalRecord,
    MetricsReport,
    summarize,
)
from .responder import ResponsePipeline
from .retrieval import DEFAULT_TOP_K, Document, DocumentIndex, generate_rag_response

FALLBACK_TEXT = "sorry, i do not have an answer for that yet"

_STOPWORDS = frozenset(
    "how do i can you my me the a an to for on in of and is are what where "
    "when who why it its this that those these with please want need now".split()
)

_CONTEXTUAL_TEMPLATES = (
    "{exemplar} with {topic}",
    "{exemplar} regarding {topic}",
    "{exemplar} for {topic}",
    "{exemplar} and how it relates to {topic}",
)

_OOD_TEMPLATES = (
    "tell me about {topic}",
    "what should i know about {topic}",
    "explain {topic} to me",
    "give me details on {topic}",
)

_FOLLOWUP_TEMPLATE = "can you elaborate on those {topic} details"


class InsufficientSources(Exception):
    """Store/kb too small to honor the requested corpus counts."""


@dataclass(frozen=True)
class CorpusSpec:
    total_queries: int
    faq_fraction: float = 0.40
    contextual_fraction: float = 0.30
    ood_fraction: float = 0.30
    followup_fraction: float = 0.20
    seed: int = 0

    def __post_init__(self) -> None:
        if self.total_queries < 1:
            raise ValueError("total_queries must be >= 1")
        fractions = (self.faq_fraction, self.contextual_fraction, self.ood_fraction)
        if any(f < 0 for f in fractions):
            raise ValueError("category fractions must be non-negative")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ValueError("category fractions must sum to 1.0")
        if not (0.0 <= self.followup_fraction < 1.0):
            raise ValueError("followup_fraction must be in [0, 1)")


@dataclass
class CorpusItem:
    query_id: str
    session_id: str
    turn_order: int
    category: Category
    query_text: str
    ground_truth_text: str
    intent_id: str | None = None
    doc_id: str | None = None
    is_followup: bool = False

    def to_json_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "session_id": self.session_id,
            "turn_order": self.turn_order,
            "category": self.category.value,
            "query_text": self.query_text,
            "ground_truth_text": self.ground_truth_text,
            "intent_id": self.intent_id,
            "doc_id": self.doc_id,
            "is_followup": self.is_followup,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CorpusItem":
        return cls(
            query_id=data["query_id"],
            session_id=data["session_id"],
            turn_order=int(data["turn_order"]),
            category=Category(data["category"]),
            query_text=data["query_text"],
            ground_truth_text=data["ground_truth_text"],
            intent_id=data.get("intent_id"),
            doc_id=data.get("doc_id"),
            is_followup=bool(data.get("is_followup", False)),
        )


def allocate_counts(total: int, fractions: list[float]) -> list[int]:
    """Floor each share, then hand remainders to the largest fractional parts
    (ties to the earlier category)."""
    raw = [total * f for f in fractions]
    counts = [floor(r) for r in raw]
    remainder = total - sum(counts)
    order = sorted(range(len(fractions)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:remainder]:
        counts[i] += 1
    return counts


def _topic_tokens(text: str, limit: int = 3) -> list[str]:
    distinct = [t for t in tokenize(text) if t not in _STOPWORDS]
    return distinct[-limit:] if distinct else tokenize(text)[-limit:]


def _shuffled_variant(text: str, rng: random.Random) -> str:
    """Token-order shuffle: a distinct surface form with the identical
    bag-of-tokens embedding, so the verified band is preserved."""
    tokens = tokenize(text)
    rng.shuffle(tokens)
    return " ".join(tokens)


class _CorpusBuilder:
    def __init__(self, spec: CorpusSpec, snapshot: IntentStoreSnapshot,
                 kb_docs: list[Document], provider, context_config: ContextConfig):
        self.spec = spec
        self.snapshot = snapshot
        self.kb_docs = sorted(kb_docs, key=lambda d: d.doc_id)
        self.provider = provider
        self.config = context_config
        self.rng = random.Random(spec.seed)
        self.index = DocumentIndex(self.kb_docs) if self.kb_docs else None

    def _classify(self, text: str):
        return classify(text, None, self.snapshot, self.provider, self.config)

    # -- per-category validated prototypes ----------------------------------

    def _faq_prototypes(self) -> list[tuple[str, str, str]]:
        """(intent_id, exemplar text, canned) for every in-FAQ-band exemplar."""
        protos = []
        for rec in self.snapshot.records:
            for exemplar in rec.exemplar_texts:
                result = self._classify(exemplar)
                if result.band is Band.FAQ and result.best_intent_id == rec.intent_id:
                    protos.append((rec.intent_id, exemplar, rec.canned_response))
        if not protos:
            raise InsufficientSources("no intent exemplar classifies into the FAQ band")
        return protos

    def _contextual_prototypes(self) -> list[tuple[str, str, str, str]]:
        """(intent_id, query, ground truth, doc_id) validated combos."""
        protos = []
        for rec in self.snapshot.records:
            for doc in self.kb_docs:
                accepted = None
                for template in _CONTEXTUAL_TEMPLATES:
                    query = template.format(exemplar=rec.exemplar_texts[0], topic=doc.title)
                    result = self._classify(query)
                    if result.band is not Band.CONTEXTUAL:
                        continue
                    if result.best_intent_id != rec.intent_id:
                        continue
                    retrieval = self.index.retrieve_top_k(result.context_embedding, 1)
                    if retrieval.ranked and retrieval.ranked[0][0] == doc.doc_id:
                        accepted = query
                        break
                if accepted is not None:
                    truth = rec.canned_response + " " + doc.body
                    protos.append((rec.intent_id, accepted, truth, doc.doc_id))
        if not protos:
            raise InsufficientSources("no (intent, document) pair lands in the contextual band")
        return protos

    def _ood_prototypes(self) -> list[tuple[str, str, str]]:
        """(query, ground truth, doc_id) validated out-of-domain combos."""
        protos = []
        for doc in self.kb_docs:
            for template in _OOD_TEMPLATES:
                query = template.format(topic=doc.title)
                result = self._classify(query)
                if result.band is not Band.OUT_OF_DOMAIN:
                    continue
                retrieval = self.index.retrieve_top_k(result.context_embedding, 1)
                if retrieval.ranked and retrieval.ranked[0][0] == doc.doc_id:
                    protos.append((query, doc.body, doc.doc_id))
                    break
        if not protos:
            raise InsufficientSources("no knowledge-base topic classifies out of domain")
        return protos

    # -- assembly -------------------------------------------------------------

    def build(self) -> list[CorpusItem]:
        spec = self.spec
        counts = allocate_counts(
            spec.total_queries,
            [spec.faq_fraction, spec.contextual_fraction, spec.ood_fraction],
        )
        followup_total = floor(spec.total_queries * spec.followup_fraction)
        followup_counts = allocate_counts(
            followup_total,
            [spec.faq_fraction, spec.contextual_fraction, spec.ood_fraction],
        )
        # a follow-up needs a standalone antecedent in its own category
        for i in range(3):
            followup_counts[i] = min(followup_counts[i], counts[i] // 2)

        category_protos = {
            Category.PREDEFINED_FAQ: (
                self._faq_prototypes() if counts[0] else []
            ),
            Category.CONTEXTUAL: (
                self._contextual_prototypes() if counts[1] else []
            ),
            Category.OUT_OF_DOMAIN: (
                self._ood_prototypes() if counts[2] else []
            ),
        }

        items: list[CorpusItem] = []
        session_seq = 0
        query_seq = 0

        def next_ids() -> tuple[str, str]:
            nonlocal session_seq, query_seq
            sid = f"sess-{session_seq:05d}"
            qid = f"q-{query_seq:06d}"
            session_seq += 1
            query_seq += 1
            return sid, qid

        plan = [
            (Category.PREDEFINED_FAQ, counts[0], followup_counts[0]),
            (Category.CONTEXTUAL, counts[1], followup_counts[1]),
            (Category.OUT_OF_DOMAIN, counts[2], followup_counts[2]),
        ]
        for category, count, followups in plan:
            protos = category_protos[category]
            standalone = count - followups
            anchors: list[CorpusItem] = []
            for i in range(standalone):
                proto = protos[i % len(protos)]
                sid, qid = next_ids()
                if category is Category.PREDEFINED_FAQ:
                    intent_id, text, truth = proto
                    doc_id = None
                elif category is Category.CONTEXTUAL:
                    intent_id, text, truth, doc_id = proto
                else:
                    text, truth, doc_id = proto
                    intent_id = None
                # cycle the canonical text first, then shuffled variants
                query_text = text if i < len(protos) else _shuffled_variant(text, self.rng)
                item = CorpusItem(
                    query_id=qid, session_id=sid, turn_order=0, category=category,
                    query_text=query_text, ground_truth_text=truth,
                    intent_id=intent_id, doc_id=doc_id,
                )
                items.append(item)
                anchors.append(item)
            chosen = self.rng.sample(anchors, followups) if followups else []
            for anchor in chosen:
                nonlocal_sid = anchor.session_id
                qid = f"q-{query_seq:06d}"
                query_seq += 1
                topic = " ".join(_topic_tokens(anchor.query_text))
                items.append(CorpusItem(
                    query_id=qid, session_id=nonlocal_sid, turn_order=1,
                    category=category,
                    query_text=_FOLLOWUP_TEMPLATE.format(topic=topic),
                    ground_truth_text=anchor.ground_truth_text,
                    intent_id=anchor.intent_id, doc_id=anchor.doc_id,
                    is_followup=True,
                ))

        items.sort(key=lambda it: (it.session_id, it.turn_order))
        return items


def generate_corpus(spec: CorpusSpec, snapshot: IntentStoreSnapshot,
                    kb_docs: list[Document], provider,
                    context_config: ContextConfig | None = None) -> list[CorpusItem]:
    """Build the evaluation corpus; deterministic under ``spec.seed``."""
    if not snapshot.records and spec.faq_fraction > 0:
        raise InsufficientSources("intent store is empty")
    if not kb_docs and (spec.contextual_fraction > 0 or spec.ood_fraction > 0):
        raise InsufficientSources("knowledge base is empty")
    builder = _CorpusBuilder(
        spec, snapshot, kb_docs, provider, context_config or ContextConfig()
    )
    return builder.build()


def write_corpus(items: list[CorpusItem], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps(item.to_json_dict(), sort_keys=True) + "\n")


def read_corpus(path) -> list[CorpusItem]:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                items.append(CorpusItem.from_json_dict(json.loads(line)))
    return items


# --- evaluation replay ---------------------------------------------------------


EVAL_MODES = ("canned_only", "rag_only", "hybrid")


def _replay_session(mode: str, session_items: list[CorpusItem], *,
                    snapshot: IntentStoreSnapshot, index: DocumentIndex,
                    provider, config: ContextConfig,
                    pipeline: ResponsePipeline | None,
                    top_k: int, timer, latency_pad_ms: float,
                    feedback_engine=None) -> list[EvalRecord]:
    records: list[EvalRecord] = []
    session = SessionContext(session_id=session_items[0].session_id)
    for item in session_items:
        started = timer()
        kind = "error"
        text = ""
        try:
            if mode == "canned_only":
                result = classify(item.query_text, None, snapshot, provider, config)
                if result.band is Band.OUT_OF_DOMAIN:
                    text, kind = FALLBACK_TEXT, "canned"
                else:
                    text = snapshot.record(result.best_intent_id).canned_response
                    kind = "canned"
            elif mode == "rag_only":
                result = classify(item.query_text, session, snapshot, provider, config)
                retrieval = index.retrieve_top_k(result.context_embedding, top_k)
                rag = generate_rag_response(
                    item.query_text, retrieval, result.context_embedding, index, provider
                )
                text, kind = rag.text, "rag"
                append_turn(session, item.query_text, text, provider, config)
            else:
                response = pipeline.respond(item.query_text, session)
                text, kind = response.text, response.kind.value
                if feedback_engine is not None:
                    feedback_engine.note_interaction(
                        session.session_id, response.turn_index,
                        response.intent_id if response.band is not Band.OUT_OF_DOMAIN else None,
                        response.band,
                    )
        except Exception:
            text, kind = "", "error"
        latency_ms = (timer() - started) * 1000.0 + latency_pad_ms
        records.append(EvalRecord(
            query_id=item.query_id,
            category=item.category,
            ground_truth_text=item.ground_truth_text,
            response_text=text,
            response_kind=kind,
            latency_ms=latency_ms,
            session_id=item.session_id,
            turn_index=item.turn_order,
        ))
    return records


def run_eval(items: list[CorpusItem], mode: str, store: IntentStore,
             index: DocumentIndex, provider, *,
             context_config: ContextConfig | None = None,
             top_k: int = DEFAULT_TOP_K,
             workers: int = 4,
             timer=time.perf_counter,
             baseline: BaselineStats | None = None,
             with_feedback: bool = False,
             feedback_engine=None,
             latency_pad_ms: float = 0.0) -> tuple[MetricsReport, list[EvalRecord]]:
    """Replay the corpus through one pipeline flavor and score it.

    Evaluation is read-only: the hybrid pipeline runs against a private
    copy of the store unless ``with_feedback`` is set, in which case
    interactions are attributed on the live store through
    ``feedback_engine``. Per-record component errors are recorded as
    unresolved rather than aborting the replay. ``latency_pad_ms`` is a
    diagnostics hook (used to test trend detection), added to every
    record's measured latency.

    Without an explicit ``baseline`` the canned-only system is replayed on
    the same corpus to anchor cost efficiency (CE of canned-only itself is
    1 by self-comparison).
    """
    if mode not in EVAL_MODES:
        raise ValueError(f"mode must be one of {EVAL_MODES}, got {mode!r}")
    config = context_config or ContextConfig()
    snapshot = store.snapshot()

    pipeline = None
    if mode == "hybrid":
        pipeline_store = (
            store if with_feedback
            else IntentStore.from_snapshot(snapshot, provider, cache_capacity=0)
        )
        pipeline = ResponsePipeline(
            pipeline_store, index, provider,
            context_config=config, top_k=top_k, timer=timer,
            record_hits=with_feedback,
        )
    if not with_feedback:
        feedback_engine = None

    sessions: dict[str, list[CorpusItem]] = {}
    for item in items:
        sessions.setdefault(item.session_id, []).append(item)
    for session_items in sessions.values():
        session_items.sort(key=lambda it: it.turn_order)

    records: list[EvalRecord] = []
    replay = lambda group: _replay_session(  # noqa: E731
        mode, group, snapshot=snapshot, index=index, provider=provider,
        config=config, pipeline=pipeline, top_k=top_k, timer=timer,
        latency_pad_ms=latency_pad_ms, feedback_engine=feedback_engine,
    )
    groups = list(sessions.values())
    if workers <= 1:
        for group in groups:
            records.extend(replay(group))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(replay, groups):
                records.extend(result)
    records.sort(key=lambda rec: rec.query_id)

    if baseline is None:
        if mode == "canned_only":
            interim = summarize([replace_resolved(r) for r in records], provider)
            baseline = BaselineStats(
                latency_ms=interim.mean_latency_ms, accuracy_pct=max(interim.accuracy_pct, 1e-9)
            )
        else:
            base_report, _ = run_eval(
                items, "canned_only", store, index, provider,
                context_config=config, top_k=top_k, workers=workers, timer=timer,
                baseline=BaselineStats(latency_ms=1.0, accuracy_pct=100.0),
            )
            baseline = BaselineStats(
                latency_ms=base_report.mean_latency_ms,
                accuracy_pct=max(base_report.accuracy_pct, 1e-9),
            )
    report = summarize(records, provider, baseline=baseline)
    return report, records


def replace_resolved(record: EvalRecord) -> EvalRecord:
    """Shallow copy so interim scoring does not mark the caller's records."""
    return EvalRecord(**{**record.to_json_dict(), "category": record.category})


# --- load sweep -----------------------------------------------------------------


@dataclass(frozen=True)
class LoadRow:
    load: int
    accuracy_pct: float
    mean_latency_ms: float
    cost_efficiency: float


@dataclass
class LoadReport:
    rows: list[LoadRow]
    worker_count: int
    flags: list[str] = field(default_factory=list)

    def render_table(self) -> str:
        headers = ["query_load", "accuracy_pct", "mean_latency_ms", "cost_efficiency"]
        body = [
            [f"{row.load:,}", f"{row.accuracy_pct:.1f}", f"{row.mean_latency_ms:.3f}",
             f"{row.cost_efficiency:.2f}"]
            for row in self.rows
        ]
        widths = [max(len(headers[i]), *(len(r[i]) for r in body)) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        lines += ["  ".join(c.ljust(widths[i]) for i, c in enumerate(row)) for row in body]
        lines.append(f"workers: {self.worker_count}")
        lines += [f"flag: {flag}" for flag in self.flags]
        return "\n".join(lines)


def run_load(levels: list[int], spec_template: CorpusSpec, store: IntentStore,
             kb_docs: list[Document], provider, *,
             context_config: ContextConfig | None = None,
             top_k: int = DEFAULT_TOP_K,
             workers: int = 4,
             timer=time.perf_counter,
             latency_pad_by_level: dict[int, float] | None = None) -> LoadReport:
    """Run the hybrid pipeline at increasing query loads (one warmed process).

    Emits one row (load, accuracy, mean latency, CE vs the canned-only
    baseline measured at the same level) per level and flags any level
    whose mean latency drops below its predecessor, since the expected
    trend under growing load is monotone non-decreasing latency.
    ``latency_pad_by_level`` is the diagnostics hook for exercising the
    flag logic.
    """
    if levels != sorted(levels) or len(set(levels)) != len(levels):
        raise ValueError("levels must be strictly ascending")
    config = context_config or ContextConfig()
    index = DocumentIndex(kb_docs)
    pads = latency_pad_by_level or {}

    rows: list[LoadRow] = []
    flags: list[str] = []
    previous_latency: float | None = None
    for level in levels:
        spec = replace(spec_template, total_queries=level)
        items = generate_corpus(spec, store.snapshot(), kb_docs, provider, config)
        pad = pads.get(level, 0.0)
        report, _ = run_eval(
            items, "hybrid", store, index, provider,
            context_config=config, top_k=top_k, workers=workers, timer=timer,
            latency_pad_ms=pad,
        )
        rows.append(LoadRow(
            load=level,
            accuracy_pct=report.accuracy_pct,
            mean_latency_ms=report.mean_latency_ms,
            cost_efficiency=report.cost_efficiency,
        ))
        if previous_latency is not None and report.mean_latency_ms < previous_latency:
            flags.append(
                f"non-monotone latency: {level:,} ran at {report.mean_latency_ms:.3f} ms "
                f"below the previous level's {previous_latency:.3f} ms"
            )
        previous_latency = rows[-1].mean_latency_ms
    return LoadReport(rows=rows, worker_count=workers, flags=flags)
