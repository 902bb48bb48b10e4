"""Routing table and final response assembly.

Band -> plan: FAQ serves the canned response only (the retrieval index is
never touched, which is the whole latency point of the fast path);
OutOfDomain runs the full RAG pipeline; Contextual runs both legs and
blends them weighted by the confidence of the winning intent.

The reference blender is deterministic extractive concatenation - the
higher-weighted text first, each segment prefixed with its weight - so
hybrid-path tests are reproducible. An external blender receives the
confidence and both texts inside a prompt-shaped JSON contract.

Degradation on a failed Contextual leg is availability-first: the
surviving leg is served alone (canned-only as kind Canned, RAG-only as
kind Rag).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable

from .classifier import Band, ClassificationResult, classify
from .context import ContextConfig, SessionContext, append_turn
from .intent_store import IntentStore
from .retrieval import (
    DocumentIndex,
    GeneratorUnavailable,
    RagResponse,
    generate_rag_response,
    DEFAULT_TOP_K,
)


class ResponseKind(str, Enum):
    CANNED = "canned"
    RAG = "rag"
    HYBRID = "hybrid"


class BlenderUnavailable(Exception):
    """The external blender failed; the reference blender never raises."""


class CannedFetchFailed(Exception):
    """The winning intent's canned response could not be fetched."""


@dataclass(frozen=True)
class RoutePlan:
    band: Band
    needs_canned: bool
    needs_rag: bool
    blend_confidence: float


@dataclass(frozen=True)
class FinalResponse:
    text: str
    kind: ResponseKind
    intent_id: str | None
    sources: tuple[str, ...]
    latency_ms: float
    turn_index: int
    band: Band
    confidence: float


def plan_route(classification: ClassificationResult) -> RoutePlan:
    band = classification.band
    needs_canned = band in (Band.FAQ, Band.CONTEXTUAL)
    needs_rag = band in (Band.OUT_OF_DOMAIN, Band.CONTEXTUAL)
    return RoutePlan(
        band=band,
        needs_canned=needs_canned,
        needs_rag=needs_rag,
        blend_confidence=min(1.0, max(0.0, classification.confidence)),
    )


def blend_responses(c: float, canned: str, rag: RagResponse,
                    intent_id: str | None = None,
                    blender=None) -> FinalResponse:
    """Blend canned and RAG texts weighted by confidence.

    Reference output: segments sorted by weight descending (canned wins
    ties), each prefixed ``[canned w=X.XX]`` / ``[rag w=X.XX]``. In the
    Contextual band c > 0.5, so the canned segment always leads.
    Latency/turn fields are finalized by the caller.
    """
    if not canned.strip():
        raise ValueError("canned text must be non-empty")
    if not rag.text.strip():
        raise ValueError("rag text must be non-empty")
    if not (0.0 < c < 1.0):
        raise ValueError(f"blend confidence must be in (0, 1), got {c}")
    if blender is not None:
        text = blender.blend(c, canned, rag.text)
    else:
        segments = sorted(
            [("canned", c, canned), ("rag", 1.0 - c, rag.text)],
            key=lambda seg: (-seg[1], seg[0]),
        )
        text = "\n".join(f"[{name} w={weight:.2f}] {body}" for name, weight, body in segments)
    return FinalResponse(
        text=text,
        kind=ResponseKind.HYBRID,
        intent_id=intent_id,
        sources=rag.sources,
        latency_ms=0.0,
        turn_index=-1,
        band=Band.CONTEXTUAL,
        confidence=c,
    )


class ExternalBlender:
    """HTTP blender: {confidence, canned_text, rag_text, instructions} -> {text}.

    The confidence rides inside the request body so the downstream model
    sees the weights in its prompt.
    """

    INSTRUCTIONS = (
        "Merge the two answers into one coherent reply. Weight the canned "
        "answer by {c:.2f} and the retrieved answer by {inv:.2f}."
    )

    def __init__(self, endpoint_url: str, timeout_s: float = 10.0, transport=None):
        self.endpoint_url = endpoint_url
        self.timeout_s = timeout_s
        self._transport = transport

    def blend(self, c: float, canned_text: str, rag_text: str) -> str:
        import httpx

        payload = {
            "confidence": c,
            "canned_text": canned_text,
            "rag_text": rag_text,
            "instructions": self.INSTRUCTIONS.format(c=c, inv=1.0 - c),
        }
        try:
            with httpx.Client(transport=self._transport, timeout=self.timeout_s) as client:
                resp = client.post(self.endpoint_url, json=payload)
                resp.raise_for_status()
                return str(resp.json()["text"])
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise BlenderUnavailable(str(exc)) from exc


class ResponsePipeline:
    """classify -> route -> generate -> (blend) -> append turn.

    Stateless over its inputs except the session append (sessions are
    single-writer) and the winning intent's hit counter. ``classify_fn``
    is injectable so tests can pin confidences per band.
    """

    def __init__(self, store: IntentStore, index: DocumentIndex, provider,
                 context_config: ContextConfig | None = None,
                 top_k: int = DEFAULT_TOP_K,
                 rag_generator=None,
                 blender=None,
                 classify_fn: Callable[..., ClassificationResult] | None = None,
                 timer: Callable[[], float] = time.perf_counter,
                 record_hits: bool = True,
                 clock=None):
        self.store = store
        self.index = index
        self.provider = provider
        self.context_config = context_config or ContextConfig()
        self.top_k = top_k
        self.rag_generator = rag_generator
        self.blender = blender
        self.classify_fn = classify_fn or classify
        self.timer = timer
        self.record_hits = record_hits
        self.clock = clock
        self._snapshot_cache: tuple[int, object] | None = None

    def _snapshot(self):
        """Reuse the last snapshot while the store version is unchanged."""
        version = self.store.version
        cached = self._snapshot_cache
        if cached is None or cached[0] != version:
            cached = (version, self.store.snapshot())
            self._snapshot_cache = cached
        return cached[1]

    def _rag_leg(self, query_text: str, classification: ClassificationResult) -> RagResponse:
        retrieval = self.index.retrieve_top_k(classification.context_embedding, self.top_k)
        return generate_rag_response(
            query_text,
            retrieval,
            classification.context_embedding,
            self.index,
            self.provider,
            generator=self.rag_generator,
            query_embedding=classification.query_embedding,
        )

    def _canned_leg(self, classification: ClassificationResult) -> tuple[str, str]:
        intent_id = classification.best_intent_id
        record = self.store.get(intent_id) if intent_id else None
        if record is None or not record.canned_response.strip():
            raise CannedFetchFailed(str(intent_id))
        return intent_id, record.canned_response

    def respond(self, query_text: str, session: SessionContext) -> FinalResponse:
        started = self.timer()
        snapshot = self._snapshot()
        classification = self.classify_fn(
            query_text, session, snapshot, self.provider, self.context_config
        )
        plan = plan_route(classification)

        if plan.band is Band.FAQ:
            intent_id, canned = self._canned_leg(classification)
            response = FinalResponse(
                text=canned,
                kind=ResponseKind.CANNED,
                intent_id=intent_id,
                sources=(),
                latency_ms=0.0,
                turn_index=-1,
                band=plan.band,
                confidence=plan.blend_confidence,
            )
        elif plan.band is Band.OUT_OF_DOMAIN:
            rag = self._rag_leg(query_text, classification)
            response = FinalResponse(
                text=rag.text,
                kind=ResponseKind.RAG,
                intent_id=None,
                sources=rag.sources,
                latency_ms=0.0,
                turn_index=-1,
                band=plan.band,
                confidence=plan.blend_confidence,
            )
        else:
            response = self._contextual(query_text, classification, plan)

        turn_index = session.next_turn_index
        append_turn(
            session, query_text, response.text, self.provider, self.context_config,
            query_embedding=classification.query_embedding,
            **({"clock": self.clock} if self.clock else {}),
        )
        if (
            self.record_hits
            and response.intent_id is not None
            and plan.band in (Band.FAQ, Band.CONTEXTUAL)
        ):
            self.store.increment_hit(response.intent_id)
        latency_ms = (self.timer() - started) * 1000.0
        return replace(response, latency_ms=latency_ms, turn_index=turn_index)

    def _contextual(self, query_text: str, classification: ClassificationResult,
                    plan: RoutePlan) -> FinalResponse:
        canned_error: Exception | None = None
        rag_error: Exception | None = None
        intent_id: str | None = None
        canned: str | None = None
        rag: RagResponse | None = None
        try:
            intent_id, canned = self._canned_leg(classification)
        except CannedFetchFailed as exc:
            canned_error = exc
        try:
            rag = self._rag_leg(query_text, classification)
        except (GeneratorUnavailable, BlenderUnavailable) as exc:
            rag_error = exc

        if canned is not None and rag is not None:
            try:
                blended = blend_responses(
                    plan.blend_confidence, canned, rag,
                    intent_id=intent_id, blender=self.blender,
                )
                return replace(blended, confidence=plan.blend_confidence)
            except BlenderUnavailable:
                pass  # fall through to canned-only degradation
        if canned is not None:
            return FinalResponse(
                text=canned,
                kind=ResponseKind.CANNED,
                intent_id=intent_id,
                sources=(),
                latency_ms=0.0,
                turn_index=-1,
                band=plan.band,
                confidence=plan.blend_confidence,
            )
        if rag is not None:
            return FinalResponse(
                text=rag.text,
                kind=ResponseKind.RAG,
                intent_id=None,
                sources=rag.sources,
                latency_ms=0.0,
                turn_index=-1,
                band=plan.band,
                confidence=plan.blend_confidence,
            )
        raise rag_error or canned_error  # both legs down: nothing to serve


def respond(query_text: str, session: SessionContext, store: IntentStore,
            index: DocumentIndex, provider, **kwargs) -> FinalResponse:
    """One-shot convenience wrapper around ResponsePipeline.respond."""
    return ResponsePipeline(store, index, provider, **kwargs).respond(query_text, session)
