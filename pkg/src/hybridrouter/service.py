"""HTTP face: chat, feedback, admin intent management, metrics.

Endpoints (JSON request/response, synchronous):

* ``POST /v1/chat``            - route one message inside a session
* ``POST /v1/feedback``        - thumbs up/down for a served turn
* ``GET/POST /v1/admin/intents`` and ``DELETE /v1/admin/intents/{id}``
* ``GET /v1/admin/drafts``, ``POST /v1/admin/drafts/{id}/activate``
* ``GET /v1/admin/thresholds`` - live per-intent tau values + history
* ``GET /v1/metrics``          - operational counters

Admin routes take a static bearer token. Sessions are in-memory with
idle eviction; intents and thresholds are persisted to the store file on
every mutation so they survive a restart. A small LRU keyed by the
normalized query text serves warm FAQ answers without re-running the
pipeline; entries are invalidated whenever their intent mutates.
"""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .classifier import Band
from .config import AppConfig, load_config
from .context import SessionContext
from .embedding import EmptyText, build_provider, tokenize
from .feedback import (
    FeedbackEngine,
    FeedbackEvent,
    Polarity,
    UnknownTurn,
)
from .intent_store import (
    IntentRecord,
    IntentStore,
    LRUCache,
    UnknownIntent,
    ValidationFailed,
)
from .responder import ResponseKind, ResponsePipeline
from .retrieval import DocumentIndex, load_kb


class ChatRequest(BaseModel):
    session_id: str = Field(min_length=1, max_length=128)
    text: str


class FeedbackRequest(BaseModel):
    session_id: str
    turn_index: int
    polarity: Polarity


class IntentUpsertRequest(BaseModel):
    intent_id: str
    display_name: str = ""
    exemplar_texts: list[str]
    canned_response: str


class DraftActivateRequest(BaseModel):
    canned_response: str
    intent_id: str | None = None


@dataclass
class _CachedAnswer:
    intent_id: str
    text: str
    confidence: float
    band: str


class ResponseCache:
    """LRU over normalized FAQ queries, invalidated per intent mutation."""

    def __init__(self, capacity: int):
        self._lru = LRUCache(capacity)
        self._keys_by_intent: dict[str, set[str]] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> _CachedAnswer | None:
        return self._lru.get(key)

    def put(self, key: str, answer: _CachedAnswer) -> None:
        self._lru.put(key, answer)
        with self._lock:
            self._keys_by_intent.setdefault(answer.intent_id, set()).add(key)

    def invalidate_intent(self, intent_id: str) -> None:
        with self._lock:
            keys = self._keys_by_intent.pop(intent_id, set())
        for key in keys:
            self._lru.invalidate(key)

    @property
    def stats(self) -> tuple[int, int]:
        return self._lru.hits, self._lru.misses


@dataclass
class _Session:
    context: SessionContext
    lock: threading.Lock
    last_access: float


class ServiceState:
    """Everything the endpoints share; built once per app."""

    def __init__(self, config: AppConfig, provider=None, store=None, index=None,
                 use_demo_fixtures: bool = False):
        self.config = config
        self.provider = provider or build_provider(config.embedding)
        if store is not None:
            self.store = store
        elif os.path.exists(config.paths.store):
            self.store = IntentStore.load(
                config.paths.store, self.provider,
                cache_capacity=config.store_cache_capacity,
            )
        elif use_demo_fixtures:
            from .fixtures import build_demo_store

            self.store = build_demo_store(
                self.provider, cache_capacity=config.store_cache_capacity
            )
        else:
            self.store = IntentStore(
                self.provider, cache_capacity=config.store_cache_capacity
            )
        if index is not None:
            self.index = index
        elif os.path.exists(config.paths.kb):
            self.index = DocumentIndex(load_kb(config.paths.kb, self.provider))
        elif use_demo_fixtures:
            from .fixtures import build_demo_kb

            self.index = DocumentIndex(build_demo_kb(self.provider))
        else:
            self.index = DocumentIndex([])

        self.engine = FeedbackEngine(self.store, config.feedback)
        self.pipeline = ResponsePipeline(
            self.store, self.index, self.provider,
            context_config=config.context, top_k=config.retrieval_top_k,
        )
        self.response_cache = ResponseCache(config.service.response_cache_capacity)
        self.store.add_listener(lambda intent_id, kind: self.response_cache.invalidate_intent(intent_id))

        self.sessions: dict[str, _Session] = {}
        self._sessions_lock = threading.Lock()
        self.requests_total = 0
        self.requests_by_band: dict[str, int] = {}
        self.requests_by_kind: dict[str, int] = {}
        self.latencies_ms: list[float] = []

    # -- sessions -------------------------------------------------------------

    def session(self, session_id: str) -> _Session:
        with self._sessions_lock:
            self._sweep_idle_locked()
            if session_id not in self.sessions:
                self.sessions[session_id] = _Session(
                    context=SessionContext(session_id=session_id),
                    lock=threading.Lock(),
                    last_access=time.monotonic(),
                )
            sess = self.sessions[session_id]
            sess.last_access = time.monotonic()
            return sess

    def _sweep_idle_locked(self) -> None:
        idle_s = self.config.service.session_idle_minutes * 60.0
        now = time.monotonic()
        for sid in [s for s, sess in self.sessions.items() if now - sess.last_access > idle_s]:
            del self.sessions[sid]
            self.engine.forget_session(sid)

    def persist_store(self) -> None:
        self.store.persist(self.config.paths.store)

    def persist_evolution(self) -> None:
        self.engine.dump_unhandled(self.config.paths.unhandled)
        self.engine.dump_drafts(self.config.paths.drafts)


def create_app(config: AppConfig | None = None, *, provider=None, store=None,
               index=None, use_demo_fixtures: bool = False) -> FastAPI:
    config = config or load_config()
    state = ServiceState(
        config, provider=provider, store=store, index=index,
        use_demo_fixtures=use_demo_fixtures,
    )
    app = FastAPI(title="hybridrouter")
    app.state.router_state = state

    def require_admin(request: Request) -> None:
        expected = f"Bearer {config.service.admin_token}"
        if request.headers.get("authorization") != expected:
            raise HTTPException(status_code=401, detail="admin token required")

    @app.exception_handler(ValidationFailed)
    async def _validation_failed(_request, exc: ValidationFailed):
        return JSONResponse(status_code=422, content={"error": "validation_failed",
                                                      "fields": exc.fields})

    # -- chat -------------------------------------------------------------------

    @app.post("/v1/chat")
    def chat(body: ChatRequest):
        if not tokenize(body.text):
            return JSONResponse(status_code=400, content={"error": "empty_text"})
        sess = state.session(body.session_id)
        with sess.lock:
            started = time.perf_counter()
            cache_key = " ".join(tokenize(body.text))
            cached = state.response_cache.get(cache_key)
            if cached is not None:
                turn_index = sess.context.next_turn_index
                from .context import append_turn

                append_turn(sess.context, body.text, cached.text,
                            state.provider, config.context)
                state.store.increment_hit(cached.intent_id)
                update = state.engine.note_interaction(
                    body.session_id, turn_index, cached.intent_id, Band(cached.band)
                )
                if update is not None:
                    state.persist_store()
                state.response_cache.put(cache_key, cached)
                latency_ms = (time.perf_counter() - started) * 1000.0
                envelope = {
                    "text": cached.text, "kind": ResponseKind.CANNED.value,
                    "intent_id": cached.intent_id, "confidence": cached.confidence,
                    "band": cached.band, "sources": [], "latency_ms": latency_ms,
                    "turn_index": turn_index, "cache_hit": True,
                }
            else:
                try:
                    response = state.pipeline.respond(body.text, sess.context)
                except EmptyText:
                    return JSONResponse(status_code=400, content={"error": "empty_text"})
                if response.band is Band.OUT_OF_DOMAIN:
                    state.engine.log_unhandled_query(
                        body.text, state.provider.embed_text(body.text)
                    )
                    state.persist_evolution()
                update = state.engine.note_interaction(
                    body.session_id, response.turn_index,
                    response.intent_id if response.band is not Band.OUT_OF_DOMAIN else None,
                    response.band,
                )
                if update is not None:
                    state.persist_store()
                if response.kind is ResponseKind.CANNED and response.band is Band.FAQ:
                    state.response_cache.put(cache_key, _CachedAnswer(
                        intent_id=response.intent_id, text=response.text,
                        confidence=response.confidence, band=response.band.value,
                    ))
                envelope = {
                    "text": response.text, "kind": response.kind.value,
                    "intent_id": response.intent_id, "confidence": response.confidence,
                    "band": response.band.value, "sources": list(response.sources),
                    "latency_ms": response.latency_ms, "turn_index": response.turn_index,
                    "cache_hit": False,
                }
        state.requests_total += 1
        state.requests_by_band[envelope["band"]] = state.requests_by_band.get(envelope["band"], 0) + 1
        state.requests_by_kind[envelope["kind"]] = state.requests_by_kind.get(envelope["kind"], 0) + 1
        state.latencies_ms.append(envelope["latency_ms"])
        return envelope

    # -- feedback ----------------------------------------------------------------

    @app.post("/v1/feedback")
    def feedback(body: FeedbackRequest):
        turn = state.engine.get_turn(body.session_id, body.turn_index)
        if turn is None:
            return JSONResponse(status_code=404, content={"error": "unknown_turn"})
        intent_id, _generation, band = turn
        event = FeedbackEvent(
            session_id=body.session_id, turn_index=body.turn_index,
            intent_id=intent_id, polarity=body.polarity, band=band,
            timestamp=state.engine.clock(),
        )
        try:
            counted = state.engine.record_feedback(event)
        except UnknownTurn:
            return JSONResponse(status_code=404, content={"error": "unknown_turn"})
        return {"status": "recorded", "counted": counted, "intent_id": intent_id}

    # -- admin -------------------------------------------------------------------

    @app.get("/v1/admin/intents", dependencies=[Depends(require_admin)])
    def list_intents():
        snap = state.store.snapshot()
        return {
            "version": snap.version,
            "tau_ood": snap.tau_ood,
            "intents": [
                {
                    "intent_id": rec.intent_id,
                    "display_name": rec.display_name,
                    "exemplar_texts": rec.exemplar_texts,
                    "canned_response": rec.canned_response,
                    "tau_faq": rec.tau_faq,
                    "hit_count": rec.hit_count,
                    "created_at": rec.created_at,
                    "updated_at": rec.updated_at,
                }
                for rec in snap.records
            ],
        }

    @app.post("/v1/admin/intents", dependencies=[Depends(require_admin)])
    def upsert_intent(body: IntentUpsertRequest):
        record = IntentRecord(
            intent_id=body.intent_id,
            display_name=body.display_name or body.intent_id,
            exemplar_texts=body.exemplar_texts,
            canned_response=body.canned_response,
        )
        snap = state.store.upsert_intent(record)
        state.persist_store()
        return {"status": "ok", "version": snap.version, "intent_id": body.intent_id}

    @app.delete("/v1/admin/intents/{intent_id}", dependencies=[Depends(require_admin)])
    def delete_intent(intent_id: str):
        try:
            snap = state.store.delete_intent(intent_id)
        except UnknownIntent:
            return JSONResponse(status_code=404, content={"error": "unknown_intent"})
        state.persist_store()
        return {"status": "ok", "version": snap.version}

    @app.get("/v1/admin/drafts", dependencies=[Depends(require_admin)])
    def list_drafts():
        return {
            "drafts": [d.to_json_dict() for d in state.engine.drafts.values()],
            "clusters": [
                {
                    "cluster_id": c.cluster_id,
                    "size": c.size,
                    "flagged": c.flagged,
                    "members": c.member_texts,
                }
                for c in state.engine.unhandled.clusters
            ],
        }

    @app.post("/v1/admin/drafts/{draft_id}/activate", dependencies=[Depends(require_admin)])
    def activate_draft(draft_id: str, body: DraftActivateRequest):
        draft = state.engine.drafts.get(draft_id)
        if draft is None:
            return JSONResponse(status_code=404, content={"error": "unknown_draft"})
        if draft.status == "activated":
            return JSONResponse(status_code=400, content={"error": "already_activated"})
        intent_id = body.intent_id or draft_id.replace("draft-", "intent-")
        record = IntentRecord(
            intent_id=intent_id,
            display_name=draft.display_name,
            exemplar_texts=list(draft.exemplar_texts),
            canned_response=body.canned_response,
        )
        snap = state.store.upsert_intent(record)
        draft.status = "activated"
        state.persist_store()
        state.persist_evolution()
        return {"status": "activated", "intent_id": intent_id, "version": snap.version}

    @app.get("/v1/admin/thresholds", dependencies=[Depends(require_admin)])
    def thresholds():
        snap = state.store.snapshot()
        return {
            "tau_ood": snap.tau_ood,
            "intents": [
                {
                    "intent_id": rec.intent_id,
                    "tau_faq": rec.tau_faq,
                    "updated_at": rec.updated_at,
                    "history": [
                        {
                            "timestamp": upd.timestamp,
                            "old_tau": upd.old_tau,
                            "new_tau": upd.new_tau,
                            "nfr": upd.nfr,
                            "pfr": upd.pfr,
                        }
                        for upd in state.engine.tau_history.get(rec.intent_id, [])
                    ],
                }
                for rec in snap.records
            ],
        }

    # -- metrics -------------------------------------------------------------------

    @app.get("/v1/metrics")
    def metrics():
        cache_hits, cache_misses = state.response_cache.stats
        latencies = state.latencies_ms
        return {
            "requests_total": state.requests_total,
            "requests_by_band": state.requests_by_band,
            "requests_by_kind": state.requests_by_kind,
            "response_cache": {"hits": cache_hits, "misses": cache_misses},
            "store_version": state.store.version,
            "intent_count": len(state.store.snapshot().records),
            "sessions_active": len(state.sessions),
            "mean_latency_ms": (sum(latencies) / len(latencies)) if latencies else None,
            "retrieve_calls": state.index.retrieve_calls,
        }

    frontend_dist = config.service.frontend_dist
    if frontend_dist and os.path.isdir(frontend_dist):
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=frontend_dist, html=True), name="ui")

    return app
