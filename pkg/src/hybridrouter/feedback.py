"""Feedback ingestion, threshold retuning, and intent evolution.

Two loops run here:

* Threshold loop - every served response attributed to an intent counts
  as one interaction in that intent's window. When a window reaches its
  size (default 100 interactions) the negative/positive feedback rates
  are computed and the intent's tau_faq moves by
  ``learning_rate * (NFR - PFR)``, clamped into [tau_min, tau_max], then
  the window resets. Interactions without explicit thumbs count in the
  denominator only, diluting both rates.

* Intent evolution - out-of-domain queries are clustered greedily by
  nearest centroid (cosine >= cluster_sim joins, else a new cluster). A
  cluster whose size reaches the flag threshold is flagged and can be
  promoted to a draft intent; activation stays a human admin action.
"""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Callable

import numpy as np

from .classifier import Band
from .embedding import cosine_similarity, normalize
from .intent_store import DEFAULT_TAU_FAQ, IntentStore, UnknownIntent

DEFAULT_LEARNING_RATE = 0.05
DEFAULT_WINDOW_SIZE = 100
DEFAULT_TAU_MIN = 0.55
DEFAULT_TAU_MAX = 0.98
DEFAULT_CLUSTER_SIM = 0.8
DEFAULT_FLAG_SIZE = 5
TAU_DECIMALS = 6  # quantize updates so arithmetic like 0.85 -> 0.86 is exact


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


class UnknownTurn(Exception):
    """Feedback referenced a turn that was never served (or was evicted)."""


class EmptyWindow(Exception):
    """Rates are undefined for a window with zero interactions."""


class ClusterNotFlagged(Exception):
    """Only flagged clusters can be promoted to draft intents."""


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class FeedbackConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    window_size: int = DEFAULT_WINDOW_SIZE
    tau_min: float = DEFAULT_TAU_MIN
    tau_max: float = DEFAULT_TAU_MAX
    cluster_sim: float = DEFAULT_CLUSTER_SIM
    flag_size: int = DEFAULT_FLAG_SIZE

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if not (0.5 < self.tau_min < self.tau_max < 1.0):
            raise ValueError("need 0.5 < tau_min < tau_max < 1")
        if not (0.0 < self.cluster_sim < 1.0):
            raise ValueError("cluster_sim must be in (0, 1)")
        if self.flag_size < 1:
            raise ValueError("flag_size must be >= 1")


@dataclass(frozen=True)
class FeedbackEvent:
    session_id: str
    turn_index: int
    intent_id: str | None
    polarity: Polarity
    band: Band
    timestamp: str = ""


@dataclass
class FeedbackWindow:
    intent_id: str
    window_size: int = DEFAULT_WINDOW_SIZE
    total_queries: int = 0
    positive_count: int = 0
    negative_count: int = 0
    generation: int = 0

    def reset(self) -> None:
        self.total_queries = 0
        self.positive_count = 0
        self.negative_count = 0
        self.generation += 1


def compute_rates(window: FeedbackWindow) -> tuple[float, float]:
    """(negative rate, positive rate) over the window's interactions."""
    if window.total_queries <= 0:
        raise EmptyWindow(window.intent_id)
    return (
        window.negative_count / window.total_queries,
        window.positive_count / window.total_queries,
    )


def apply_threshold_update(intent_id: str, nfr: float, pfr: float,
                           config: FeedbackConfig, store: IntentStore) -> float:
    """tau' = clamp(tau + rate*(NFR - PFR)); commits atomically to the store."""
    record = store.get(intent_id)
    if record is None:
        raise UnknownIntent(intent_id)
    raw = record.tau_faq + config.learning_rate * (nfr - pfr)
    clamped = min(config.tau_max, max(config.tau_min, raw))
    new_tau = round(clamped, TAU_DECIMALS)
    store.update_tau(intent_id, new_tau)
    return new_tau


@dataclass(frozen=True)
class ThresholdUpdate:
    intent_id: str
    old_tau: float
    new_tau: float
    nfr: float
    pfr: float
    timestamp: str


# --- unhandled-query clustering ---------------------------------------------


@dataclass
class UnhandledCluster:
    cluster_id: str
    member_texts: list[str]
    member_embeddings: list[np.ndarray]
    centroid: np.ndarray
    flagged: bool = False

    @property
    def size(self) -> int:
        return len(self.member_texts)


@dataclass
class UnhandledLog:
    """Streaming clusters of out-of-domain queries."""

    clusters: list[UnhandledCluster] = field(default_factory=list)
    _next_id: int = 1

    def new_cluster_id(self) -> str:
        cid = f"cluster-{self._next_id:04d}"
        self._next_id += 1
        return cid


def _recompute_centroid(cluster: UnhandledCluster) -> None:
    cluster.centroid = normalize(np.mean(np.stack(cluster.member_embeddings), axis=0))


def _members_within(cluster: UnhandledCluster, threshold: float) -> bool:
    return all(
        cosine_similarity(vec, cluster.centroid) >= threshold
        for vec in cluster.member_embeddings
    )


def _start_cluster(log: UnhandledLog, text: str, embedding: np.ndarray,
                   config: FeedbackConfig) -> UnhandledCluster:
    cluster = UnhandledCluster(
        cluster_id=log.new_cluster_id(),
        member_texts=[text],
        member_embeddings=[embedding],
        centroid=embedding.copy(),
        flagged=config.flag_size <= 1,
    )
    log.clusters.append(cluster)
    return cluster


def _try_join(cluster: UnhandledCluster, text: str, embedding: np.ndarray,
              config: FeedbackConfig) -> bool:
    """Tentatively add a member; revert unless all members stay in range."""
    cluster.member_texts.append(text)
    cluster.member_embeddings.append(embedding)
    old_centroid = cluster.centroid
    _recompute_centroid(cluster)
    if _members_within(cluster, config.cluster_sim):
        return True
    cluster.member_texts.pop()
    cluster.member_embeddings.pop()
    cluster.centroid = old_centroid
    return False


def log_unhandled(query_text: str, embedding: np.ndarray, log: UnhandledLog,
                  config: FeedbackConfig) -> UnhandledCluster:
    """Route one unresolved query into the cluster log.

    Joins the nearest cluster whose centroid similarity clears
    ``cluster_sim``; otherwise starts a singleton. After an insertion
    shifts a centroid, members drifting below the threshold are split off
    and re-logged (no cascading: a re-logged member either joins a cluster
    that stays fully in range or becomes its own singleton). Returns the
    cluster that received the query.
    """
    best: UnhandledCluster | None = None
    best_sim = -2.0
    for cluster in log.clusters:
        sim = cosine_similarity(embedding, cluster.centroid)
        if sim > best_sim or (sim == best_sim and best is not None
                              and cluster.cluster_id < best.cluster_id):
            best, best_sim = cluster, sim

    if best is None or best_sim < config.cluster_sim:
        return _start_cluster(log, query_text, embedding, config)

    best.member_texts.append(query_text)
    best.member_embeddings.append(embedding)
    _recompute_centroid(best)

    # split members the new centroid left behind
    evicted: list[tuple[str, np.ndarray]] = []
    kept_texts: list[str] = []
    kept_vecs: list[np.ndarray] = []
    for text, vec in zip(best.member_texts, best.member_embeddings):
        if cosine_similarity(vec, best.centroid) >= config.cluster_sim:
            kept_texts.append(text)
            kept_vecs.append(vec)
        else:
            evicted.append((text, vec))
    if evicted:
        best.member_texts = kept_texts
        best.member_embeddings = kept_vecs
        if kept_vecs:
            _recompute_centroid(best)
        else:
            log.clusters.remove(best)
        for text, vec in evicted:
            for other in log.clusters:
                if other is not best and _try_join(other, text, vec, config):
                    other.flagged = other.flagged or other.size >= config.flag_size
                    break
            else:
                _start_cluster(log, text, vec, config)

    if best in log.clusters:
        best.flagged = best.flagged or best.size >= config.flag_size
    return best


# --- draft intents -----------------------------------------------------------


@dataclass
class IntentDraft:
    draft_id: str
    source_cluster_id: str
    display_name: str
    exemplar_texts: list[str]
    canned_response: str = ""  # filled at activation by a human
    tau_faq: float = DEFAULT_TAU_FAQ
    status: str = "pending_review"
    created_at: str = ""

    def to_json_dict(self) -> dict:
        return {
            "draft_id": self.draft_id,
            "source_cluster_id": self.source_cluster_id,
            "display_name": self.display_name,
            "exemplar_texts": list(self.exemplar_texts),
            "canned_response": self.canned_response,
            "tau_faq": self.tau_faq,
            "status": self.status,
            "created_at": self.created_at,
        }


_draft_counter = itertools.count(1)


def propose_intent(cluster: UnhandledCluster,
                   clock: Callable[[], str] = _utc_now_iso) -> IntentDraft:
    """Promote a flagged cluster to a pending-review draft.

    The draft carries the member queries as exemplars and an empty canned
    response; it is NOT activated here - activation happens through an
    admin upsert once a human supplies the response text.
    """
    if not cluster.flagged:
        raise ClusterNotFlagged(cluster.cluster_id)
    first = cluster.member_texts[0]
    return IntentDraft(
        draft_id=f"draft-{next(_draft_counter):04d}",
        source_cluster_id=cluster.cluster_id,
        display_name=(first[:60] + "...") if len(first) > 60 else first,
        exemplar_texts=list(cluster.member_texts),
        created_at=clock(),
    )


# --- service-side engine ------------------------------------------------------


class FeedbackEngine:
    """Stateful wiring of the two loops around a live intent store.

    Interactions are attributed per intent; feedback events must reference
    a turn this engine saw (UnknownTurn otherwise) and only move counters
    while the turn's window generation is still open, which keeps
    positive+negative <= total even across window resets. A turn can be
    rated at most once.
    """

    def __init__(self, store: IntentStore, config: FeedbackConfig | None = None,
                 clock: Callable[[], str] = _utc_now_iso):
        self.store = store
        self.config = config or FeedbackConfig()
        self.clock = clock
        self.windows: dict[str, FeedbackWindow] = {}
        self.unhandled = UnhandledLog()
        self.drafts: dict[str, IntentDraft] = {}
        self.events: list[FeedbackEvent] = []
        self.tau_history: dict[str, list[ThresholdUpdate]] = {}
        self._turns: dict[tuple[str, int], tuple[str | None, int, Band]] = {}
        self._rated: set[tuple[str, int]] = set()
        self._lock = threading.Lock()

    def get_turn(self, session_id: str, turn_index: int) -> tuple[str | None, int, Band] | None:
        with self._lock:
            return self._turns.get((session_id, turn_index))

    def forget_session(self, session_id: str) -> None:
        """Drop turn attribution for an evicted session; later feedback for
        its turns becomes UnknownTurn (stale-turn notice)."""
        with self._lock:
            stale = [key for key in self._turns if key[0] == session_id]
            for key in stale:
                del self._turns[key]
                self._rated.discard(key)

    def _window(self, intent_id: str) -> FeedbackWindow:
        if intent_id not in self.windows:
            self.windows[intent_id] = FeedbackWindow(
                intent_id=intent_id, window_size=self.config.window_size
            )
        return self.windows[intent_id]

    def note_interaction(self, session_id: str, turn_index: int,
                         intent_id: str | None, band: Band) -> ThresholdUpdate | None:
        """Register one served response; may close a window and retune tau."""
        with self._lock:
            if intent_id is None:
                self._turns[(session_id, turn_index)] = (None, 0, band)
                return None
            window = self._window(intent_id)
            self._turns[(session_id, turn_index)] = (intent_id, window.generation, band)
            window.total_queries += 1
            if window.total_queries < window.window_size:
                return None
            nfr, pfr = compute_rates(window)
            old_tau = self.store.get(intent_id).tau_faq
            new_tau = apply_threshold_update(intent_id, nfr, pfr, self.config, self.store)
            window.reset()
            update = ThresholdUpdate(
                intent_id=intent_id, old_tau=old_tau, new_tau=new_tau,
                nfr=nfr, pfr=pfr, timestamp=self.clock(),
            )
            self.tau_history.setdefault(intent_id, []).append(update)
            return update

    def record_feedback(self, event: FeedbackEvent) -> bool:
        """Record one thumbs event. Returns True when it moved a counter."""
        key = (event.session_id, event.turn_index)
        with self._lock:
            if key not in self._turns:
                raise UnknownTurn(f"{event.session_id}#{event.turn_index}")
            if key in self._rated:
                return False  # one rating per turn
            self._rated.add(key)
            self.events.append(event)
            intent_id, generation, _band = self._turns[key]
            if intent_id is None:
                return False
            window = self._window(intent_id)
            if window.generation != generation:
                return False  # window already closed; event kept in the log only
            if event.polarity is Polarity.POSITIVE:
                window.positive_count += 1
            else:
                window.negative_count += 1
            return True

    def log_unhandled_query(self, query_text: str, embedding: np.ndarray,
                            ) -> tuple[UnhandledCluster, IntentDraft | None]:
        """Cluster an OOD query; auto-propose a draft when a cluster flags."""
        with self._lock:
            cluster = log_unhandled(query_text, embedding, self.unhandled, self.config)
            draft: IntentDraft | None = None
            if cluster.flagged and not any(
                d.source_cluster_id == cluster.cluster_id for d in self.drafts.values()
            ):
                draft = propose_intent(cluster, clock=self.clock)
                self.drafts[draft.draft_id] = draft
            return cluster, draft

    # -- persistence of the evolution artifacts ------------------------------

    def dump_unhandled(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for cluster in self.unhandled.clusters:
                for text in cluster.member_texts:
                    fh.write(json.dumps(
                        {"cluster_id": cluster.cluster_id, "query": text,
                         "flagged": cluster.flagged}
                    ) + "\n")

    def dump_drafts(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for draft in self.drafts.values():
                fh.write(json.dumps(draft.to_json_dict(), sort_keys=True) + "\n")
