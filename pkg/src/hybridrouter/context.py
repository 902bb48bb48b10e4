"""Per-session dialogue history and the contextual query embedding.

A session keeps a fixed-length sliding window of (query, response) turns.
Two functions turn that window into routing signal:

* ``aggregate_history`` - recency-decayed normalized sum of turn
  embeddings (weight ``gamma**i`` for the i-th most recent turn).
* ``contextualize`` - similarity-gated convex blend of the query
  embedding with the aggregate: the gate returns the query unchanged when
  the history is off-topic, so a topic shift is not polluted by stale
  context.

Both are deterministic; the same transcript always yields the same
contextual embedding at every turn.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

import numpy as np

from .embedding import DimensionMismatch, EmptyText, cosine_similarity, normalize, tokenize

DEFAULT_WINDOW_LENGTH = 10
DEFAULT_RECENCY_DECAY = 0.7
DEFAULT_RELEVANCE_GATE = 0.3
DEFAULT_BLEND_WEIGHT = 0.7


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class ContextConfig:
    window_length: int = DEFAULT_WINDOW_LENGTH
    recency_decay: float = DEFAULT_RECENCY_DECAY
    relevance_gate: float = DEFAULT_RELEVANCE_GATE
    blend_weight: float = DEFAULT_BLEND_WEIGHT

    def __post_init__(self) -> None:
        if self.window_length < 1:
            raise ValueError("window_length must be positive")
        if not (0.0 < self.recency_decay <= 1.0):
            raise ValueError("recency_decay must be in (0, 1]")
        if not (0.0 <= self.relevance_gate < 1.0):
            raise ValueError("relevance_gate must be in [0, 1)")
        if not (0.0 < self.blend_weight <= 1.0):
            raise ValueError("blend_weight must be in (0, 1]")


@dataclass(frozen=True)
class Turn:
    query_text: str
    response_text: str
    query_embedding: np.ndarray
    turn_embedding: np.ndarray  # embedding of "query response"
    turn_index: int
    timestamp: str


@dataclass
class SessionContext:
    """Sliding window of turns plus the cached history aggregate."""

    session_id: str
    window: list[Turn] = field(default_factory=list)
    aggregate: np.ndarray | None = None
    next_turn_index: int = 0

    def __len__(self) -> int:
        return len(self.window)


def aggregate_history(window: list[Turn], config: ContextConfig) -> np.ndarray | None:
    """Recency-decayed normalized sum of turn embeddings; None when empty.

    The i-th most recent turn (i starting at 1) carries weight
    ``recency_decay ** i``.
    """
    if not window:
        return None
    acc = np.zeros_like(window[0].turn_embedding)
    for i, turn in enumerate(reversed(window), start=1):
        acc = acc + (config.recency_decay ** i) * turn.turn_embedding
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        # exact cancellation; impossible with non-negative reference vectors
        return None
    return acc / norm


def contextualize(query_embedding: np.ndarray,
                  history: np.ndarray | None,
                  config: ContextConfig) -> np.ndarray:
    """Blend the query with relevant history; identity otherwise.

    Returns the query embedding unchanged when there is no history or when
    the history fails the relevance gate; else
    ``normalize(alpha * query + (1 - alpha) * history)``.
    """
    if history is None:
        return query_embedding
    if query_embedding.shape != history.shape:
        raise DimensionMismatch(
            f"query {query_embedding.shape} vs history {history.shape}"
        )
    if cosine_similarity(query_embedding, history) < config.relevance_gate:
        return query_embedding
    alpha = config.blend_weight
    return normalize(alpha * query_embedding + (1.0 - alpha) * history)


def append_turn(session: SessionContext, query_text: str, response_text: str,
                provider, config: ContextConfig,
                clock: Callable[[], str] = _utc_now_iso,
                query_embedding: np.ndarray | None = None) -> SessionContext:
    """Append one (query, response) turn, evicting the oldest past the window.

    The history aggregate is recomputed after the append (full recompute;
    cheap at window length 10). A precomputed ``query_embedding`` is
    trusted as-is to spare the hot path a second embed.
    """
    if not tokenize(query_text):
        raise EmptyText("query_text is blank")
    if not tokenize(response_text):
        raise EmptyText("response_text is blank")
    turn = Turn(
        query_text=query_text,
        response_text=response_text,
        query_embedding=(
            query_embedding if query_embedding is not None
            else provider.embed_text(query_text)
        ),
        turn_embedding=provider.embed_text(query_text + " " + response_text),
        turn_index=session.next_turn_index,
        timestamp=clock(),
    )
    session.window.append(turn)
    session.next_turn_index += 1
    if len(session.window) > config.window_length:
        del session.window[: len(session.window) - config.window_length]
    session.aggregate = aggregate_history(session.window, config)
    return session
