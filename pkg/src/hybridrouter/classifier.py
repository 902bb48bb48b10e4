"""Contextual intent scoring and confidence-band assignment.

``classify`` is the end-to-end path: embed the query, blend in session
history, cosine-score every intent centroid, take the argmax (ties broken
by lexicographically smallest intent_id), then band the confidence
against the winning intent's live ``tau_faq`` and the global ``tau_ood``.

Band rule: FAQ iff c > tau_faq; Contextual iff tau_ood < c <= tau_faq;
OutOfDomain iff c <= tau_ood. Negative cosines are clamped to 0 before
banding; raw scores stay available in ``per_intent_scores``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .context import ContextConfig, SessionContext, contextualize
from .embedding import cosine_similarity
from .intent_store import TAU_OOD, IntentStoreSnapshot


class Band(str, Enum):
    FAQ = "faq"
    CONTEXTUAL = "contextual"
    OUT_OF_DOMAIN = "out_of_domain"


class InvalidThresholds(Exception):
    """tau_ood >= tau_faq leaves no Contextual band."""


def assign_band(c: float, tau_faq: float, tau_ood: float = TAU_OOD) -> Band:
    if tau_ood >= tau_faq:
        raise InvalidThresholds(f"tau_ood {tau_ood} >= tau_faq {tau_faq}")
    if c > tau_faq:
        return Band.FAQ
    if c > tau_ood:
        return Band.CONTEXTUAL
    return Band.OUT_OF_DOMAIN


def select_best(scores: Mapping[str, float]) -> tuple[str, float] | None:
    """Argmax over scores; equal scores resolve to the smallest intent_id."""
    if not scores:
        return None
    best_id = min(scores, key=lambda k: (-scores[k], k))
    return best_id, scores[best_id]


@dataclass(frozen=True)
class ClassificationResult:
    best_intent_id: str | None
    confidence: float  # clamped to [0, 1] for banding
    band: Band
    per_intent_scores: dict[str, float]  # raw cosines, diagnostics
    context_embedding: np.ndarray  # Context_t actually scored
    query_embedding: np.ndarray | None = None  # raw E_q, reused downstream


def classify(query_text: str,
             session: SessionContext | None,
             store: IntentStoreSnapshot,
             provider,
             config: ContextConfig | None = None) -> ClassificationResult:
    """Score ``query_text`` against every intent in the snapshot.

    An empty store classifies as OutOfDomain with confidence 0. With an
    empty (or absent) session the contextualization step is the identity,
    so the result is byte-identical to context-free classification.
    """
    config = config or ContextConfig()
    query_embedding = provider.embed_text(query_text)
    history = session.aggregate if session is not None else None
    context_embedding = contextualize(query_embedding, history, config)

    scores = {
        rec.intent_id: cosine_similarity(context_embedding, rec.exemplar_embedding)
        for rec in store.records
    }
    best = select_best(scores)
    if best is None:
        return ClassificationResult(
            best_intent_id=None,
            confidence=0.0,
            band=Band.OUT_OF_DOMAIN,
            per_intent_scores={},
            context_embedding=context_embedding,
            query_embedding=query_embedding,
        )
    best_id, best_score = best
    confidence = min(1.0, max(0.0, best_score))
    record = store.record(best_id)
    band = assign_band(confidence, record.tau_faq, store.tau_ood)
    return ClassificationResult(
        best_intent_id=best_id,
        confidence=confidence,
        band=band,
        per_intent_scores=scores,
        context_embedding=context_embedding,
        query_embedding=query_embedding,
    )
