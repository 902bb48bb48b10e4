"""Adaptive hybrid conversational routing engine.

Classifies each query into FAQ / Contextual / Out-of-Domain confidence
bands, serves canned, retrieval-augmented, or blended responses
accordingly, and retunes per-intent thresholds and the intent inventory
from live user feedback.
"""

from .classifier import Band, ClassificationResult, assign_band, classify
from .config import AppConfig, load_config
from .context import ContextConfig, SessionContext, Turn, aggregate_history, append_turn, contextualize
from .embedding import (
    EmbeddingProviderConfig,
    HashEmbeddingProvider,
    build_provider,
    cosine_similarity,
)
from .feedback import (
    FeedbackConfig,
    FeedbackEngine,
    FeedbackEvent,
    FeedbackWindow,
    Polarity,
    apply_threshold_update,
    compute_rates,
    log_unhandled,
    propose_intent,
)
from .harness import CorpusSpec, generate_corpus, run_eval, run_load
from .intent_store import IntentRecord, IntentStore, IntentStoreSnapshot
from .metrics import (
    BaselineStats,
    Category,
    EvalRecord,
    MetricsReport,
    cost_efficiency,
    score_accuracy,
    summarize,
    turn_efficiency,
)
from .responder import (
    FinalResponse,
    ResponseKind,
    ResponsePipeline,
    RoutePlan,
    blend_responses,
    plan_route,
    respond,
)
from .retrieval import (
    Document,
    DocumentIndex,
    RagResponse,
    RetrievalResult,
    generate_rag_response,
    index_documents,
)

__version__ = "0.1.0"

__all__ = [
    "AppConfig",
    "Band",
    "BaselineStats",
    "Category",
    "ClassificationResult",
    "ContextConfig",
    "CorpusSpec",
    "Document",
    "DocumentIndex",
    "EmbeddingProviderConfig",
    "EvalRecord",
    "FeedbackConfig",
    "FeedbackEngine",
    "FeedbackEvent",
    "FeedbackWindow",
    "FinalResponse",
    "HashEmbeddingProvider",
    "IntentRecord",
    "IntentStore",
    "IntentStoreSnapshot",
    "MetricsReport",
    "Polarity",
    "RagResponse",
    "ResponseKind",
    "ResponsePipeline",
    "RetrievalResult",
    "RoutePlan",
    "SessionContext",
    "Turn",
    "aggregate_history",
    "append_turn",
    "apply_threshold_update",
    "assign_band",
    "blend_responses",
    "build_provider",
    "classify",
    "compute_rates",
    "contextualize",
    "cosine_similarity",
    "cost_efficiency",
    "generate_corpus",
    "generate_rag_response",
    "index_documents",
    "load_config",
    "log_unhandled",
    "plan_route",
    "propose_intent",
    "respond",
    "run_eval",
    "run_load",
    "score_accuracy",
    "summarize",
    "turn_efficiency",
]
