"""Configuration loading with env > file > default precedence.

The config file is JSON with one section per subsystem; the embedding
provider is selected by the file keys ``embedding.provider`` and
``embedding.dimension``. Every field can be overridden by an environment
variable named ``HYBRIDROUTER_<SECTION>_<FIELD>`` (upper-cased), e.g.
``HYBRIDROUTER_SERVICE_PORT=9000`` or
``HYBRIDROUTER_EMBEDDING_DIMENSION=128``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .context import ContextConfig
from .embedding import EmbeddingProviderConfig
from .feedback import FeedbackConfig
from .retrieval import DEFAULT_TOP_K

ENV_PREFIX = "HYBRIDROUTER"


@dataclass(frozen=True)
class ServiceConfig:
    port: int = 8080
    admin_token: str = "change-me"
    session_idle_minutes: float = 30.0
    response_cache_capacity: int = 1000
    frontend_dist: str = "frontend/dist"


@dataclass(frozen=True)
class PathsConfig:
    store: str = "intents.jsonl"
    kb: str = "kb.jsonl"
    unhandled: str = "unhandled.jsonl"
    drafts: str = "intent_drafts.jsonl"


@dataclass(frozen=True)
class AppConfig:
    embedding: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    feedback: FeedbackConfig = field(default_factory=FeedbackConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    retrieval_top_k: int = DEFAULT_TOP_K
    store_cache_capacity: int = 1000


# section -> (field name in file, dataclass field, python type)
_SCHEMA: dict[str, dict[str, type]] = {
    "embedding": {
        "provider": str,  # maps to EmbeddingProviderConfig.provider_kind
        "dimension": int,
        "endpoint_url": str,
        "timeout_s": float,
    },
    "context": {
        "window_length": int,
        "recency_decay": float,
        "relevance_gate": float,
        "blend_weight": float,
    },
    "feedback": {
        "learning_rate": float,
        "window_size": int,
        "tau_min": float,
        "tau_max": float,
        "cluster_sim": float,
        "flag_size": int,
    },
    "retrieval": {"top_k": int},
    "store": {"cache_capacity": int},
    "service": {
        "port": int,
        "admin_token": str,
        "session_idle_minutes": float,
        "response_cache_capacity": int,
        "frontend_dist": str,
    },
    "paths": {"store": str, "kb": str, "unhandled": str, "drafts": str},
}


def _coerce(raw: str, target: type):
    if target is int:
        return int(raw)
    if target is float:
        return float(raw)
    return raw


def _merged_sections(path: str | None, env) -> dict[str, dict]:
    sections: dict[str, dict] = {name: {} for name in _SCHEMA}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            file_data = json.load(fh)
        for section, fields in file_data.items():
            if section not in _SCHEMA:
                raise ValueError(f"unknown config section {section!r}")
            for key, value in fields.items():
                if key not in _SCHEMA[section]:
                    raise ValueError(f"unknown config key {section}.{key}")
                sections[section][key] = value
    for section, fields in _SCHEMA.items():
        for key, target in fields.items():
            env_key = f"{ENV_PREFIX}_{section}_{key}".upper()
            if env_key in env:
                sections[section][key] = _coerce(env[env_key], target)
    return sections


def load_config(path: str | None = None, env=None) -> AppConfig:
    env = os.environ if env is None else env
    s = _merged_sections(path, env)

    embedding = EmbeddingProviderConfig(
        provider_kind=s["embedding"].get("provider", "reference_hash"),
        dimension=s["embedding"].get("dimension", EmbeddingProviderConfig().dimension),
        endpoint_url=s["embedding"].get("endpoint_url"),
        timeout_s=s["embedding"].get("timeout_s", EmbeddingProviderConfig().timeout_s),
    )
    context = ContextConfig(**s["context"])
    feedback = FeedbackConfig(**s["feedback"])
    service = ServiceConfig(**s["service"])
    paths = PathsConfig(**s["paths"])
    return AppConfig(
        embedding=embedding,
        context=context,
        feedback=feedback,
        service=service,
        paths=paths,
        retrieval_top_k=s["retrieval"].get("top_k", DEFAULT_TOP_K),
        store_cache_capacity=s["store"].get("cache_capacity", 1000),
    )
