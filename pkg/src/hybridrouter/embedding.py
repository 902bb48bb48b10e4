"""Text embedding providers and the cosine similarity kernel.

All similarity math in the package runs on fixed-dimension unit vectors
(float64 numpy arrays). The reference provider is a deterministic
feature-hash embedder so the full system runs and tests offline; an
external provider can be plugged in through a one-request/one-response
JSON contract.

Reference scheme (frozen; changing it invalidates every stored vector):
  1. lowercase the text and extract tokens matching ``[a-z0-9]+``
  2. bucket(token) = first 8 bytes of sha256("feature-hash-v1:" + token),
     big-endian, modulo the dimension
  3. accumulate token counts into the bucketed vector
  4. L2-normalize

The scheme is a pure function of the text: equal inputs give bit-equal
vectors across runs and processes. Because it is a bag of tokens, it is
token-order *insensitive* ("reset password" == "password reset"); tests
assert this documented behavior.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

DEFAULT_DIMENSION = 256
MIN_DIMENSION = 8
TOKEN_HASH_NAMESPACE = "feature-hash-v1"
UNIT_NORM_TOLERANCE = 1e-6

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EmbeddingError(Exception):
    """Base class for embedding failures."""


class EmptyText(EmbeddingError):
    """Input had no usable tokens after trimming/tokenisation."""


class DimensionMismatch(EmbeddingError):
    """Two vectors of different dimension met in a similarity call."""


class ProviderUnavailable(EmbeddingError):
    """The external embedding provider failed or timed out."""


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics; drops empty tokens."""
    return _TOKEN_RE.findall(text.lower())


def as_embedding(values, dimension: int | None = None) -> np.ndarray:
    """Validate and coerce ``values`` into a unit-norm float64 vector.

    Raises DimensionMismatch when ``dimension`` is given and differs, and
    ValueError when the vector is not unit-norm within tolerance.
    """
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"embedding must be 1-D, got shape {vec.shape}")
    if dimension is not None and vec.shape[0] != dimension:
        raise DimensionMismatch(
            f"expected dimension {dimension}, got {vec.shape[0]}"
        )
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > UNIT_NORM_TOLERANCE:
        raise ValueError(f"embedding norm {norm!r} is not 1 within 1e-6")
    return vec


def normalize(vec: np.ndarray) -> np.ndarray:
    """L2-normalize; zero vectors are rejected (unit-norm invariant)."""
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return vec / norm


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    """Which provider to build and at which dimension.

    ``provider_kind`` is ``reference_hash`` or ``external``; the external
    kind requires ``endpoint_url``.
    """

    provider_kind: str = "reference_hash"
    dimension: int = DEFAULT_DIMENSION
    endpoint_url: str | None = None
    timeout_s: float = 5.0

    def __post_init__(self) -> None:
        if self.provider_kind not in ("reference_hash", "external"):
            raise ValueError(f"unknown provider_kind {self.provider_kind!r}")
        if self.dimension < MIN_DIMENSION:
            raise ValueError(f"dimension must be >= {MIN_DIMENSION}")
        if self.provider_kind == "external" and not self.endpoint_url:
            raise ValueError("external provider requires endpoint_url")


class HashEmbeddingProvider:
    """Deterministic, dependency-free reference embedder (see module doc)."""

    def __init__(self, dimension: int = DEFAULT_DIMENSION) -> None:
        if dimension < MIN_DIMENSION:
            raise ValueError(f"dimension must be >= {MIN_DIMENSION}")
        self.dimension = dimension

    @staticmethod
    def _bucket(token: str, dimension: int) -> int:
        digest = hashlib.sha256(
            f"{TOKEN_HASH_NAMESPACE}:{token}".encode("utf-8")
        ).digest()
        return int.from_bytes(digest[:8], "big") % dimension

    def embed_text(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise EmptyText(f"no tokens in {text!r}")
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            vec[self._bucket(token, self.dimension)] += 1.0
        return normalize(vec)


class ExternalEmbeddingProvider:
    """HTTP provider speaking {"text": str} -> {"vector": [float]}.

    Stateless per call; failures surface as ProviderUnavailable so callers
    can degrade. Safe for concurrent use (a client per call).
    """

    def __init__(self, config: EmbeddingProviderConfig, transport=None) -> None:
        if config.provider_kind != "external":
            raise ValueError("config is not for an external provider")
        self.config = config
        self._transport = transport  # injectable for tests

    def embed_text(self, text: str) -> np.ndarray:
        if not tokenize(text):
            raise EmptyText(f"no tokens in {text!r}")
        import httpx

        try:
            with httpx.Client(
                transport=self._transport, timeout=self.config.timeout_s
            ) as client:
                resp = client.post(self.config.endpoint_url, json={"text": text})
                resp.raise_for_status()
                payload = resp.json()
        except httpx.HTTPError as exc:
            raise ProviderUnavailable(str(exc)) from exc
        try:
            vector = payload["vector"]
        except (TypeError, KeyError) as exc:
            raise ProviderUnavailable(f"malformed provider reply: {payload!r}") from exc
        vec = np.asarray(vector, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] != self.config.dimension:
            raise ProviderUnavailable(
                f"provider returned shape {vec.shape}, expected ({self.config.dimension},)"
            )
        return normalize(vec)


def build_provider(config: EmbeddingProviderConfig):
    if config.provider_kind == "reference_hash":
        return HashEmbeddingProvider(config.dimension)
    return ExternalEmbeddingProvider(config)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of two vectors; exact dot product for unit-norm inputs.

    Symmetric by construction and clamped into [-1, 1] against float
    round-off.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} vs {b.shape}")
    denom = float(np.linalg.norm(a)) * float(np.linalg.norm(b))
    if denom == 0.0:
        raise ValueError("cosine of a zero vector is undefined")
    return float(min(1.0, max(-1.0, float(np.dot(a, b)) / denom)))
