"""Document index, exact top-k dense retrieval, and answer generation.

Reference retrieval is an exact brute-force cosine scan (desk-scale
corpora; exactness doubles as a clean oracle). The reference generator is
extractive: it returns the top passage's most query-similar sentences
verbatim, so the pipeline is deterministic and cannot hallucinate. An
external generator can be plugged in via a JSON contract.

Sentence splitting is frozen for test stability: split after '.', '!' or
'?' followed by whitespace. Every emitted sentence is a verbatim
substring of its source document.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass

import numpy as np

from .embedding import EmptyText, cosine_similarity, tokenize

DEFAULT_TOP_K = 4
NO_KNOWLEDGE_TEXT = "no knowledge available"
MAX_GENERATED_SENTENCES = 3

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


class DuplicateDocId(Exception):
    """Two documents in one index share a doc_id."""


class GeneratorUnavailable(Exception):
    """The external answer generator failed or timed out."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    body: str
    embedding: np.ndarray  # derived from "title body" via the active provider


@dataclass(frozen=True)
class RetrievalResult:
    ranked: tuple[tuple[str, float], ...]  # (doc_id, score), non-increasing
    k_requested: int


@dataclass(frozen=True)
class RagResponse:
    text: str
    sources: tuple[str, ...]
    generator_kind: str  # reference_extractive | external


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_SPLIT_RE.split(text) if s.strip()]


def make_document(doc_id: str, title: str, body: str, provider) -> Document:
    return Document(
        doc_id=doc_id,
        title=title,
        body=body,
        embedding=provider.embed_text(title + " " + body),
    )


class DocumentIndex:
    """Immutable after build; rebuilds swap whole instances.

    ``retrieve_calls`` counts retrievals for the FAQ fast-path
    instrumentation (FAQ-band responses must never touch the index).
    """

    def __init__(self, documents: list[Document]):
        seen: set[str] = set()
        for doc in documents:
            if doc.doc_id in seen:
                raise DuplicateDocId(doc.doc_id)
            seen.add(doc.doc_id)
        self._docs = {doc.doc_id: doc for doc in documents}
        self._ordered_ids = [doc.doc_id for doc in documents]
        self._matrix = (
            np.stack([doc.embedding for doc in documents])
            if documents
            else np.zeros((0, 0))
        )
        self._lock = threading.Lock()
        self._retrieve_calls = 0

    def __len__(self) -> int:
        return len(self._docs)

    def get(self, doc_id: str) -> Document:
        return self._docs[doc_id]

    @property
    def retrieve_calls(self) -> int:
        with self._lock:
            return self._retrieve_calls

    def retrieve_top_k(self, query_embedding: np.ndarray, k: int) -> RetrievalResult:
        """Exact top-k by cosine; ties broken by doc_id ascending."""
        if k < 1:
            raise ValueError("k must be positive")
        with self._lock:
            self._retrieve_calls += 1
        if not self._docs:
            return RetrievalResult(ranked=(), k_requested=k)
        scores = self._matrix @ np.asarray(query_embedding, dtype=np.float64)
        order = sorted(
            range(len(self._ordered_ids)),
            key=lambda i: (-float(scores[i]), self._ordered_ids[i]),
        )
        ranked = tuple(
            (self._ordered_ids[i], float(min(1.0, max(-1.0, scores[i]))))
            for i in order[:k]
        )
        return RetrievalResult(ranked=ranked, k_requested=k)


def index_documents(documents: list[Document]) -> DocumentIndex:
    return DocumentIndex(documents)


def load_kb(path, provider) -> list[Document]:
    """Read ``kb.jsonl``; embeddings are computed at index time, not stored."""
    docs: list[Document] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                docs.append(make_document(raw["doc_id"], raw["title"], raw["body"], provider))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return docs


def extract_answer(query_text: str, document: Document, provider,
                   query_vec: np.ndarray | None = None) -> str:
    """Title-prefixed top query-similar sentences, emitted in document order.

    Selection: score each sentence against the query, keep the best
    ``MAX_GENERATED_SENTENCES`` (ties to the earlier sentence), then emit
    in original order. Unscoreable bodies fall back to the whole body.
    """
    if query_vec is None:
        try:
            query_vec = provider.embed_text(query_text)
        except EmptyText:
            query_vec = None
    sentences = split_sentences(document.body)
    scored: list[tuple[int, str, float]] = []
    for i, sentence in enumerate(sentences):
        if not tokenize(sentence):
            continue
        score = (
            cosine_similarity(provider.embed_text(sentence), query_vec)
            if query_vec is not None
            else 0.0
        )
        scored.append((i, sentence, score))
    if not scored:
        return f"{document.title}: {document.body.strip()}"
    top = sorted(scored, key=lambda item: (-item[2], item[0]))[:MAX_GENERATED_SENTENCES]
    selected = [sentence for _, sentence, _ in sorted(top, key=lambda item: item[0])]
    return f"{document.title}: " + " ".join(selected)


def generate_rag_response(query_text: str,
                          retrieval: RetrievalResult,
                          context: np.ndarray,
                          index: DocumentIndex,
                          provider,
                          generator=None,
                          query_embedding: np.ndarray | None = None) -> RagResponse:
    """Produce the RAG answer for a retrieval result.

    With no generator the deterministic reference extractor runs on the
    top-1 passage. An external ``generator`` receives the query, the
    retrieved passages, and the context embedding hint.
    """
    if not retrieval.ranked:
        return RagResponse(
            text=NO_KNOWLEDGE_TEXT, sources=(), generator_kind="reference_extractive"
        )
    if generator is not None:
        passages = [
            {"doc_id": doc_id, "title": index.get(doc_id).title, "body": index.get(doc_id).body}
            for doc_id, _ in retrieval.ranked
        ]
        text = generator.generate(query_text, passages, context)
        return RagResponse(
            text=text,
            sources=tuple(doc_id for doc_id, _ in retrieval.ranked),
            generator_kind="external",
        )
    top_doc = index.get(retrieval.ranked[0][0])
    return RagResponse(
        text=extract_answer(query_text, top_doc, provider, query_vec=query_embedding),
        sources=(top_doc.doc_id,),
        generator_kind="reference_extractive",
    )


class ExternalGenerator:
    """HTTP generator: {query, passages[], context_hint} -> {text}."""

    def __init__(self, endpoint_url: str, timeout_s: float = 10.0, transport=None):
        self.endpoint_url = endpoint_url
        self.timeout_s = timeout_s
        self._transport = transport

    def generate(self, query_text: str, passages: list[dict], context) -> str:
        import httpx

        payload = {
            "query": query_text,
            "passages": passages,
            "context_hint": [float(x) for x in context],
        }
        try:
            with httpx.Client(transport=self._transport, timeout=self.timeout_s) as client:
                resp = client.post(self.endpoint_url, json=payload)
                resp.raise_for_status()
                return str(resp.json()["text"])
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise GeneratorUnavailable(str(exc)) from exc
