from __future__ import annotations

import pytest

from hybridrouter.embedding import HashEmbeddingProvider
from hybridrouter.fixtures import build_demo_kb, build_demo_store
from hybridrouter.retrieval import DocumentIndex


@pytest.fixture(scope="session")
def provider():
    return HashEmbeddingProvider(256)


@pytest.fixture()
def demo_store(provider):
    return build_demo_store(provider)


@pytest.fixture(scope="session")
def demo_kb(provider):
    return build_demo_kb(provider)


@pytest.fixture()
def demo_index(demo_kb):
    return DocumentIndex(demo_kb)
