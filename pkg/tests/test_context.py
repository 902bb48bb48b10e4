from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridrouter.context import (
    ContextConfig,
    SessionContext,
    Turn,
    aggregate_history,
    append_turn,
    contextualize,
)
from hybridrouter.embedding import DimensionMismatch, EmptyText, cosine_similarity


def unit2d(x: float, y: float) -> np.ndarray:
    vec = np.array([x, y], dtype=np.float64)
    return vec / np.linalg.norm(vec)


def make_turn(vec: np.ndarray, index: int) -> Turn:
    return Turn(
        query_text=f"q{index}",
        response_text=f"r{index}",
        query_embedding=vec,
        turn_embedding=vec,
        turn_index=index,
        timestamp="2026-01-01T00:00:00+00:00",
    )


class TestAggregateHistory:
    def test_empty_window_absent(self):
        assert aggregate_history([], ContextConfig()) is None

    def test_single_turn_is_identity(self):
        vec = unit2d(3.0, 4.0)
        out = aggregate_history([make_turn(vec, 0)], ContextConfig())
        np.testing.assert_allclose(out, vec, atol=1e-12)

    def test_two_turn_decay_matches_oracle(self):
        # gamma=0.5, e1 older=(1,0), e2 newer=(0,1):
        # normalize(0.5*e2 + 0.25*e1); frozen from the hand-computed oracle
        config = ContextConfig(recency_decay=0.5)
        window = [make_turn(unit2d(1, 0), 0), make_turn(unit2d(0, 1), 1)]
        out = aggregate_history(window, config)
        np.testing.assert_allclose(
            out, [0.4472135954999579, 0.8944271909999159], atol=1e-12
        )

    def test_output_unit_norm(self, provider):
        config = ContextConfig()
        window = [
            make_turn(provider.embed_text(t), i)
            for i, t in enumerate(["billing help", "api keys", "reset password"])
        ]
        out = aggregate_history(window, config)
        assert abs(np.linalg.norm(out) - 1.0) <= 1e-9


class TestContextualize:
    def test_absent_history_identity_object(self):
        vec = unit2d(1, 0)
        assert contextualize(vec, None, ContextConfig()) is vec

    def test_gate_rejects_orthogonal_history(self):
        config = ContextConfig(relevance_gate=0.3)
        query = unit2d(1, 0)
        history = unit2d(0, 1)
        assert contextualize(query, history, config) is query

    def test_blend_matches_oracle(self):
        # alpha=0.7, Eq=(1,0), H=(0.7071..,0.7071..), gate passes;
        # frozen from the hand-computed oracle
        config = ContextConfig(blend_weight=0.7, relevance_gate=0.3)
        out = contextualize(unit2d(1, 0), unit2d(1, 1), config)
        np.testing.assert_allclose(
            out, [0.9740060703084382, 0.22652190843782347], atol=1e-12
        )

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            contextualize(unit2d(1, 0), np.ones(3) / np.sqrt(3), ContextConfig())

    def test_output_unit_norm(self):
        config = ContextConfig(relevance_gate=0.0)
        out = contextualize(unit2d(1, 0), unit2d(2, 1), config)
        assert abs(np.linalg.norm(out) - 1.0) <= 1e-12

    def test_alpha_monotone_toward_query(self):
        # with the gate open and H fixed, cosine(output, E_q) must be
        # non-decreasing as alpha rises toward 1
        query, history = unit2d(1, 0), unit2d(1, 1)
        previous = -1.0
        for alpha in [0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 1.0]:
            config = ContextConfig(blend_weight=alpha, relevance_gate=0.0)
            out = contextualize(query, history, config)
            similarity = cosine_similarity(out, query)
            assert similarity >= previous - 1e-12
            previous = similarity
        assert previous == pytest.approx(1.0, abs=1e-12)


class TestAppendTurn:
    def test_first_turn_aggregate_is_turn_embedding(self, provider):
        config = ContextConfig()
        session = SessionContext(session_id="s")
        append_turn(session, "billing question", "billing answer", provider, config)
        assert len(session) == 1
        np.testing.assert_allclose(
            session.aggregate,
            provider.embed_text("billing question billing answer"),
            atol=1e-12,
        )

    def test_window_bound_eviction(self, provider):
        config = ContextConfig(window_length=10)
        session = SessionContext(session_id="s")
        for i in range(11):
            append_turn(session, f"query number {i}", f"answer number {i}", provider, config)
        assert len(session) == 10
        assert session.window[0].query_text == "query number 1"
        assert session.window[-1].turn_index == 10

    def test_empty_query_rejected(self, provider):
        session = SessionContext(session_id="s")
        with pytest.raises(EmptyText):
            append_turn(session, "  ", "fine answer", provider, ContextConfig())

    def test_empty_response_rejected(self, provider):
        session = SessionContext(session_id="s")
        with pytest.raises(EmptyText):
            append_turn(session, "fine question", "  ", provider, ContextConfig())

    def test_turn_indices_strictly_increase_past_eviction(self, provider):
        config = ContextConfig(window_length=3)
        session = SessionContext(session_id="s")
        for i in range(7):
            append_turn(session, f"q {i}", f"a {i}", provider, config)
        indices = [t.turn_index for t in session.window]
        assert indices == sorted(indices)
        assert indices == [4, 5, 6]

    def test_determinism_same_transcript_same_aggregate(self, provider):
        config = ContextConfig()
        transcript = [("billing issue", "see invoices"), ("api key", "console keys")]

        def replay():
            session = SessionContext(session_id="s")
            for q, r in transcript:
                append_turn(session, q, r, provider, config,
                            clock=lambda: "2026-01-01T00:00:00+00:00")
            return session.aggregate

        assert replay().tobytes() == replay().tobytes()

    @given(st.lists(st.integers(0, 2), min_size=0, max_size=40),
           st.integers(min_value=1, max_value=10))
    @settings(max_examples=60, deadline=None)
    def test_window_never_exceeds_n(self, ops, n):
        from hybridrouter.embedding import HashEmbeddingProvider

        provider = HashEmbeddingProvider(32)
        config = ContextConfig(window_length=n)
        session = SessionContext(session_id="s")
        texts = ["billing invoice", "password reset", "plan upgrade"]
        for op in ops:
            append_turn(session, texts[op], "an answer text", provider, config)
            assert len(session) <= n
            assert (session.aggregate is None) == (len(session) == 0)
