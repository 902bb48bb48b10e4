from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridrouter.classifier import (
    Band,
    InvalidThresholds,
    assign_band,
    classify,
    select_best,
)
from hybridrouter.context import ContextConfig, SessionContext, append_turn
from hybridrouter.embedding import EmptyText, HashEmbeddingProvider, cosine_similarity
from hybridrouter.intent_store import IntentRecord, IntentStore, IntentStoreSnapshot


class TestAssignBand:
    # the four published sample confidences under default thresholds
    @pytest.mark.parametrize("confidence,expected", [
        (0.95, Band.FAQ),
        (0.70, Band.CONTEXTUAL),
        (0.40, Band.OUT_OF_DOMAIN),
        (0.75, Band.CONTEXTUAL),
    ])
    def test_default_thresholds(self, confidence, expected):
        assert assign_band(confidence, 0.85, 0.5) is expected

    def test_boundary_at_tau_faq_is_contextual(self):
        assert assign_band(0.85, 0.85, 0.5) is Band.CONTEXTUAL

    def test_boundary_at_tau_ood_is_out_of_domain(self):
        assert assign_band(0.5, 0.85, 0.5) is Band.OUT_OF_DOMAIN

    def test_invalid_thresholds(self):
        with pytest.raises(InvalidThresholds):
            assign_band(0.7, 0.5, 0.5)
        with pytest.raises(InvalidThresholds):
            assign_band(0.7, 0.4, 0.5)

    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.51, max_value=0.98),
    )
    @settings(max_examples=300, deadline=None)
    def test_bands_partition_unit_interval(self, c, tau_faq):
        band = assign_band(c, tau_faq, 0.5)
        memberships = [
            band is Band.FAQ and c > tau_faq,
            band is Band.CONTEXTUAL and 0.5 < c <= tau_faq,
            band is Band.OUT_OF_DOMAIN and c <= 0.5,
        ]
        assert sum(memberships) == 1


class TestSelectBest:
    def test_tie_breaks_lexicographically(self):
        assert select_best({"zeta": 0.8, "alpha": 0.8, "mid": 0.3}) == ("alpha", 0.8)

    def test_empty_scores(self):
        assert select_best({}) is None

    @given(st.dictionaries(st.sampled_from(["a", "b", "c", "d"]),
                           st.floats(0.01, 1.0), min_size=1, max_size=4),
           st.floats(min_value=0.1, max_value=7.0))
    @settings(max_examples=200, deadline=None)
    def test_argmax_invariant_under_positive_scaling(self, scores, factor):
        best_id, _ = select_best(scores)
        scaled_id, _ = select_best({k: v * factor for k, v in scores.items()})
        assert best_id == scaled_id


def build_snapshot(provider, intents: dict[str, list[str]]) -> IntentStoreSnapshot:
    store = IntentStore(provider)
    for intent_id, exemplars in intents.items():
        store.upsert_intent(IntentRecord(
            intent_id=intent_id,
            display_name=intent_id,
            exemplar_texts=exemplars,
            canned_response=f"canned answer for {intent_id}",
        ))
    return store.snapshot()


class TestClassify:
    def test_empty_store_convention(self, provider):
        snapshot = IntentStoreSnapshot(version=0, records=())
        result = classify("anything at all", None, snapshot, provider)
        assert result.best_intent_id is None
        assert result.confidence == 0.0
        assert result.band is Band.OUT_OF_DOMAIN
        assert result.per_intent_scores == {}

    def test_blank_query_rejected(self, provider, demo_store):
        with pytest.raises(EmptyText):
            classify("  ", None, demo_store.snapshot(), provider)

    def test_high_confidence_exemplar_is_faq(self, provider, demo_store):
        result = classify(
            "how do i reset my password", None, demo_store.snapshot(), provider
        )
        assert result.best_intent_id == "password_reset"
        assert result.band is Band.FAQ
        assert result.confidence > 0.85

    def test_confidence_equals_max_score(self, provider, demo_store):
        result = classify("upgrade my subscription plan", None, demo_store.snapshot(), provider)
        assert result.confidence == pytest.approx(max(result.per_intent_scores.values()))

    def test_empty_session_equals_no_session_byte_identical(self, provider, demo_store):
        snapshot = demo_store.snapshot()
        with_none = classify("how do i reset my password", None, snapshot, provider)
        with_empty = classify(
            "how do i reset my password", SessionContext(session_id="s"), snapshot, provider
        )
        assert with_none.best_intent_id == with_empty.best_intent_id
        assert with_none.confidence == with_empty.confidence
        assert with_none.per_intent_scores == with_empty.per_intent_scores
        assert (
            with_none.context_embedding.tobytes() == with_empty.context_embedding.tobytes()
        )

    def test_brute_force_oracle_equivalence_three_intents(self, provider):
        snapshot = build_snapshot(provider, {
            "billing": ["pay my bill", "billing question about my invoice"],
            "reset": ["reset my password", "password reset help please"],
            "upgrade": ["upgrade my plan", "switch to a bigger plan"],
        })
        for query in ["how do i pay the bill", "password help", "bigger plan please"]:
            result = classify(query, None, snapshot, provider)
            query_vec = provider.embed_text(query)
            oracle_scores = {
                rec.intent_id: float(np.dot(query_vec, rec.exemplar_embedding))
                for rec in snapshot.records
            }
            oracle_best = sorted(oracle_scores.items(), key=lambda kv: (-kv[1], kv[0]))[0]
            assert result.best_intent_id == oracle_best[0]
            assert result.confidence == pytest.approx(max(0.0, min(1.0, oracle_best[1])))

    def test_exact_tie_resolves_to_smallest_id(self, provider):
        # identical exemplars -> identical centroids -> exact score tie
        snapshot = build_snapshot(provider, {
            "zulu": ["reset my password"],
            "alpha": ["reset my password"],
        })
        result = classify("reset my password", None, snapshot, provider)
        assert result.best_intent_id == "alpha"

    def test_banding_uses_winning_intents_tau(self, provider, demo_store):
        confident_query = "how do i reset my password"
        default_result = classify(confident_query, None, demo_store.snapshot(), provider)
        assert default_result.band is Band.FAQ
        assert 0.85 < default_result.confidence < 0.98
        # raise only this intent's threshold above the achievable confidence
        demo_store.update_tau("password_reset", 0.98)
        raised_result = classify(confident_query, None, demo_store.snapshot(), provider)
        assert raised_result.confidence == default_result.confidence
        assert raised_result.band is Band.CONTEXTUAL
        # an unrelated intent's banding is untouched by the diverged threshold
        other = classify("how do i close my account", None, demo_store.snapshot(), provider)
        assert other.band is Band.FAQ

    def test_context_shifts_scores_for_followup(self, provider, demo_store):
        config = ContextConfig()
        snapshot = demo_store.snapshot()
        followup = "can you elaborate on those dashboard analytics metrics"
        fresh = classify(followup, None, snapshot, provider, config)
        session = SessionContext(session_id="s")
        append_turn(
            session,
            "how do i enable advanced analytics on the dashboard",
            snapshot.record("dashboard_analytics").canned_response,
            provider, config,
        )
        contextual = classify(followup, session, snapshot, provider, config)
        assert fresh.band is Band.OUT_OF_DOMAIN
        assert contextual.band is Band.CONTEXTUAL
        assert contextual.best_intent_id == "dashboard_analytics"

    def test_negative_scores_clamped_for_banding(self, provider):
        # hand-built store whose centroid can oppose a hand-built query
        store = IntentStore(provider)
        store.upsert_intent(IntentRecord(
            intent_id="only", display_name="only",
            exemplar_texts=["alpha bravo"],
            canned_response="the canned answer",
        ))
        snapshot = store.snapshot()
        result = classify("zulu yankee", None, snapshot, provider)
        assert 0.0 <= result.confidence <= 1.0
        assert min(result.per_intent_scores.values()) <= result.confidence


class TestOracleRandomized:
    def test_randomized_ten_intent_fixtures_match_brute_force(self):
        provider = HashEmbeddingProvider(64)
        rng = np.random.default_rng(1234)
        vocabulary = [
            "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf",
            "hotel", "india", "juliet", "kilo", "lima", "mike", "november",
        ]
        store = IntentStore(provider)
        for i in range(10):
            words = rng.choice(vocabulary, size=4, replace=False)
            store.upsert_intent(IntentRecord(
                intent_id=f"intent_{i:02d}", display_name=str(i),
                exemplar_texts=[" ".join(words), " ".join(words[:3])],
                canned_response="canned text answer",
            ))
        snapshot = store.snapshot()
        for _ in range(200):
            query = " ".join(rng.choice(vocabulary, size=3, replace=False))
            result = classify(query, None, snapshot, provider)
            vec = provider.embed_text(query)
            oracle = sorted(
                ((rec.intent_id, cosine_similarity(vec, rec.exemplar_embedding))
                 for rec in snapshot.records),
                key=lambda kv: (-kv[1], kv[0]),
            )[0]
            assert result.best_intent_id == oracle[0]
            assert result.per_intent_scores[oracle[0]] == pytest.approx(oracle[1], abs=1e-12)
