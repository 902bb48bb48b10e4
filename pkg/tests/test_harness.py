from __future__ import annotations

import itertools

import pytest

from hybridrouter.context import ContextConfig
from hybridrouter.harness import (
    CorpusSpec,
    InsufficientSources,
    allocate_counts,
    generate_corpus,
    read_corpus,
    run_eval,
    run_load,
    write_corpus,
)
from hybridrouter.intent_store import IntentStore
from hybridrouter.metrics import Category
from hybridrouter.retrieval import DocumentIndex


def fake_timer():
    counter = itertools.count()
    return lambda: next(counter) * 0.001


class TestSpecValidation:
    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            CorpusSpec(total_queries=10, faq_fraction=0.5, contextual_fraction=0.5,
                       ood_fraction=0.5)

    def test_negative_fraction_rejected(self):
        with pytest.raises(ValueError):
            CorpusSpec(total_queries=10, faq_fraction=-0.1, contextual_fraction=0.6,
                       ood_fraction=0.5)

    def test_total_must_be_positive(self):
        with pytest.raises(ValueError):
            CorpusSpec(total_queries=0)

    def test_allocate_counts_floor_then_distribute(self):
        assert allocate_counts(1000, [0.4, 0.3, 0.3]) == [400, 300, 300]
        assert allocate_counts(10, [0.4, 0.3, 0.3]) == [4, 3, 3]
        assert allocate_counts(7, [0.4, 0.3, 0.3]) == [3, 2, 2]
        assert sum(allocate_counts(11, [0.4, 0.3, 0.3])) == 11


class TestGeneration:
    def test_seeded_determinism_byte_identical(self, provider, demo_store, demo_kb, tmp_path):
        spec = CorpusSpec(total_queries=120, seed=7)
        first = generate_corpus(spec, demo_store.snapshot(), demo_kb, provider)
        second = generate_corpus(spec, demo_store.snapshot(), demo_kb, provider)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_corpus(first, a)
        write_corpus(second, b)
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_different_corpus(self, provider, demo_store, demo_kb):
        base = generate_corpus(CorpusSpec(total_queries=120, seed=1),
                               demo_store.snapshot(), demo_kb, provider)
        other = generate_corpus(CorpusSpec(total_queries=120, seed=2),
                                demo_store.snapshot(), demo_kb, provider)
        assert [i.query_text for i in base] != [i.query_text for i in other]

    def test_category_proportions_exact(self, provider, demo_store, demo_kb):
        items = generate_corpus(CorpusSpec(total_queries=1000, seed=3),
                                demo_store.snapshot(), demo_kb, provider)
        counts = {
            category: sum(1 for item in items if item.category is category)
            for category in Category
        }
        assert counts[Category.PREDEFINED_FAQ] == 400
        assert counts[Category.CONTEXTUAL] == 300
        assert counts[Category.OUT_OF_DOMAIN] == 300

    def test_followup_count_floor_rule(self, provider, demo_store, demo_kb):
        items = generate_corpus(CorpusSpec(total_queries=10, seed=3),
                                demo_store.snapshot(), demo_kb, provider)
        assert sum(1 for item in items if item.is_followup) == 2
        assert len(items) == 10

    def test_followups_share_antecedent_session(self, provider, demo_store, demo_kb):
        items = generate_corpus(CorpusSpec(total_queries=100, seed=3),
                                demo_store.snapshot(), demo_kb, provider)
        by_session: dict[str, list] = {}
        for item in items:
            by_session.setdefault(item.session_id, []).append(item)
        followups = [item for item in items if item.is_followup]
        assert followups
        for item in followups:
            session = by_session[item.session_id]
            assert len(session) == 2
            assert session[0].turn_order == 0 and not session[0].is_followup
            assert session[1] is item and item.turn_order == 1
            assert session[0].category is item.category

    def test_empty_store_insufficient(self, provider, demo_kb):
        empty = IntentStore(provider)
        with pytest.raises(InsufficientSources):
            generate_corpus(CorpusSpec(total_queries=10), empty.snapshot(), demo_kb, provider)

    def test_empty_kb_insufficient(self, provider, demo_store):
        with pytest.raises(InsufficientSources):
            generate_corpus(CorpusSpec(total_queries=10), demo_store.snapshot(), [], provider)

    def test_corpus_file_round_trip(self, provider, demo_store, demo_kb, tmp_path):
        items = generate_corpus(CorpusSpec(total_queries=50, seed=11),
                                demo_store.snapshot(), demo_kb, provider)
        path = tmp_path / "corpus.jsonl"
        write_corpus(items, path)
        loaded = read_corpus(path)
        assert [i.to_json_dict() for i in loaded] == [i.to_json_dict() for i in items]


class TestRunEval:
    @pytest.fixture()
    def corpus(self, provider, demo_store, demo_kb):
        return generate_corpus(CorpusSpec(total_queries=100, seed=5),
                               demo_store.snapshot(), demo_kb, provider)

    def test_eval_is_read_only(self, provider, demo_store, demo_kb, corpus):
        index = DocumentIndex(demo_kb)
        before = demo_store.snapshot()
        run_eval(corpus, "hybrid", demo_store, index, provider, workers=2)
        after = demo_store.snapshot()
        assert after.version == before.version
        assert [r.to_json_dict() for r in after.records] == [
            r.to_json_dict() for r in before.records
        ]

    def test_unknown_mode_rejected(self, provider, demo_store, demo_kb, corpus):
        with pytest.raises(ValueError):
            run_eval(corpus, "turbo", demo_store, DocumentIndex(demo_kb), provider)

    def test_hybrid_all_faq_never_touches_index(self, provider, demo_store, demo_kb):
        spec = CorpusSpec(total_queries=40, faq_fraction=1.0, contextual_fraction=0.0,
                          ood_fraction=0.0, followup_fraction=0.0, seed=5)
        items = generate_corpus(spec, demo_store.snapshot(), demo_kb, provider)
        index = DocumentIndex(demo_kb)
        report, records = run_eval(items, "hybrid", demo_store, index, provider, workers=2)
        assert index.retrieve_calls == 0
        assert report.accuracy_pct == 100.0
        assert all(rec.response_kind == "canned" for rec in records)

    def test_deterministic_reports_with_injected_timer(self, provider, demo_store,
                                                       demo_kb, corpus):
        index = DocumentIndex(demo_kb)

        def run():
            report, records = run_eval(corpus, "hybrid", demo_store, index, provider,
                                       workers=1, timer=fake_timer())
            return report.to_json_dict(), [r.to_json_dict() for r in records]

        assert run() == run()

    def test_component_errors_recorded_not_raised(self, provider, demo_store,
                                                  demo_kb, corpus):
        class ExplodingIndex(DocumentIndex):
            def retrieve_top_k(self, query_embedding, k):
                raise RuntimeError("index on fire")

        index = ExplodingIndex(demo_kb)
        report, records = run_eval(corpus, "rag_only", demo_store, index, provider,
                                   workers=2)
        assert all(rec.response_kind == "error" for rec in records)
        assert report.accuracy_pct == 0.0
        assert all(rec.resolved is False for rec in records)

    def test_mode_ordering_criteria(self, provider, demo_store, demo_kb):
        # latency comparison needs enough volume to rise above scheduler
        # noise; warm each mode once so the runs compare like for like
        items = generate_corpus(CorpusSpec(total_queries=500, seed=5),
                                demo_store.snapshot(), demo_kb, provider)
        index = DocumentIndex(demo_kb)
        for mode in ("canned_only", "rag_only", "hybrid"):
            run_eval(items[:50], mode, demo_store, index, provider, workers=1)
        canned, _ = run_eval(items, "canned_only", demo_store, index, provider, workers=1)
        rag, _ = run_eval(items, "rag_only", demo_store, index, provider, workers=1)
        hybrid, _ = run_eval(items, "hybrid", demo_store, index, provider, workers=1)
        assert hybrid.accuracy_pct >= canned.accuracy_pct
        assert hybrid.accuracy_pct >= rag.accuracy_pct - 3.0
        assert hybrid.mean_latency_ms <= rag.mean_latency_ms
        assert canned.cost_efficiency == 1.0

    def test_with_feedback_attributes_interactions(self, provider, demo_store, demo_kb):
        from hybridrouter.feedback import FeedbackEngine

        spec = CorpusSpec(total_queries=20, faq_fraction=1.0, contextual_fraction=0.0,
                          ood_fraction=0.0, followup_fraction=0.0, seed=5)
        items = generate_corpus(spec, demo_store.snapshot(), demo_kb, provider)
        engine = FeedbackEngine(demo_store)
        run_eval(items, "hybrid", demo_store, DocumentIndex(demo_kb), provider,
                 workers=1, with_feedback=True, feedback_engine=engine)
        assert sum(w.total_queries for w in engine.windows.values()) == 20
        assert sum(r.hit_count for r in demo_store.snapshot().records) == 20


class TestRunLoad:
    def test_two_level_sweep_shape(self, provider, demo_store, demo_kb):
        spec = CorpusSpec(total_queries=50, seed=5)
        report = run_load([50, 100], spec, demo_store, demo_kb, provider, workers=2)
        assert [row.load for row in report.rows] == [50, 100]
        table = report.render_table()
        header = table.splitlines()[0]
        for column in ("query_load", "accuracy_pct", "mean_latency_ms", "cost_efficiency"):
            assert column in header
        assert "workers: 2" in table

    def test_levels_must_ascend(self, provider, demo_store, demo_kb):
        with pytest.raises(ValueError):
            run_load([100, 50], CorpusSpec(total_queries=50), demo_store, demo_kb, provider)

    def test_monotone_violation_flagged_on_injected_slowdown(self, provider, demo_store,
                                                             demo_kb):
        spec = CorpusSpec(total_queries=40, seed=5)
        report = run_load(
            [40, 80], spec, demo_store, demo_kb, provider, workers=1,
            latency_pad_by_level={40: 50.0},  # first level artificially slow
        )
        assert report.flags
        assert "non-monotone latency" in report.flags[0]
        assert "flag:" in report.render_table()

    def test_no_flag_when_trend_monotone(self, provider, demo_store, demo_kb):
        spec = CorpusSpec(total_queries=40, seed=5)
        report = run_load(
            [40, 80], spec, demo_store, demo_kb, provider, workers=1,
            latency_pad_by_level={80: 50.0},
        )
        assert report.flags == []
