"""Evaluation metrics: accuracy, latency, cost efficiency, turn efficiency.

Correctness is similarity-based: a predefined-FAQ answer must be the
intent's canned response verbatim (after whitespace normalization, which
is applied before the check); contextual and out-of-domain answers must
reach cosine >= 0.90 against the annotated ground truth.

Cost efficiency compares a candidate against a baseline:
``CE = min(1, (latency_base / latency_cand) * (accuracy_cand / accuracy_base))``
so CE is 1 whenever the candidate dominates on both axes, strictly
decreasing in candidate latency and strictly increasing in candidate
accuracy below the clamp.

Turn efficiency is total turns divided by resolved queries, where a
query counts as resolved when its session reached at least one correct
response.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum

from .embedding import EmptyText, cosine_similarity

SIMILARITY_FLOOR = 0.90


class Category(str, Enum):
    PREDEFINED_FAQ = "predefined_faq"
    CONTEXTUAL = "contextual"
    OUT_OF_DOMAIN = "out_of_domain"


class MissingGroundTruth(Exception):
    pass


class NonPositiveInput(Exception):
    pass


class NoResolvedQueries(Exception):
    pass


class EmptyEvaluation(Exception):
    pass


_WS_RE = re.compile(r"\s+")


def normalize_whitespace(text: str) -> str:
    return _WS_RE.sub(" ", text).strip()


@dataclass
class EvalRecord:
    query_id: str
    category: Category
    ground_truth_text: str
    response_text: str
    response_kind: str
    latency_ms: float
    session_id: str
    turn_index: int
    resolved: bool | None = None

    def to_json_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "category": self.category.value,
            "ground_truth_text": self.ground_truth_text,
            "response_text": self.response_text,
            "response_kind": self.response_kind,
            "latency_ms": self.latency_ms,
            "session_id": self.session_id,
            "turn_index": self.turn_index,
            "resolved": self.resolved,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EvalRecord":
        return cls(
            query_id=data["query_id"],
            category=Category(data["category"]),
            ground_truth_text=data["ground_truth_text"],
            response_text=data["response_text"],
            response_kind=data["response_kind"],
            latency_ms=float(data["latency_ms"]),
            session_id=data["session_id"],
            turn_index=int(data["turn_index"]),
            resolved=data.get("resolved"),
        )


def score_record(record: EvalRecord, provider) -> bool:
    """Correctness of one record under the category's rule."""
    if not record.ground_truth_text.strip():
        raise MissingGroundTruth(record.query_id)
    response = normalize_whitespace(record.response_text)
    truth = normalize_whitespace(record.ground_truth_text)
    if record.category is Category.PREDEFINED_FAQ:
        return response == truth
    if not response:
        return False
    try:
        sim = cosine_similarity(
            provider.embed_text(response), provider.embed_text(truth)
        )
    except EmptyText:
        return False
    return sim >= SIMILARITY_FLOOR


def score_accuracy(records: list[EvalRecord], provider) -> float:
    """Percentage of correct records."""
    if not records:
        raise EmptyEvaluation("no records to score")
    correct = sum(1 for rec in records if score_record(rec, provider))
    return correct / len(records) * 100.0


def cost_efficiency(lat_base_ms: float, acc_base_pct: float,
                    lat_prop_ms: float, acc_prop_pct: float) -> float:
    for name, value in (
        ("lat_base_ms", lat_base_ms), ("acc_base_pct", acc_base_pct),
        ("lat_prop_ms", lat_prop_ms), ("acc_prop_pct", acc_prop_pct),
    ):
        if value <= 0:
            raise NonPositiveInput(f"{name} must be > 0, got {value}")
    return min(1.0, (lat_base_ms / lat_prop_ms) * (acc_prop_pct / acc_base_pct))


def turn_efficiency(total_turns: int, resolved_queries: int) -> float:
    if resolved_queries <= 0:
        raise NoResolvedQueries("turn efficiency undefined with zero resolutions")
    return total_turns / resolved_queries


def _p95(latencies: list[float]) -> float:
    """Nearest-rank 95th percentile."""
    ordered = sorted(latencies)
    rank = max(1, math.ceil(0.95 * len(ordered)))
    return ordered[rank - 1]


@dataclass(frozen=True)
class BaselineStats:
    latency_ms: float
    accuracy_pct: float


@dataclass(frozen=True)
class CategoryStats:
    count: int
    accuracy_pct: float
    mean_latency_ms: float
    latency_p95_ms: float
    cost_efficiency: float | None


@dataclass(frozen=True)
class MetricsReport:
    total_records: int
    accuracy_pct: float
    mean_latency_ms: float
    latency_p95_ms: float
    cost_efficiency: float | None
    turn_efficiency: float | None
    per_category: dict[str, CategoryStats]

    def to_json_dict(self) -> dict:
        return {
            "total_records": self.total_records,
            "accuracy_pct": self.accuracy_pct,
            "mean_latency_ms": self.mean_latency_ms,
            "latency_p95_ms": self.latency_p95_ms,
            "cost_efficiency": self.cost_efficiency,
            "turn_efficiency": self.turn_efficiency,
            "per_category": {
                name: {
                    "count": stats.count,
                    "accuracy_pct": stats.accuracy_pct,
                    "mean_latency_ms": stats.mean_latency_ms,
                    "latency_p95_ms": stats.latency_p95_ms,
                    "cost_efficiency": stats.cost_efficiency,
                }
                for name, stats in self.per_category.items()
            },
        }

    def to_text_table(self, label: str = "evaluation") -> str:
        """Aligned-column table: one overall row plus one row per category."""
        headers = ["scope", "n", "accuracy_pct", "mean_latency_ms", "p95_ms", "cost_eff", "turn_eff"]
        rows = [[
            label, str(self.total_records), f"{self.accuracy_pct:.1f}",
            f"{self.mean_latency_ms:.2f}", f"{self.latency_p95_ms:.2f}",
            "-" if self.cost_efficiency is None else f"{self.cost_efficiency:.2f}",
            "NA" if self.turn_efficiency is None else f"{self.turn_efficiency:.2f}",
        ]]
        for name, stats in self.per_category.items():
            rows.append([
                name, str(stats.count), f"{stats.accuracy_pct:.1f}",
                f"{stats.mean_latency_ms:.2f}", f"{stats.latency_p95_ms:.2f}",
                "-" if stats.cost_efficiency is None else f"{stats.cost_efficiency:.2f}",
                "",
            ])
        widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        for row in rows:
            lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
        return "\n".join(lines)


def summarize(records: list[EvalRecord], provider,
              baseline: BaselineStats | None = None) -> MetricsReport:
    """Aggregate all four metrics plus the per-category breakdown.

    Cost efficiency needs a baseline; without one the CE fields are None.
    Turn efficiency is None when no session resolved.
    """
    if not records:
        raise EmptyEvaluation("no records to summarize")

    correct_by_id = {rec.query_id: score_record(rec, provider) for rec in records}
    for rec in records:
        rec.resolved = correct_by_id[rec.query_id]

    def _stats(subset: list[EvalRecord]) -> CategoryStats:
        latencies = [rec.latency_ms for rec in subset]
        accuracy = sum(1 for rec in subset if correct_by_id[rec.query_id]) / len(subset) * 100.0
        mean_latency = sum(latencies) / len(latencies)
        ce = None
        if baseline is not None and accuracy > 0 and mean_latency > 0:
            ce = cost_efficiency(
                baseline.latency_ms, baseline.accuracy_pct, mean_latency, accuracy
            )
        return CategoryStats(
            count=len(subset),
            accuracy_pct=accuracy,
            mean_latency_ms=mean_latency,
            latency_p95_ms=_p95(latencies),
            cost_efficiency=ce,
        )

    overall = _stats(records)
    per_category = {
        category.value: _stats(subset)
        for category in Category
        if (subset := [rec for rec in records if rec.category is category])
    }

    resolved_sessions = {rec.session_id for rec in records if correct_by_id[rec.query_id]}
    te = turn_efficiency(len(records), len(resolved_sessions)) if resolved_sessions else None

    return MetricsReport(
        total_records=len(records),
        accuracy_pct=overall.accuracy_pct,
        mean_latency_ms=overall.mean_latency_ms,
        latency_p95_ms=overall.latency_p95_ms,
        cost_efficiency=overall.cost_efficiency,
        turn_efficiency=te,
        per_category=per_category,
    )


def write_records(records: list[EvalRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")


def read_records(path) -> list[EvalRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(EvalRecord.from_json_dict(json.loads(line)))
    return records
