"""Intent inventory: canned responses, exemplar centroids, adaptive thresholds.

The store is the single writer-serialized source of truth for intents.
Every mutation bumps a monotone version; readers get consistent
point-in-time snapshots. A capacity-bounded LRU fronts reads and is
invalidated per key on write, so a reader never sees a record older than
the latest committed version for that key within one process.

Per-intent ``tau_faq`` lives here because the feedback loop retunes it;
the out-of-domain floor ``tau_ood`` is global and fixed at 0.5.
"""

from __future__ import annotations

import json
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Iterable

import numpy as np

from .embedding import as_embedding, normalize

DEFAULT_TAU_FAQ = 0.85
TAU_OOD = 0.5
TAU_FAQ_FLOOR = 0.5  # exclusive
TAU_FAQ_CEIL = 0.98  # inclusive
DEFAULT_CACHE_CAPACITY = 1000


class ValidationFailed(Exception):
    """An intent record violated its invariants; ``fields`` lists diagnostics."""

    def __init__(self, fields: dict[str, str]):
        self.fields = fields
        super().__init__("; ".join(f"{k}: {v}" for k, v in sorted(fields.items())))


class UnknownIntent(Exception):
    """Operation referenced an intent_id that is not in the store."""


class CorruptStore(Exception):
    """A persisted store file failed to parse; message carries line/field info."""


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class IntentRecord:
    """One intent: exemplars, their centroid, canned answer, live threshold."""

    intent_id: str
    display_name: str
    exemplar_texts: list[str]
    canned_response: str
    exemplar_embedding: np.ndarray | None = None
    tau_faq: float = DEFAULT_TAU_FAQ
    created_at: str = ""
    updated_at: str = ""
    hit_count: int = 0

    def validate(self) -> None:
        problems: dict[str, str] = {}
        if not self.intent_id or not self.intent_id.strip():
            problems["intent_id"] = "must be a non-empty string"
        if not self.exemplar_texts:
            problems["exemplar_texts"] = "at least one exemplar required"
        elif any(not t.strip() for t in self.exemplar_texts):
            problems["exemplar_texts"] = "exemplars must be non-blank"
        if not self.canned_response.strip():
            problems["canned_response"] = "must be non-empty"
        if not (TAU_FAQ_FLOOR < self.tau_faq <= TAU_FAQ_CEIL):
            problems["tau_faq"] = (
                f"must satisfy {TAU_FAQ_FLOOR} < tau <= {TAU_FAQ_CEIL}, got {self.tau_faq}"
            )
        if self.hit_count < 0:
            problems["hit_count"] = "must be non-negative"
        if problems:
            raise ValidationFailed(problems)

    def to_json_dict(self) -> dict:
        return {
            "intent_id": self.intent_id,
            "display_name": self.display_name,
            "exemplar_texts": list(self.exemplar_texts),
            "canned_response": self.canned_response,
            "exemplar_embedding": (
                None
                if self.exemplar_embedding is None
                else [float(x) for x in self.exemplar_embedding]
            ),
            "tau_faq": self.tau_faq,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "hit_count": self.hit_count,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "IntentRecord":
        embedding = data.get("exemplar_embedding")
        return cls(
            intent_id=data["intent_id"],
            display_name=data["display_name"],
            exemplar_texts=list(data["exemplar_texts"]),
            canned_response=data["canned_response"],
            exemplar_embedding=None if embedding is None else as_embedding(embedding),
            tau_faq=data["tau_faq"],
            created_at=data["created_at"],
            updated_at=data["updated_at"],
            hit_count=data["hit_count"],
        )


@dataclass(frozen=True)
class IntentStoreSnapshot:
    """Consistent point-in-time view of the store."""

    version: int
    records: tuple[IntentRecord, ...]
    tau_ood: float = TAU_OOD

    def record(self, intent_id: str) -> IntentRecord | None:
        for rec in self.records:
            if rec.intent_id == intent_id:
                return rec
        return None

    @property
    def intent_ids(self) -> tuple[str, ...]:
        return tuple(rec.intent_id for rec in self.records)


class LRUCache:
    """Small thread-safe LRU used by the store and the service layer."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key):
        with self._lock:
            if key not in self._data:
                self.misses += 1
                return None
            self._data.move_to_end(key)
            self.hits += 1
            return self._data[key]

    def put(self, key, value) -> None:
        if self.capacity <= 0:
            return
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.capacity:
                self._data.popitem(last=False)

    def invalidate(self, key) -> None:
        with self._lock:
            self._data.pop(key, None)

    def clear(self) -> None:
        with self._lock:
            self._data.clear()

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)


def exemplar_centroid(exemplar_texts: Iterable[str], provider) -> np.ndarray:
    """Arithmetic mean of exemplar embeddings, re-normalized to unit length."""
    vectors = [provider.embed_text(text) for text in exemplar_texts]
    return normalize(np.mean(np.stack(vectors), axis=0))


class IntentStore:
    """Many concurrent readers, single serialized writer.

    Mutation listeners fire (intent_id, change_kind) after the version bump
    so outer layers (e.g. the service response cache) can invalidate.
    """

    def __init__(self, provider, cache_capacity: int = DEFAULT_CACHE_CAPACITY,
                 clock: Callable[[], str] = _utc_now_iso):
        self._provider = provider
        self._clock = clock
        self._records: dict[str, IntentRecord] = {}
        self._version = 0
        self._lock = threading.RLock()
        self._cache = LRUCache(cache_capacity)
        self._listeners: list[Callable[[str, str], None]] = []

    # -- observation --------------------------------------------------------

    @property
    def version(self) -> int:
        with self._lock:
            return self._version

    def add_listener(self, fn: Callable[[str, str], None]) -> None:
        self._listeners.append(fn)

    def _notify(self, intent_id: str, kind: str) -> None:
        for fn in self._listeners:
            fn(intent_id, kind)

    def get(self, intent_id: str) -> IntentRecord | None:
        cached = self._cache.get(intent_id)
        if cached is not None:
            return cached
        with self._lock:
            rec = self._records.get(intent_id)
        if rec is not None:
            self._cache.put(intent_id, rec)
        return rec

    def snapshot(self) -> IntentStoreSnapshot:
        with self._lock:
            records = tuple(
                replace(rec) for _, rec in sorted(self._records.items())
            )
            return IntentStoreSnapshot(version=self._version, records=records)

    @property
    def cache_stats(self) -> tuple[int, int]:
        return self._cache.hits, self._cache.misses

    # -- mutation ------------------------------------------------------------

    def upsert_intent(self, record: IntentRecord) -> IntentStoreSnapshot:
        """Insert or replace an intent.

        The exemplar centroid is always recomputed from ``exemplar_texts``.
        ``tau_faq`` resets to the 0.85 default whenever exemplars or the
        canned response change (including first insert); otherwise the
        live threshold survives the upsert. ``created_at`` and
        ``hit_count`` are preserved for existing intents.
        """
        record.validate()
        with self._lock:
            existing = self._records.get(record.intent_id)
            content_changed = (
                existing is None
                or existing.exemplar_texts != record.exemplar_texts
                or existing.canned_response != record.canned_response
            )
            now = self._clock()
            stored = replace(
                record,
                exemplar_texts=list(record.exemplar_texts),
                exemplar_embedding=exemplar_centroid(record.exemplar_texts, self._provider),
                tau_faq=DEFAULT_TAU_FAQ if content_changed else existing.tau_faq,
                created_at=existing.created_at if existing else (record.created_at or now),
                updated_at=now,
                hit_count=existing.hit_count if existing else record.hit_count,
            )
            self._records[record.intent_id] = stored
            self._version += 1
            self._cache.invalidate(record.intent_id)
            snap = self.snapshot()
        self._notify(record.intent_id, "upsert")
        return snap

    def delete_intent(self, intent_id: str) -> IntentStoreSnapshot:
        with self._lock:
            if intent_id not in self._records:
                raise UnknownIntent(intent_id)
            del self._records[intent_id]
            self._version += 1
            self._cache.invalidate(intent_id)
            snap = self.snapshot()
        self._notify(intent_id, "delete")
        return snap

    def update_tau(self, intent_id: str, tau_faq: float) -> float:
        """Set a live threshold (feedback loop path). Bumps version."""
        with self._lock:
            rec = self._records.get(intent_id)
            if rec is None:
                raise UnknownIntent(intent_id)
            if not (TAU_FAQ_FLOOR < tau_faq <= TAU_FAQ_CEIL):
                raise ValidationFailed(
                    {"tau_faq": f"{tau_faq} outside ({TAU_FAQ_FLOOR}, {TAU_FAQ_CEIL}]"}
                )
            self._records[intent_id] = replace(
                rec, tau_faq=tau_faq, updated_at=self._clock()
            )
            self._version += 1
            self._cache.invalidate(intent_id)
        self._notify(intent_id, "tau")
        return tau_faq

    def increment_hit(self, intent_id: str) -> None:
        with self._lock:
            rec = self._records.get(intent_id)
            if rec is None:
                raise UnknownIntent(intent_id)
            self._records[intent_id] = replace(rec, hit_count=rec.hit_count + 1)
            self._version += 1
            self._cache.invalidate(intent_id)
        self._notify(intent_id, "hit")

    # -- persistence ---------------------------------------------------------

    def persist(self, path) -> None:
        """Write ``intents.jsonl``: one meta line, then one record per line."""
        snap = self.snapshot()
        lines = [json.dumps({"meta": {"version": snap.version, "tau_ood": snap.tau_ood}})]
        for rec in snap.records:
            lines.append(json.dumps(rec.to_json_dict(), sort_keys=True))
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path, provider, cache_capacity: int = DEFAULT_CACHE_CAPACITY,
             clock: Callable[[], str] = _utc_now_iso) -> "IntentStore":
        """Rebuild a store from ``persist`` output, field-for-field."""
        store = cls(provider, cache_capacity=cache_capacity, clock=clock)
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
        if not raw_lines:
            raise CorruptStore(f"{path}: empty file (missing meta line)")
        try:
            meta_obj = json.loads(raw_lines[0])
            meta = meta_obj["meta"]
            version = int(meta["version"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CorruptStore(f"{path}: line 1: bad meta line ({exc})") from exc
        for lineno, line in enumerate(raw_lines[1:], start=2):
            if not line.strip():
                continue
            try:
                rec = IntentRecord.from_json_dict(json.loads(line))
                rec.validate()
            except (json.JSONDecodeError, KeyError, TypeError, ValueError,
                    ValidationFailed) as exc:
                raise CorruptStore(f"{path}: line {lineno}: {exc}") from exc
            store._records[rec.intent_id] = rec
        store._version = version
        return store

    @classmethod
    def from_snapshot(cls, snapshot: IntentStoreSnapshot, provider,
                      cache_capacity: int = DEFAULT_CACHE_CAPACITY,
                      clock: Callable[[], str] = _utc_now_iso) -> "IntentStore":
        """Independent store copy; used for read-only evaluation replays."""
        store = cls(provider, cache_capacity=cache_capacity, clock=clock)
        for rec in snapshot.records:
            store._records[rec.intent_id] = replace(
                rec, exemplar_texts=list(rec.exemplar_texts)
            )
        store._version = snapshot.version
        return store
