"""The four transform operators.

``explode_records`` pulls the important properties of each raw payload into
a devoted interactions table; anything semantically invalid goes to a
rejects table with a reason, never silently dropped. ``Sessionizer`` is a
stateless scikit-learn style transformer that splits interaction rows into
session sequences at inactivity gaps. ``filter_rows``/``aggregate_rows``
are small declarative row operators.
"""

from __future__ import annotations

from typing import Iterable

from sklearn.base import BaseEstimator, TransformerMixin

from ..events import EVENT_TYPES, ITEM_EVENT_TYPES
from ..rawstore import RawRecord

import json

DEFAULT_GAP_MS = 30 * 60 * 1000  # 30-minute inactivity cutoff


def explode_records(records: Iterable[RawRecord]) -> tuple[list[dict], list[dict]]:
    """Explode raw payloads into (interaction rows, reject rows).

    Total over the stream: every record becomes exactly one row on one side,
    so interactions + rejects always equals the count of parsed inputs.
    """
    interactions: list[dict] = []
    rejects: list[dict] = []
    for rec in records:
        source = [rec.partition_id, rec.record_id]
        try:
            doc = json.loads(rec.payload)
            if not isinstance(doc, dict):
                raise ValueError("not an object")
        except (ValueError, UnicodeDecodeError):
            # ingest guarantees parseability; kept total as defense in depth
            rejects.append(
                {
                    "reason": "MALFORMED_PAYLOAD",
                    "payload": rec.payload.decode("utf-8", "replace"),
                    "ingestion_ts": rec.ingestion_ts,
                    "source": source,
                }
            )
            continue
        reason = _reject_reason(doc)
        if reason is not None:
            row = {
                "reason": reason,
                "session_id": _opt_str(doc.get("session_id")),
                "event_type": _opt_str(doc.get("event_type")),
                "sku": _opt_str(doc.get("sku")),
                "ts": doc.get("ts") if isinstance(doc.get("ts"), int) else None,
                "ingestion_ts": rec.ingestion_ts,
                "source": source,
            }
            rejects.append(row)
            continue
        interactions.append(
            {
                "session_id": doc["session_id"],
                "event_type": doc["event_type"],
                "sku": _opt_str(doc.get("sku")),
                "ts": doc["ts"],
                "ingestion_ts": rec.ingestion_ts,
                "source": source,
            }
        )
    return interactions, rejects


def _opt_str(value) -> str | None:
    if value is None:
        return None
    return value if isinstance(value, str) else str(value)


def _reject_reason(doc: dict) -> str | None:
    sid = doc.get("session_id")
    if not isinstance(sid, str) or not sid:
        return "MISSING_SESSION_ID"
    et = doc.get("event_type")
    if et is None:
        return "MISSING_EVENT_TYPE"
    if et not in EVENT_TYPES:
        return "UNKNOWN_EVENT_TYPE"
    ts = doc.get("ts")
    if not isinstance(ts, int) or isinstance(ts, bool) or ts <= 0:
        return "INVALID_TS"
    return None


class Sessionizer(BaseEstimator, TransformerMixin):
    """Split interaction rows into session sequences at inactivity gaps.

    Rows are grouped by session_id and ordered by (ts, ingestion_ts, source)
    so the result is independent of arrival order. The gap rule looks at all
    rows of a session; only item events with a sku contribute to ``items``.
    Splits that end up with no items produce no sequence (their split index
    is still consumed).
    """

    def __init__(self, gap_ms: int = DEFAULT_GAP_MS, item_event_types: tuple = ITEM_EVENT_TYPES):
        self.gap_ms = gap_ms
        self.item_event_types = item_event_types

    def fit(self, X, y=None):
        return self

    def transform(self, X: Iterable[dict]) -> list[dict]:
        groups: dict[str, list[dict]] = {}
        for row in X:
            groups.setdefault(row["session_id"], []).append(row)

        out: list[dict] = []
        for session_id in sorted(groups):
            rows = sorted(
                groups[session_id],
                key=lambda r: (r["ts"], r["ingestion_ts"], tuple(r["source"])),
            )
            split_index = 0
            current: list[dict] = []
            prev_ts = None
            for row in rows:
                if prev_ts is not None and row["ts"] - prev_ts > self.gap_ms:
                    self._emit(out, session_id, split_index, current)
                    split_index += 1
                    current = []
                current.append(row)
                prev_ts = row["ts"]
            self._emit(out, session_id, split_index, current)
        out.sort(key=lambda r: (r["session_id"], r["split_index"]))
        return out

    def _emit(self, out: list[dict], session_id: str, split_index: int, rows: list[dict]) -> None:
        contributing = [
            r for r in rows if r["sku"] is not None and r["event_type"] in self.item_event_types
        ]
        if not contributing:
            return
        out.append(
            {
                "session_id": session_id,
                "split_index": split_index,
                "items": [r["sku"] for r in contributing],
                "start_ts": contributing[0]["ts"],
                "end_ts": contributing[-1]["ts"],
            }
        )


_FILTER_OPS = {
    "eq": lambda v, arg: v == arg,
    "ne": lambda v, arg: v != arg,
    "gt": lambda v, arg: v is not None and v > arg,
    "ge": lambda v, arg: v is not None and v >= arg,
    "lt": lambda v, arg: v is not None and v < arg,
    "le": lambda v, arg: v is not None and v <= arg,
    "in": lambda v, arg: v in arg,
    "not_in": lambda v, arg: v not in arg,
    "is_null": lambda v, arg: v is None,
    "not_null": lambda v, arg: v is not None,
}


def filter_rows(rows: Iterable[dict], predicate: dict) -> list[dict]:
    """Keep rows matching a declarative predicate {column, op, value?}."""
    column = predicate["column"]
    op = _FILTER_OPS[predicate["op"]]
    value = predicate.get("value")
    return [r for r in rows if op(r.get(column), value)]


def aggregate_rows(rows: Iterable[dict], group_by: list[str], counters: list[dict]) -> list[dict]:
    """Group rows and compute counters.

    Each counter is {name, agg, column?} with agg one of count,
    count_distinct, sum, min, max. Output rows are sorted by group key.
    """
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        key = tuple(row.get(c) for c in group_by)
        groups.setdefault(key, []).append(row)

    out = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        members = groups[key]
        row = {c: v for c, v in zip(group_by, key)}
        for counter in counters:
            agg, col = counter["agg"], counter.get("column")
            values = [m.get(col) for m in members if col is not None and m.get(col) is not None]
            if agg == "count":
                row[counter["name"]] = len(members)
            elif agg == "count_distinct":
                row[counter["name"]] = len(set(values))
            elif agg == "sum":
                row[counter["name"]] = sum(values)
            elif agg == "min":
                row[counter["name"]] = min(values) if values else None
            elif agg == "max":
                row[counter["name"]] = max(values) if values else None
            else:
                raise ValueError(f"unknown aggregation {agg!r}")
        out.append(row)
    return out
