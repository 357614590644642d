"""Declarative data-quality checks that gate the training flow.

A suite is a list of expectations over manifested tables. Checks are exact
full scans (tables here are desk-scale) and the report records the content
hash of every table it looked at, so a report is reproducible evidence.
An empty suite passes vacuously but the report carries a warning flag.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import yaml

from .errors import UnknownColumn, UnknownTable
from .transform.tables import TableStore

EXPECTATION_KINDS = (
    "not_null",
    "unique",
    "accepted_values",
    "row_count_min",
    "max_reject_ratio",
    "freshness_max_age",
)

_COLUMN_KINDS = ("not_null", "unique", "accepted_values")


@dataclass(frozen=True)
class Expectation:
    kind: str
    table: str
    column: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EXPECTATION_KINDS:
            raise ValueError(f"unknown expectation kind {self.kind!r}")
        if self.kind in _COLUMN_KINDS and not self.column:
            raise ValueError(f"{self.kind} needs a column")
        for key in ("max_fraction",):
            if key in self.params and not 0 <= self.params[key] <= 1:
                raise ValueError(f"{key} must be in [0, 1]")
        for key in ("min", "max_age_ms"):
            if key in self.params and self.params[key] < 0:
                raise ValueError(f"{key} must be >= 0")

    @property
    def name(self) -> str:
        target = self.table if self.column is None else f"{self.table}.{self.column}"
        return f"{self.kind}({target})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "table": self.table, "column": self.column, "params": self.params}


@dataclass
class CheckResult:
    expectation: Expectation
    status: str  # "pass" | "fail"
    observed: float | int
    evaluated_at: int

    def to_dict(self) -> dict:
        return {
            "expectation": self.expectation.to_dict(),
            "name": self.expectation.name,
            "status": self.status,
            "observed": self.observed,
            "evaluated_at": self.evaluated_at,
        }


@dataclass
class SuiteReport:
    results: list[CheckResult]
    overall: bool
    empty_suite: bool
    input_manifests: dict
    evaluated_at: int

    def to_dict(self) -> dict:
        return {
            "results": [r.to_dict() for r in self.results],
            "overall": "pass" if self.overall else "fail",
            "empty_suite": self.empty_suite,
            "input_manifests": self.input_manifests,
            "evaluated_at": self.evaluated_at,
        }


@dataclass
class GateDecision:
    passed: bool
    reasons: list[str]
    warning: str | None = None


def rejects_companion(table: str) -> str:
    return f"{table}_rejects"


def run_suite(
    suite: Iterable[Expectation], tables: TableStore, now_ms: int | None = None
) -> SuiteReport:
    """Evaluate every expectation with an exact full scan."""
    suite = list(suite)
    now = int(time.time() * 1000) if now_ms is None else now_ms
    results = []
    manifests: dict[str, str] = {}
    for exp in suite:
        for name in _tables_read(exp):
            if not tables.exists(name):
                raise UnknownTable(f"expectation {exp.name}: no table {name!r}")
            manifests[name] = tables.read_manifest(name).content_hash
        status, observed = _evaluate(exp, tables, now)
        results.append(CheckResult(exp, status, observed, now))
    return SuiteReport(
        results=results,
        overall=all(r.status == "pass" for r in results),
        empty_suite=not suite,
        input_manifests=manifests,
        evaluated_at=now,
    )


def gate(report: SuiteReport) -> GateDecision:
    """Pass iff the whole suite passed; block names every failed check."""
    reasons = [
        f"{r.expectation.name}: observed {r.observed}" for r in report.results if r.status == "fail"
    ]
    warning = "empty suite: vacuous pass" if report.empty_suite else None
    return GateDecision(passed=report.overall, reasons=reasons, warning=warning)


def _tables_read(exp: Expectation) -> list[str]:
    if exp.kind == "max_reject_ratio":
        return [exp.table, rejects_companion(exp.table)]
    return [exp.table]


def _column_values(exp: Expectation, rows: list[dict]) -> list:
    if rows and not any(exp.column in r for r in rows):
        raise UnknownColumn(f"expectation {exp.name}: no column {exp.column!r} in {exp.table!r}")
    return [r.get(exp.column) for r in rows]


def _evaluate(exp: Expectation, tables: TableStore, now: int) -> tuple[str, float | int]:
    if exp.kind == "not_null":
        rows = list(tables.read_rows(exp.table))
        values = _column_values(exp, rows)
        observed = (sum(1 for v in values if v is None) / len(rows)) if rows else 0.0
        limit = exp.params.get("max_fraction", 0.0)
        return ("pass" if observed <= limit else "fail", observed)

    if exp.kind == "unique":
        rows = list(tables.read_rows(exp.table))
        values = _column_values(exp, rows)
        observed = len(values) - len(set(values))  # excess duplicate rows
        return ("pass" if observed <= exp.params.get("max_duplicates", 0) else "fail", observed)

    if exp.kind == "accepted_values":
        rows = list(tables.read_rows(exp.table))
        values = _column_values(exp, rows)
        allowed = set(exp.params["values"])
        observed = sum(1 for v in values if v not in allowed)
        return ("pass" if observed == 0 else "fail", observed)

    if exp.kind == "row_count_min":
        observed = tables.read_manifest(exp.table).row_count
        return ("pass" if observed >= exp.params["min"] else "fail", observed)

    if exp.kind == "max_reject_ratio":
        kept = tables.read_manifest(exp.table).row_count
        rejected = tables.read_manifest(rejects_companion(exp.table)).row_count
        total = kept + rejected
        observed = (rejected / total) if total else 0.0
        limit = exp.params.get("max_fraction", 0.0)
        return ("pass" if observed <= limit else "fail", observed)

    if exp.kind == "freshness_max_age":
        observed = now - tables.read_manifest(exp.table).updated_at
        return ("pass" if observed <= exp.params["max_age_ms"] else "fail", observed)

    raise ValueError(f"unknown expectation kind {exp.kind!r}")


def load_suite(path: str | Path) -> list[Expectation]:
    doc = yaml.safe_load(Path(path).read_text()) or {}
    return [
        Expectation(
            kind=e["kind"],
            table=e["table"],
            column=e.get("column"),
            params=dict(e.get("params") or {}),
        )
        for e in doc.get("expectations", [])
    ]


def default_suite(min_rows: int = 1, max_reject_fraction: float = 0.02) -> list[Expectation]:
    """The shipped defaults; thresholds come from config, not code."""
    return [
        Expectation("not_null", "interactions", "session_id", {"max_fraction": 0.0}),
        Expectation(
            "accepted_values",
            "interactions",
            "event_type",
            {"values": ["pageview", "detail", "add", "purchase", "remove"]},
        ),
        Expectation("max_reject_ratio", "interactions", None, {"max_fraction": max_reject_fraction}),
        Expectation("row_count_min", "interactions", None, {"min": min_rows}),
        Expectation("freshness_max_age", "interactions", None, {"max_age_ms": 2 * 3600 * 1000}),
    ]


def write_report(report: SuiteReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def render_report(report: SuiteReport) -> str:
    lines = []
    for r in report.results:
        lines.append(f"[{r.status.upper():4}] {r.expectation.name} observed={r.observed}")
    if report.empty_suite:
        lines.append("[WARN] empty suite: vacuous pass")
    lines.append(f"overall: {'pass' if report.overall else 'fail'}")
    return "\n".join(lines)
