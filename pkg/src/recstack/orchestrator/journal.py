"""Append-only run-event journal; current state is a fold over events.

Every state transition the scheduler makes is one JSON line. Rebuilding an
orchestrator is therefore just re-reading the file, and run histories stay
auditable after the fact. Event timestamps are wall-clock ms (float, so
sub-millisecond deltas survive for backoff assertions).
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path


def now_ms() -> float:
    return time.time() * 1000.0


class Journal:
    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._events: list[dict] = []
        if self.path.exists():
            raw = self.path.read_bytes()
            offset = 0
            for line in raw.splitlines(keepends=True):
                stripped = line.strip()
                if stripped:
                    try:
                        self._events.append(json.loads(stripped))
                    except json.JSONDecodeError:
                        # unterminated tail = crash mid-write: drop it and resume;
                        # a complete line that will not parse is real corruption
                        if not line.endswith(b"\n"):
                            break
                        raise
                offset += len(line)
            if offset < len(raw):
                with open(self.path, "r+b") as f:
                    f.truncate(offset)
        self.seq = self._events[-1]["seq"] if self._events else 0
        self._file = open(self.path, "ab")

    def append(self, kind: str, run_id: str | None, data: dict | None = None) -> dict:
        with self._lock:
            self.seq += 1
            event = {
                "seq": self.seq,
                "ts": now_ms(),
                "kind": kind,
                "run_id": run_id,
                "data": data or {},
            }
            self._file.write((json.dumps(event, sort_keys=True) + "\n").encode())
            self._file.flush()
            os.fsync(self._file.fileno())
            self._events.append(event)
            return event

    def events(self, run_id: str | None = None) -> list[dict]:
        with self._lock:
            if run_id is None:
                return list(self._events)
            return [e for e in self._events if e["run_id"] == run_id]

    def close(self) -> None:
        with self._lock:
            self._file.close()


TERMINAL_TASK = ("succeeded", "failed", "skipped")
TERMINAL_RUN = ("succeeded", "failed")


@dataclass
class TaskState:
    name: str
    status: str = "pending"
    attempts: int = 0
    next_attempt: int = 1
    started_at: float | None = None
    last_started_at: float | None = None
    ended_at: float | None = None
    failed_at: float | None = None
    retry_eta: float | None = None
    error: str | None = None
    result: dict | None = None

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "attempts": self.attempts,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "retry_eta": self.retry_eta,
            "error": self.error,
            "result": self.result,
        }


@dataclass
class RunState:
    run_id: str
    flow: str
    spec: dict
    params: dict
    created_at: float
    status: str = "pending"
    started_at: float | None = None
    ended_at: float | None = None
    reason: str | None = None
    retry_of: str | None = None
    cancel_requested: bool = False
    seq: int = 0
    tasks: dict[str, TaskState] = field(default_factory=dict)
    notifications: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        counts: dict[str, int] = {}
        for t in self.tasks.values():
            counts[t.status] = counts.get(t.status, 0) + 1
        return {
            "run_id": self.run_id,
            "flow": self.flow,
            "status": self.status,
            "reason": self.reason,
            "created_at": self.created_at,
            "started_at": self.started_at,
            "ended_at": self.ended_at,
            "retry_of": self.retry_of,
            "cancel_requested": self.cancel_requested,
            "seq": self.seq,
            "task_counts": counts,
            "attempts": sum(t.attempts for t in self.tasks.values()),
        }

    def detail(self) -> dict:
        doc = self.summary()
        doc["params"] = self.params
        doc["spec"] = self.spec
        doc["tasks"] = {name: t.to_dict() for name, t in self.tasks.items()}
        doc["notifications"] = self.notifications
        return doc


def fold_events(events: list[dict]) -> tuple[dict[str, list[dict]], dict[str, RunState]]:
    """Rebuild (flows, runs) from the journal. Pure function of the event list."""
    flows: dict[str, list[dict]] = {}
    runs: dict[str, RunState] = {}
    for e in events:
        apply_event(flows, runs, e)
    return flows, runs


def apply_event(flows: dict, runs: dict[str, RunState], e: dict) -> None:
    kind, data, run_id = e["kind"], e["data"], e["run_id"]
    if kind == "flow_registered":
        flows.setdefault(data["flow"], []).append(data["spec"])
        return
    if kind == "run_created":
        run = RunState(
            run_id=run_id,
            flow=data["flow"],
            spec=data["spec"],
            params=data.get("params", {}),
            created_at=e["ts"],
            retry_of=data.get("retry_of"),
        )
        run.tasks = {t["name"]: TaskState(name=t["name"]) for t in data["spec"]["tasks"]}
        runs[run_id] = run
        run.seq = e["seq"]
        return
    run = runs.get(run_id)
    if run is None:
        return
    run.seq = e["seq"]
    task = run.tasks.get(data["task"]) if "task" in data else None
    if kind == "task_started":
        task.status = "running"
        task.attempts = max(task.attempts, data["attempt"])
        task.retry_eta = None
        if task.started_at is None:
            task.started_at = e["ts"]
        task.last_started_at = e["ts"]
        if run.status == "pending":
            run.status = "running"
            run.started_at = e["ts"]
    elif kind == "task_succeeded":
        task.status = "succeeded"
        task.ended_at = e["ts"]
        task.error = None
        task.result = data.get("result")
    elif kind == "task_retrying":
        task.status = "retrying"
        task.error = data.get("error")
        task.failed_at = data.get("failed_at", e["ts"])
        task.retry_eta = data.get("eta", e["ts"])
        task.next_attempt = data.get("next_attempt", task.attempts + 1)
    elif kind == "task_failed":
        task.status = "failed"
        task.ended_at = e["ts"]
        task.error = data.get("error")
    elif kind == "task_skipped":
        task.status = "skipped"
        task.ended_at = e["ts"]
        task.error = data.get("reason")
    elif kind == "run_cancel_requested":
        run.cancel_requested = True
    elif kind == "run_succeeded":
        run.status = "succeeded"
        run.ended_at = e["ts"]
    elif kind == "run_failed":
        run.status = "failed"
        run.reason = data.get("reason")
        run.ended_at = e["ts"]
    elif kind == "notification_attempt":
        run.notifications.append({**data, "ts": e["ts"]})
