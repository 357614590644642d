"""The flow scheduler.

One scheduler thread owns every state transition; workers in a bounded
pool execute task actions and report completions through a queue. All
transitions are appended to the journal before the in-memory state moves,
so a restart rebuilds exactly what was persisted; a task that was mid-run
at the crash is marked retrying and re-executed with the same attempt
number (the dead process cannot race it).

Retry backoff for a task that failed on attempt n is
base * factor^(n-1) seconds, measured from the worker-observed failure
time; the task starts at the first scheduler tick past that deadline, so
observed delays sit within one tick of the configured schedule.
"""

from __future__ import annotations

import queue
import threading
import time
import uuid
from pathlib import Path

import httpx

from ..errors import (
    InvalidSpec,
    RunNotActive,
    RunNotFailed,
    RunNotTerminal,
    TaskCancelled,
    UnknownFlow,
    UnknownRun,
)
from .actions import TaskContext
from .flowspec import FlowSpec, TaskSpec
from .journal import TERMINAL_RUN, TERMINAL_TASK, Journal, RunState, apply_event, now_ms


class Orchestrator:
    def __init__(
        self,
        journal_path: str | Path,
        runner,
        tick: float = 0.25,
        max_workers: int = 4,
        webhook_url: str | None = None,
        webhook_attempts: int = 3,
    ):
        self.journal = Journal(journal_path)
        self.runner = runner
        self.tick = tick
        self.max_workers = max_workers
        self.webhook_url = webhook_url
        self.webhook_attempts = webhook_attempts

        self._lock = threading.RLock()
        self._flows, self._runs = {}, {}
        for event in self.journal.events():
            apply_event(self._flows, self._runs, event)
        self._specs: dict[str, FlowSpec] = {}
        self._completions: queue.Queue = queue.Queue()
        self._inflight: set[tuple[str, str]] = set()
        self._cancel_flags: dict[str, threading.Event] = {}
        self._notified: set[str] = set()
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None
        self._workers: list[threading.Thread] = []

        for run in self._runs.values():
            flag = threading.Event()
            if run.cancel_requested:
                flag.set()
            self._cancel_flags[run.run_id] = flag
            if any(n.get("ok") for n in run.notifications):
                self._notified.add(run.run_id)
            if run.status not in TERMINAL_RUN:
                for task in run.tasks.values():
                    if task.status == "running":
                        # crashed mid-task: re-run the same attempt, due now
                        self._emit(
                            "task_retrying",
                            run.run_id,
                            {
                                "task": task.name,
                                "attempt": task.attempts,
                                "next_attempt": max(1, task.attempts),
                                "error": "interrupted by scheduler restart",
                                "failed_at": now_ms(),
                                "delay_s": 0.0,
                                "eta": now_ms(),
                            },
                        )

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "Orchestrator":
        self._thread = threading.Thread(target=self._loop, daemon=True, name="recstack-scheduler")
        self._thread.start()
        with self._lock:
            missing = [
                r.run_id
                for r in self._runs.values()
                if r.status in TERMINAL_RUN and self.webhook_url and r.run_id not in self._notified
            ]
        for run_id in missing:
            self._spawn_delivery(run_id)
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=30)
        for w in self._workers:
            w.join(timeout=30)
        # persist completions that raced the shutdown, but start nothing new
        while True:
            try:
                self._handle_completion(self._completions.get_nowait())
            except queue.Empty:
                break
        self._advance(schedule=False)
        self.journal.close()

    def crash(self) -> None:
        """Fault injection for tests: die without draining completions."""
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=30)
        self.journal.close()

    # -- public API ----------------------------------------------------------

    def register(self, spec: FlowSpec) -> str:
        spec.validate()
        with self._lock:
            version = len(self._flows.get(spec.name, [])) + 1
            self._emit(
                "flow_registered", None, {"flow": spec.name, "version": version, "spec": spec.to_dict()}
            )
        return spec.name

    def flows(self) -> dict[str, dict]:
        with self._lock:
            return {name: {"versions": len(specs)} for name, specs in self._flows.items()}

    def run_flow(self, flow: str, params: dict | None = None, retry_of: str | None = None) -> str:
        with self._lock:
            if flow not in self._flows:
                raise UnknownFlow(f"no flow named {flow!r}")
            snapshot = self._flows[flow][-1]
            return self._create_run(flow, snapshot, params or {}, retry_of)

    def _create_run(self, flow: str, snapshot: dict, params: dict, retry_of: str | None) -> str:
        run_id = f"run-{self.journal.seq + 1:06d}-{uuid.uuid4().hex[:8]}"
        self._cancel_flags[run_id] = threading.Event()
        self._emit(
            "run_created",
            run_id,
            {"flow": flow, "spec": snapshot, "params": params, "retry_of": retry_of},
        )
        return run_id

    def get_run(self, run_id: str) -> dict:
        with self._lock:
            run = self._runs.get(run_id)
            if run is None:
                raise UnknownRun(f"no run {run_id!r}")
            return run.detail()

    def list_runs(self, status: str | None = None, page: int = 1, page_size: int = 20) -> dict:
        if page < 1 or page_size < 1:
            raise InvalidSpec("page and page_size must be >= 1")
        with self._lock:
            runs = [r for r in self._runs.values() if status is None or r.status == status]
            runs.sort(key=lambda r: (r.created_at, r.run_id), reverse=True)
            total = len(runs)
            start = (page - 1) * page_size
            return {
                "runs": [r.summary() for r in runs[start : start + page_size]],
                "page": page,
                "page_size": page_size,
                "total": total,
                "pages": (total + page_size - 1) // page_size,
            }

    def retry_run(self, run_id: str) -> str:
        with self._lock:
            run = self._require_run(run_id)
            if run.status not in TERMINAL_RUN:
                raise RunNotTerminal(f"run {run_id} is {run.status}")
            if run.status != "failed":
                raise RunNotFailed(f"run {run_id} succeeded; nothing to retry")
            return self._create_run(run.flow, run.spec, run.params, retry_of=run_id)

    def cancel_run(self, run_id: str) -> None:
        with self._lock:
            run = self._require_run(run_id)
            if run.status in TERMINAL_RUN:
                raise RunNotActive(f"run {run_id} already {run.status}")
            self._emit("run_cancel_requested", run_id, {})
            self._cancel_flags[run_id].set()

    def wait_for_run(self, run_id: str, timeout: float = 60.0) -> dict:
        """Block until the run is terminal (convenience for CLI and tests)."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            detail = self.get_run(run_id)
            if detail["status"] in TERMINAL_RUN:
                return detail
            time.sleep(min(self.tick, 0.05))
        raise TimeoutError(f"run {run_id} not terminal after {timeout}s")

    def _require_run(self, run_id: str) -> RunState:
        run = self._runs.get(run_id)
        if run is None:
            raise UnknownRun(f"no run {run_id!r}")
        return run

    # -- internals -----------------------------------------------------------

    def _emit(self, kind: str, run_id: str | None, data: dict) -> None:
        event = self.journal.append(kind, run_id, data)
        with self._lock:
            apply_event(self._flows, self._runs, event)

    def _spec_for(self, run: RunState) -> FlowSpec:
        spec = self._specs.get(run.run_id)
        if spec is None:
            spec = FlowSpec.from_dict(run.spec)
            self._specs[run.run_id] = spec
        return spec

    def _loop(self) -> None:
        while not self._stop.is_set():
            try:
                try:
                    self._handle_completion(self._completions.get(timeout=self._poll_timeout()))
                    while True:
                        self._handle_completion(self._completions.get_nowait())
                except queue.Empty:
                    pass
                self._advance()
            except Exception as exc:  # keep the loop alive; the journal has the trace
                self.journal.append("scheduler_error", None, {"error": repr(exc)})

    def _poll_timeout(self) -> float:
        """Sleep until the next retry eta if one lands inside the tick.

        Waking exactly at the eta keeps observed backoff within a few
        milliseconds of the configured delay instead of a whole tick late.
        """
        with self._lock:
            etas = [
                t.retry_eta
                for r in self._runs.values()
                if r.status not in TERMINAL_RUN and not r.cancel_requested
                for t in r.tasks.values()
                if t.status == "retrying" and t.retry_eta is not None
            ]
        if not etas:
            return self.tick
        wait_s = (min(etas) - now_ms()) / 1000.0
        return min(self.tick, max(0.005, wait_s))

    def _handle_completion(self, item: tuple) -> None:
        run_id, task_name, attempt, status, payload, ended = item
        with self._lock:
            self._inflight.discard((run_id, task_name))
            run = self._runs.get(run_id)
            if run is None:
                return
            task_spec = self._spec_for(run).task(task_name)
            if status == "ok":
                self._emit(
                    "task_succeeded", run_id, {"task": task_name, "attempt": attempt, "result": payload}
                )
            elif status == "cancelled":
                self._emit(
                    "task_failed", run_id, {"task": task_name, "attempt": attempt, "error": "cancelled"}
                )
            elif attempt < task_spec.retry.max_attempts and not run.cancel_requested:
                delay = task_spec.retry.delay_s(attempt)
                self._emit(
                    "task_retrying",
                    run_id,
                    {
                        "task": task_name,
                        "attempt": attempt,
                        "next_attempt": attempt + 1,
                        "error": payload,
                        "failed_at": ended,
                        "delay_s": delay,
                        "eta": ended + delay * 1000.0,
                    },
                )
            else:
                self._emit(
                    "task_failed", run_id, {"task": task_name, "attempt": attempt, "error": payload}
                )

    def _advance(self, schedule: bool = True) -> None:
        with self._lock:
            active = [r for r in self._runs.values() if r.status not in TERMINAL_RUN]
            for run in active:
                spec = self._spec_for(run)
                if run.cancel_requested:
                    for task in run.tasks.values():
                        if task.status in ("pending", "retrying"):
                            self._emit(
                                "task_skipped", run.run_id, {"task": task.name, "reason": "cancelled"}
                            )
                else:
                    self._skip_downstream_of_failures(run, spec)
                    if schedule:
                        self._schedule_ready(run, spec)
                self._finalize_if_done(run)

    def _skip_downstream_of_failures(self, run: RunState, spec: FlowSpec) -> None:
        failed = [name for name, t in run.tasks.items() if t.status == "failed"]
        for name in failed:
            for downstream in sorted(spec.downstream_of(name)):
                if run.tasks[downstream].status in ("pending", "retrying"):
                    self._emit(
                        "task_skipped",
                        run.run_id,
                        {"task": downstream, "reason": f"upstream task {name!r} failed"},
                    )

    def _schedule_ready(self, run: RunState, spec: FlowSpec) -> None:
        now = now_ms()
        for task_spec in spec.tasks:
            state = run.tasks[task_spec.name]
            key = (run.run_id, task_spec.name)
            if key in self._inflight or len(self._inflight) >= self.max_workers:
                continue
            if state.status == "pending":
                deps_ok = all(run.tasks[d].status == "succeeded" for d in task_spec.depends_on)
                if not deps_ok:
                    continue
                attempt = 1
            elif state.status == "retrying" and state.retry_eta is not None and state.retry_eta <= now:
                attempt = state.next_attempt
            else:
                continue
            self._emit("task_started", run.run_id, {"task": task_spec.name, "attempt": attempt})
            self._inflight.add(key)
            worker = threading.Thread(
                target=self._execute,
                args=(run.run_id, task_spec, attempt, self._cancel_flags[run.run_id]),
                daemon=True,
                name=f"recstack-task-{task_spec.name}",
            )
            self._workers.append(worker)
            worker.start()

    def _finalize_if_done(self, run: RunState) -> None:
        states = [t.status for t in run.tasks.values()]
        if any(s not in TERMINAL_TASK for s in states):
            return
        if all(s == "succeeded" for s in states):
            self._emit("run_succeeded", run.run_id, {})
        else:
            if run.cancel_requested:
                reason = "cancelled"
            else:
                first_failed = next(t for t in run.tasks.values() if t.status == "failed")
                reason = f"task {first_failed.name!r} failed: {first_failed.error}"
            self._emit("run_failed", run.run_id, {"reason": reason})
        if self.webhook_url and run.run_id not in self._notified:
            self._notified.add(run.run_id)
            self._spawn_delivery(run.run_id)

    def _execute(self, run_id: str, task_spec: TaskSpec, attempt: int, flag: threading.Event) -> None:
        ctx = TaskContext(run_id=run_id, task=task_spec.name, attempt=attempt, should_stop=flag.is_set)
        try:
            result = self.runner.run(task_spec.action, task_spec.params, ctx)
            self._completions.put((run_id, task_spec.name, attempt, "ok", result, now_ms()))
        except TaskCancelled:
            self._completions.put((run_id, task_spec.name, attempt, "cancelled", None, now_ms()))
        except Exception as exc:
            error = f"{type(exc).__name__}: {exc}"
            self._completions.put((run_id, task_spec.name, attempt, "error", error, now_ms()))

    # -- notifications ---------------------------------------------------------

    def _spawn_delivery(self, run_id: str) -> None:
        self._notified.add(run_id)
        thread = threading.Thread(
            target=self._deliver, args=(run_id,), daemon=True, name="recstack-notify"
        )
        self._workers.append(thread)
        thread.start()

    def _deliver(self, run_id: str) -> None:
        with self._lock:
            run = self._runs[run_id]
            body = {
                "run_id": run.run_id,
                "flow": run.flow,
                "status": run.status,
                "reason": run.reason,
                "started": run.started_at,
                "ended": run.ended_at,
                "idempotency_key": run.run_id,
            }
        for attempt in range(1, self.webhook_attempts + 1):
            record = {"url": self.webhook_url, "attempt": attempt, "idempotency_key": run_id}
            try:
                res = httpx.post(self.webhook_url, json=body, timeout=5.0)
                record.update(ok=200 <= res.status_code < 300, status_code=res.status_code)
            except httpx.HTTPError as exc:
                record.update(ok=False, error=str(exc))
            self._emit("notification_attempt", run_id, record)
            if record["ok"]:
                return
            time.sleep(min(1.0, 0.2 * attempt))
