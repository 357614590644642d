"""Task actions a flow can execute, bound to one workspace.

Each handler is synchronous and returns a small JSON-able result that ends
up in the run journal, which is how the console gets quality reports and
model versions without extra endpoints. Long-running handlers poll
ctx.checkpoint() so a cancelled run stops at the next safe point.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from typing import Callable

import httpx

from ..errors import GateBlocked, InvalidSpec, TaskCancelled
from ..quality import gate, run_suite, write_report
from ..recsys import (
    MarkovNextItem,
    behavioral_checklist,
    build_dataset,
    evaluate,
    hyper_search,
    package,
    split_ts_at_fraction,
)
from ..transform.engine import TransformEngine


@dataclass
class TaskContext:
    run_id: str
    task: str
    attempt: int
    should_stop: Callable[[], bool] = lambda: False

    def checkpoint(self) -> None:
        if self.should_stop():
            raise TaskCancelled(f"{self.run_id}/{self.task} cancelled")

    def sleep(self, seconds: float) -> None:
        """Interruptible sleep in 20 ms slices."""
        deadline = time.monotonic() + seconds
        while time.monotonic() < deadline:
            self.checkpoint()
            time.sleep(min(0.02, max(0.0, deadline - time.monotonic())))
        self.checkpoint()


class ActionRunner:
    """Dispatches flow actions against a workspace (duck-typed, see workspace.py)."""

    def __init__(self, workspace):
        self.ws = workspace

    def run(self, action: str, params: dict, ctx: TaskContext) -> dict:
        handler = getattr(self, f"_run_{action}", None)
        if handler is None:
            raise InvalidSpec(f"no handler for action {action!r}")
        return handler(dict(params or {}), ctx)

    # -- pipeline actions --------------------------------------------------

    def _run_transform_node(self, params: dict, ctx: TaskContext) -> dict:
        with self.ws.open_raw(writable=False) as store:
            engine = TransformEngine(store, self.ws.tables(), self.ws.dag())
            manifests = engine.run(
                node=params.get("node"), full_rebuild=bool(params.get("full_rebuild"))
            )
        return {
            name: {"table": m.table, "row_count": m.row_count, "content_hash": m.content_hash}
            for name, m in manifests.items()
        }

    def _run_quality_suite(self, params: dict, ctx: TaskContext) -> dict:
        suite = self.ws.suite(params.get("suite"))
        report = run_suite(suite, self.ws.tables())
        path = self.ws.reports_dir / f"{ctx.run_id}.quality.json"
        write_report(report, path)
        decision = gate(report)
        if not decision.passed:
            raise GateBlocked("; ".join(decision.reasons))
        result = {"report": report.to_dict(), "gate": "pass"}
        if decision.warning:
            result["warning"] = decision.warning
        return result

    def _run_recsys_step(self, params: dict, ctx: TaskContext) -> dict:
        tables = self.ws.tables()
        sessions = list(tables.read_rows(params.get("sessions_table", "sessions")))
        split_ts = params.get("split_ts")
        if split_ts is None:
            split_ts = split_ts_at_fraction(
                sessions, params.get("split_fraction", self.ws.config["split_fraction"])
            )
        train, test = build_dataset(sessions, split_ts)
        ctx.checkpoint()
        grid = params.get("alpha_grid", self.ws.config["alpha_grid"])
        search = hyper_search(train, test, grid)
        model = MarkovNextItem(alpha=search["best_alpha"]).fit(train)
        report = evaluate(model, test)
        checks = behavioral_checklist(model)
        ctx.checkpoint()

        with self.ws.open_raw(writable=False) as store:
            watermarks = store.current_watermarks()
        quality_path = self.ws.reports_dir / f"{ctx.run_id}.quality.json"
        suite_hash = (
            hashlib.sha256(quality_path.read_bytes()).hexdigest() if quality_path.exists() else None
        )
        lineage = {
            "raw_watermarks": watermarks,
            "node_versions": {n.name: n.version for n in self.ws.dag().nodes},
            "suite_report_hash": suite_hash,
            "flow_run_id": ctx.run_id,
            "split_ts": split_ts,
        }
        artifact_root = params.get("artifact_root") or self.ws.artifact_root
        info = package(artifact_root, model, report, checks, lineage)
        return {
            "version": info.version,
            "best_alpha": search["best_alpha"],
            "recall_at_10": report.recall_at[10],
            "baseline_recall_at_10": report.baseline_recall_at[10],
            "n_train": len(train),
            "n_test_cases": report.n_test_cases,
        }

    def _run_serving_deploy(self, params: dict, ctx: TaskContext) -> dict:
        version = params.get("version", "latest")
        service = getattr(self.ws, "serving_service", None)
        if service is not None:
            service.load(version)
            return {"active_version": service.activate()}
        url = params.get("serving_url") or self.ws.config["serving_url"]
        with httpx.Client(base_url=url, timeout=30.0) as client:
            res = client.post("/admin/load", json={"version": version})
            res.raise_for_status()
            res = client.post("/admin/activate")
            res.raise_for_status()
            return {"active_version": res.json()["active_version"]}

    # -- test-only fault injection ------------------------------------------

    def _run_shell_probe(self, params: dict, ctx: TaskContext) -> dict:
        counter_file = params.get("counter_file")
        invocation = 1
        if counter_file:
            path = self.ws.reports_dir / counter_file
            invocation = (int(path.read_text()) if path.exists() else 0) + 1
            path.write_text(str(invocation))
        if params.get("sleep_s"):
            ctx.sleep(float(params["sleep_s"]))
        if invocation <= int(params.get("fail_times", 0)):
            raise RuntimeError(f"probe scripted to fail (invocation {invocation})")
        return {"invocation": invocation}
