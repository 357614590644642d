"""One directory holding the whole stack's state, plus its configuration.

Layout under the workspace root:

    raw/            append-only event log (partitioned segments)
    tables/         derived tables + manifests
    artifacts/      packaged model versions + LATEST pointer
    reports/        quality reports and probe scratch files
    journal.ndjson  orchestrator run-event journal
    config.yaml     optional; overrides the defaults below
    dag.yaml        optional; overrides the built-in two-node dag
    suite.yaml      optional; overrides the default quality suite
    flows/          optional; extra flow specs for the CLI

Precedence for settings: defaults < config.yaml < explicit overrides <
RECSTACK_* environment variables (e.g. RECSTACK_WEBHOOK_URL,
RECSTACK_ALPHA_GRID="0,0.1,1").
"""

from __future__ import annotations

import os
from pathlib import Path

import yaml

from .quality import Expectation, default_suite, load_suite
from .rawstore import RawStore
from .transform import DagSpec, NodeSpec, TableStore, load_dag
from .orchestrator.flowspec import FlowSpec, RetryPolicy, TaskSpec

DEFAULTS: dict = {
    "gap_minutes": 30,
    "alpha_grid": [0.0, 0.1, 1.0],
    "split_fraction": 0.8,
    "quality_max_reject_fraction": 0.02,
    "quality_min_rows": 1,
    "scheduler_tick": 0.25,
    "scheduler_max_workers": 4,
    "webhook_url": None,
    "serving_url": "http://127.0.0.1:8602",
    "ingest_host": "127.0.0.1",
    "ingest_port": 8601,
    "serving_host": "127.0.0.1",
    "serving_port": 8602,
    "roll_bytes": 8 * 1024 * 1024,
}


def _coerce(default, raw: str):
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, list):
        return [float(x) for x in raw.split(",") if x.strip()]
    return raw


def load_config(root: Path, overrides: dict | None = None, env=None) -> dict:
    env = os.environ if env is None else env
    config = dict(DEFAULTS)
    file_path = root / "config.yaml"
    if file_path.exists():
        doc = yaml.safe_load(file_path.read_text()) or {}
        for key, value in doc.items():
            if key in config:
                config[key] = value
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise KeyError(f"unknown config key {key!r}")
        config[key] = value
    for key, default in DEFAULTS.items():
        raw = env.get(f"RECSTACK_{key.upper()}")
        if raw is not None:
            config[key] = _coerce(default if default is not None else "", raw)
    return config


class Workspace:
    def __init__(self, root: str | Path, overrides: dict | None = None, env=None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config = load_config(self.root, overrides, env)
        for sub in ("raw", "tables", "artifacts", "reports"):
            (self.root / sub).mkdir(exist_ok=True)
        # set by composition code that hosts serving in-process (tests, CLI)
        self.serving_service = None

    # -- paths ---------------------------------------------------------------

    @property
    def raw_root(self) -> Path:
        return self.root / "raw"

    @property
    def tables_root(self) -> Path:
        return self.root / "tables"

    @property
    def artifact_root(self) -> Path:
        return self.root / "artifacts"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def journal_path(self) -> Path:
        return self.root / "journal.ndjson"

    # -- component factories ---------------------------------------------------

    def open_raw(self, writable: bool = False) -> RawStore:
        return RawStore(self.raw_root, writable=writable, roll_bytes=self.config["roll_bytes"])

    def tables(self) -> TableStore:
        return TableStore(self.tables_root)

    def dag(self) -> DagSpec:
        path = self.root / "dag.yaml"
        if path.exists():
            return load_dag(path)
        return self.default_dag()

    def default_dag(self) -> DagSpec:
        return DagSpec(
            [
                NodeSpec(
                    name="explode_events", inputs=("raw",), op={"kind": "explode"},
                    output="interactions",
                ),
                NodeSpec(
                    name="sessionize",
                    inputs=("interactions",),
                    op={"kind": "sessionize", "gap_minutes": self.config["gap_minutes"]},
                    output="sessions",
                ),
            ]
        )

    def suite(self, suite_ref: str | None = None) -> list[Expectation]:
        if suite_ref:
            path = Path(suite_ref)
            if not path.is_absolute():
                path = self.root / path
            return load_suite(path)
        path = self.root / "suite.yaml"
        if path.exists():
            return load_suite(path)
        return default_suite(
            min_rows=self.config["quality_min_rows"],
            max_reject_fraction=self.config["quality_max_reject_fraction"],
        )

    def nightly_train_spec(self) -> FlowSpec:
        """transform → quality gate → train/package → deploy; gate never retried."""
        return FlowSpec(
            name="nightly_train",
            tasks=[
                TaskSpec(name="explode", action="transform_node", params={"node": "explode_events"}),
                TaskSpec(
                    name="sessionize",
                    action="transform_node",
                    params={"node": "sessionize"},
                    depends_on=("explode",),
                ),
                TaskSpec(
                    name="quality_gate",
                    action="quality_suite",
                    params={},
                    depends_on=("sessionize",),
                    retry=RetryPolicy(max_attempts=1),
                ),
                TaskSpec(name="train", action="recsys_step", params={}, depends_on=("quality_gate",)),
                TaskSpec(
                    name="deploy",
                    action="serving_deploy",
                    params={"version": "latest"},
                    depends_on=("train",),
                ),
            ],
        )

    def flow_specs(self) -> dict[str, FlowSpec]:
        """The shipped flow plus anything under flows/."""
        from .orchestrator.flowspec import load_flow

        specs = {"nightly_train": self.nightly_train_spec()}
        flows_dir = self.root / "flows"
        if flows_dir.is_dir():
            for path in sorted(flows_dir.glob("*.yaml")):
                spec = load_flow(path)
                specs[spec.name] = spec
        return specs

    def init_files(self, force: bool = False) -> list[str]:
        """Write editable config/dag/suite files with the current defaults."""
        written = []
        dag_doc = {
            "nodes": [
                {"name": n.name, "inputs": list(n.inputs), "op": n.op, "output": n.output,
                 "version": n.version}
                for n in self.default_dag().nodes
            ]
        }
        suite_doc = {
            "expectations": [
                {"kind": e.kind, "table": e.table, "column": e.column, "params": e.params}
                for e in self.suite()
            ]
        }
        flow_doc = self.nightly_train_spec().to_dict()
        targets = {
            "config.yaml": {k: v for k, v in self.config.items() if v is not None},
            "dag.yaml": dag_doc,
            "suite.yaml": suite_doc,
            "flows/nightly_train.yaml": flow_doc,
        }
        for rel, doc in targets.items():
            path = self.root / rel
            if path.exists() and not force:
                continue
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(yaml.safe_dump(doc, sort_keys=True))
            written.append(rel)
        return written

    def orchestrator(self, register_flows: bool = True):
        from .orchestrator import ActionRunner, Orchestrator

        orch = Orchestrator(
            self.journal_path,
            ActionRunner(self),
            tick=self.config["scheduler_tick"],
            max_workers=self.config["scheduler_max_workers"],
            webhook_url=self.config["webhook_url"],
        )
        if register_flows:
            registered = set(orch.flows())
            for name, spec in self.flow_specs().items():
                if name not in registered:
                    orch.register(spec)
        return orch
