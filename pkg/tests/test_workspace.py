"""Workspace wiring: config precedence, file overrides, and full flow runs.

The two flow tests here are the smallest honest end-to-end checks in the
suite: real events through explode, sessionize, the quality gate, training,
packaging, and an in-process serving swap, driven by the scheduler.
"""

import json
import time

import pytest
import yaml

from recstack.datagen import generate, preset
from recstack.serving import ServingService
from recstack.workspace import DEFAULTS, Workspace, load_config

from tests.conftest import make_event

NOW_MS = int(time.time() * 1000)


def seed_raw(ws, payloads):
    with ws.open_raw(writable=True) as store:
        for body in payloads:
            store.append(body, ingestion_ts=NOW_MS, sync=False)
        store.commit_all()


def generated_payloads(n_sessions=300, catalog=8, seed=3, null_every=0):
    """Events from the uniform preset; every null_every-th gets its session id dropped."""
    events = generate(
        preset("uniform", catalog_size=catalog, seed=seed), n_sessions, NOW_MS,
        max_step_gap_ms=20_000,  # short sessions so the temporal split has late starters
    )
    payloads = []
    for i, doc in enumerate(events):
        if null_every and i % null_every == 0:
            doc = {**doc, "session_id": None}
        payloads.append(json.dumps(doc, sort_keys=True).encode())
    return payloads


# -- config ---------------------------------------------------------------------


def test_config_defaults_apply(tmp_path):
    ws = Workspace(tmp_path)
    assert ws.config == DEFAULTS
    for sub in ("raw", "tables", "artifacts", "reports"):
        assert (tmp_path / sub).is_dir()


def test_config_precedence_file_then_overrides_then_env(tmp_path):
    (tmp_path / "config.yaml").write_text(yaml.safe_dump({"gap_minutes": 10, "ingest_port": 9001}))
    config = load_config(
        tmp_path,
        overrides={"gap_minutes": 15},
        env={"RECSTACK_GAP_MINUTES": "20", "RECSTACK_ALPHA_GRID": "0,0.5"},
    )
    assert config["gap_minutes"] == 20  # env beats override beats file
    assert config["ingest_port"] == 9001  # file beats default
    assert config["alpha_grid"] == [0.0, 0.5]  # env string coerced to floats
    assert config["split_fraction"] == 0.8  # untouched default


def test_config_rejects_unknown_override(tmp_path):
    with pytest.raises(KeyError):
        load_config(tmp_path, overrides={"gap_miuntes": 10})


def test_env_coercion_follows_default_types(tmp_path):
    config = load_config(
        tmp_path,
        env={
            "RECSTACK_SCHEDULER_TICK": "0.1",
            "RECSTACK_SCHEDULER_MAX_WORKERS": "2",
            "RECSTACK_WEBHOOK_URL": "http://x/hook",
        },
    )
    assert config["scheduler_tick"] == 0.1
    assert config["scheduler_max_workers"] == 2
    assert config["webhook_url"] == "http://x/hook"


# -- file overrides ---------------------------------------------------------------


def test_dag_file_overrides_default(tmp_path):
    ws = Workspace(tmp_path)
    assert [n.name for n in ws.dag().nodes] == ["explode_events", "sessionize"]

    doc = {
        "nodes": [
            {"name": "explode_events", "inputs": ["raw"], "op": {"kind": "explode"},
             "output": "interactions"},
        ]
    }
    (tmp_path / "dag.yaml").write_text(yaml.safe_dump(doc))
    assert [n.name for n in ws.dag().nodes] == ["explode_events"]


def test_suite_sources(tmp_path):
    ws = Workspace(tmp_path, overrides={"quality_max_reject_fraction": 0.1})
    default = ws.suite()
    reject = next(e for e in default if e.kind == "max_reject_ratio")
    assert reject.params["max_fraction"] == 0.1

    doc = {"expectations": [{"kind": "row_count_min", "table": "sessions", "params": {"min": 5}}]}
    (tmp_path / "custom.yaml").write_text(yaml.safe_dump(doc))
    custom = ws.suite("custom.yaml")
    assert len(custom) == 1 and custom[0].table == "sessions"

    (tmp_path / "suite.yaml").write_text(yaml.safe_dump(doc))
    assert len(ws.suite()) == 1  # workspace file beats built-in default


def test_init_files_scaffolds_and_respects_existing(tmp_path):
    ws = Workspace(tmp_path)
    first = ws.init_files()
    assert set(first) == {"config.yaml", "dag.yaml", "suite.yaml", "flows/nightly_train.yaml"}
    assert ws.init_files() == []  # second call touches nothing

    # scaffolded files parse back to the same objects
    ws2 = Workspace(tmp_path)
    assert [n.name for n in ws2.dag().nodes] == [n.name for n in ws.default_dag().nodes]
    assert ws2.nightly_train_spec().to_dict() == yaml.safe_load(
        (tmp_path / "flows" / "nightly_train.yaml").read_text()
    )


def test_flow_specs_include_extras_from_flows_dir(tmp_path):
    ws = Workspace(tmp_path)
    (tmp_path / "flows").mkdir()
    doc = {"name": "smoke", "tasks": [{"name": "p", "action": "shell_probe", "params": {}}]}
    (tmp_path / "flows" / "smoke.yaml").write_text(yaml.safe_dump(doc))
    specs = ws.flow_specs()
    assert set(specs) == {"nightly_train", "smoke"}


def test_nightly_train_gate_is_never_retried(tmp_path):
    spec = Workspace(tmp_path).nightly_train_spec()
    spec.validate()
    assert spec.task("quality_gate").retry.max_attempts == 1
    assert spec.downstream_of("quality_gate") == {"train", "deploy"}


# -- full flow ---------------------------------------------------------------------


def test_nightly_train_end_to_end_in_process(tmp_path):
    ws = Workspace(tmp_path, overrides={"scheduler_tick": 0.05})
    seed_raw(ws, generated_payloads())
    ws.serving_service = ServingService(ws.artifact_root)

    orch = ws.orchestrator()
    orch.start()
    try:
        run_id = orch.run_flow("nightly_train")
        detail = orch.wait_for_run(run_id, timeout=60)
    finally:
        orch.stop()

    assert detail["status"] == "succeeded", detail["reason"]
    statuses = {name: t["status"] for name, t in detail["tasks"].items()}
    assert statuses == {t: "succeeded" for t in ("explode", "sessionize", "quality_gate", "train", "deploy")}

    gate = detail["tasks"]["quality_gate"]["result"]
    assert gate["gate"] == "pass"
    assert gate["report"]["overall"] == "pass"
    assert (ws.reports_dir / f"{run_id}.quality.json").exists()

    train = detail["tasks"]["train"]["result"]
    version = train["version"]
    assert (ws.artifact_root / version / "model.json").exists()
    assert (ws.artifact_root / "LATEST").read_text().strip() == version
    assert detail["tasks"]["deploy"]["result"] == {"active_version": version}
    assert ws.serving_service.status()["active_version"] == version

    # lineage pins the exact inputs this model saw
    lineage = json.loads((ws.artifact_root / version / "lineage.json").read_text())
    assert lineage["flow_run_id"] == run_id
    with ws.open_raw(writable=False) as store:
        assert lineage["raw_watermarks"] == store.current_watermarks()
    assert lineage["suite_report_hash"] is not None


def test_quality_gate_blocks_bad_batch_and_skips_training(tmp_path):
    ws = Workspace(
        tmp_path,
        overrides={"scheduler_tick": 0.05, "quality_max_reject_fraction": 0.01},
    )
    seed_raw(ws, generated_payloads(null_every=10))  # 10% poisoned vs 1% allowed
    ws.serving_service = ServingService(ws.artifact_root)

    orch = ws.orchestrator()
    orch.start()
    try:
        run_id = orch.run_flow("nightly_train")
        detail = orch.wait_for_run(run_id, timeout=60)
    finally:
        orch.stop()

    assert detail["status"] == "failed"
    assert detail["tasks"]["quality_gate"]["status"] == "failed"
    assert detail["tasks"]["quality_gate"]["attempts"] == 1  # deterministic fail: no retry
    assert "max_reject_ratio" in detail["tasks"]["quality_gate"]["error"]
    assert detail["tasks"]["train"]["status"] == "skipped"
    assert detail["tasks"]["deploy"]["status"] == "skipped"
    assert not list(ws.artifact_root.iterdir())  # nothing packaged
    assert ws.serving_service.status()["active_version"] is None

    # the report on disk shows the failing expectation with its observed value
    report = json.loads((ws.reports_dir / f"{run_id}.quality.json").read_text())
    failing = [r for r in report["results"] if r["status"] == "fail"]
    assert any(r["expectation"]["kind"] == "max_reject_ratio" for r in failing)
    assert all(0.09 < r["observed"] < 0.11 for r in failing if
               r["expectation"]["kind"] == "max_reject_ratio")


def test_rerun_after_fixing_data_swaps_new_version(tmp_path):
    ws = Workspace(tmp_path, overrides={"scheduler_tick": 0.05})
    seed_raw(ws, generated_payloads(n_sessions=200, seed=11))
    ws.serving_service = ServingService(ws.artifact_root)

    orch = ws.orchestrator()
    orch.start()
    try:
        first = orch.wait_for_run(orch.run_flow("nightly_train"), timeout=60)
        assert first["status"] == "succeeded"
        v1 = first["tasks"]["train"]["result"]["version"]

        # more data arrives; the next nightly run must retrain and swap
        seed_raw(ws, generated_payloads(n_sessions=200, seed=12))
        second = orch.wait_for_run(orch.run_flow("nightly_train"), timeout=60)
        assert second["status"] == "succeeded"
        v2 = second["tasks"]["train"]["result"]["version"]
    finally:
        orch.stop()

    assert v1 != v2
    assert ws.serving_service.status()["active_version"] == v2
    served = ws.serving_service.serve("SKU-000", k=3)
    assert served["model_version"] == v2 and len(served["items"]) == 3
