"""Command-line entry points, one subcommand group per component.

Every command operates on a workspace directory (--root, default ./workspace,
or RECSTACK_ROOT). `recstack init` scaffolds one with editable config files.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .errors import RecstackError
from .workspace import Workspace


def _ws(ctx) -> Workspace:
    return Workspace(ctx.obj["root"])


class _Group(click.Group):
    """Surface domain errors as one-line messages instead of tracebacks."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except RecstackError as exc:
            raise click.ClickException(f"{exc.code}: {exc}") from exc


@click.group(cls=_Group)
@click.option(
    "--root",
    envvar="RECSTACK_ROOT",
    default="workspace",
    show_default=True,
    help="Workspace directory holding raw data, tables, artifacts, and config.",
)
@click.pass_context
def main(ctx, root):
    ctx.ensure_object(dict)
    ctx.obj["root"] = Path(root)


@main.command()
@click.option("--force", is_flag=True, help="Overwrite existing config files.")
@click.pass_context
def init(ctx, force):
    """Create the workspace layout and editable default config files."""
    ws = _ws(ctx)
    written = ws.init_files(force=force)
    for rel in written:
        click.echo(f"wrote {ws.root / rel}")
    if not written:
        click.echo("nothing to do (pass --force to overwrite)")


# -- ingest ---------------------------------------------------------------------


@main.group()
def ingest():
    """Event collection endpoint."""


@ingest.command("serve")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_context
def ingest_serve(ctx, host, port):
    """Run the collection server against this workspace's raw store."""
    import uvicorn

    from .ingest import Collector, create_ingest_app

    ws = _ws(ctx)
    store = ws.open_raw(writable=True)
    try:
        app = create_ingest_app(Collector(store))
        uvicorn.run(
            app,
            host=host or ws.config["ingest_host"],
            port=port or ws.config["ingest_port"],
            log_level="info",
        )
    finally:
        store.close()


# -- rawstore -------------------------------------------------------------------


@main.group()
def rawstore():
    """Append-only raw event log."""


@rawstore.command("replay")
@click.option("--from", "start", default=None, help="First partition id (inclusive).")
@click.option("--to", "end", default=None, help="Last partition id (inclusive).")
@click.pass_context
def rawstore_replay(ctx, start, end):
    """Emit stored payloads, newline-delimited, in (partition, offset) order."""
    ws = _ws(ctx)
    with ws.open_raw(writable=False) as store:
        for rec in store.replay(start, end):
            sys.stdout.buffer.write(rec.payload)
            sys.stdout.buffer.write(b"\n")
    sys.stdout.buffer.flush()


@rawstore.command("status")
@click.pass_context
def rawstore_status(ctx):
    ws = _ws(ctx)
    with ws.open_raw(writable=False) as store:
        marks = store.current_watermarks()
        for pid in sorted(marks):
            click.echo(f"{pid}  {marks[pid]} records")
        click.echo(f"total: {sum(marks.values())} records, {store.total_bytes()} bytes")


# -- transform ------------------------------------------------------------------


@main.group()
def transform():
    """Derived-table materialization."""


@transform.command("run")
@click.option("--dag", "dag_file", default=None, help="Dag spec file (default: workspace dag).")
@click.option("--node", default=None, help="Materialize this node and its ancestors only.")
@click.option("--full-rebuild", is_flag=True, help="Ignore watermarks and recompute everything.")
@click.pass_context
def transform_run(ctx, dag_file, node, full_rebuild):
    from .transform import load_dag
    from .transform.engine import TransformEngine

    ws = _ws(ctx)
    dag = load_dag(dag_file) if dag_file else ws.dag()
    with ws.open_raw(writable=False) as store:
        engine = TransformEngine(store, ws.tables(), dag)
        manifests = engine.run(node=node, full_rebuild=full_rebuild)
    for name in sorted(manifests):
        m = manifests[name]
        click.echo(f"{name} -> {m.table}: {m.row_count} rows  {m.content_hash[:12]}")


# -- quality --------------------------------------------------------------------


@main.group()
def quality():
    """Expectation suites over derived tables."""


@quality.command("run")
@click.option("--suite", "suite_file", default=None, help="Suite file (default: workspace suite).")
@click.option("--report-file", default=None, help="Where to write the JSON report.")
@click.pass_context
def quality_run(ctx, suite_file, report_file):
    """Evaluate the suite; exit code mirrors the gate decision."""
    from .quality import gate, render_report, run_suite, write_report

    ws = _ws(ctx)
    report = run_suite(ws.suite(suite_file), ws.tables())
    path = Path(report_file) if report_file else ws.reports_dir / f"quality-{int(time.time())}.json"
    write_report(report, path)
    click.echo(render_report(report))
    click.echo(f"report: {path}")
    decision = gate(report)
    if decision.warning:
        click.echo(f"warning: {decision.warning}")
    if not decision.passed:
        for reason in decision.reasons:
            click.echo(f"blocked: {reason}")
        ctx.exit(1)


# -- recsys ---------------------------------------------------------------------


@main.group()
def recsys():
    """Model training and packaging."""


@recsys.command("train")
@click.option("--sessions", default="sessions", show_default=True, help="Input sessions table.")
@click.option("--alpha-grid", default=None, help="Comma-separated smoothing grid, e.g. 0,0.1,1.")
@click.option("--split-ts", type=int, default=None, help="Temporal split point (epoch ms).")
@click.option("--out", default=None, help="Artifact root (default: workspace artifacts/).")
@click.pass_context
def recsys_train(ctx, sessions, alpha_grid, split_ts, out):
    """Search the grid, train, evaluate, and package one model version."""
    from .orchestrator.actions import ActionRunner, TaskContext

    ws = _ws(ctx)
    params: dict = {"sessions_table": sessions}
    if alpha_grid:
        params["alpha_grid"] = [float(x) for x in alpha_grid.split(",") if x.strip()]
    if split_ts is not None:
        params["split_ts"] = split_ts
    if out:
        params["artifact_root"] = Path(out)
    runner = ActionRunner(ws)
    result = runner.run("recsys_step", params, TaskContext(run_id="cli", task="train", attempt=1))
    click.echo(f"version: {result['version']}")
    click.echo(f"alpha: {result['best_alpha']}")
    click.echo(
        f"recall@10: {result['recall_at_10']:.4f} "
        f"(popularity baseline {result['baseline_recall_at_10']:.4f})"
    )
    click.echo(f"train sessions: {result['n_train']}, test cases: {result['n_test_cases']}")


# -- orchestrate ------------------------------------------------------------------


@main.group()
def orchestrate():
    """Flow runs: schedule, retry, inspect."""


@orchestrate.command("run")
@click.argument("flow")
@click.option("--timeout", type=float, default=600.0, show_default=True)
@click.pass_context
def orchestrate_run(ctx, flow, timeout):
    """Run one flow to completion; exit code mirrors the run status."""
    ws = _ws(ctx)
    orch = ws.orchestrator()
    orch.start()
    try:
        run_id = orch.run_flow(flow)
        click.echo(f"run: {run_id}")
        detail = orch.wait_for_run(run_id, timeout=timeout)
    finally:
        orch.stop()
    for name, task in detail["tasks"].items():
        line = f"  {name}: {task['status']} (attempts {task['attempts']})"
        if task["error"]:
            line += f" - {task['error']}"
        click.echo(line)
    click.echo(f"status: {detail['status']}")
    if detail["status"] != "succeeded":
        click.echo(f"reason: {detail['reason']}")
        ctx.exit(1)


@orchestrate.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8600, show_default=True)
@click.pass_context
def orchestrate_serve(ctx, host, port):
    """Run the scheduler plus its REST API (the console's backend)."""
    import uvicorn

    from .orchestrator import create_orchestrator_app

    ws = _ws(ctx)
    orch = ws.orchestrator()
    orch.start()
    try:
        uvicorn.run(create_orchestrator_app(orch), host=host, port=port, log_level="info")
    finally:
        orch.stop()


# -- serving --------------------------------------------------------------------


@main.group()
def serving():
    """Recommendation serving."""


@serving.command("serve")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--preload/--no-preload", default=True, show_default=True,
              help="Load and activate the latest artifact on startup if one exists.")
@click.pass_context
def serving_serve(ctx, host, port, preload):
    import uvicorn

    from .serving import ServingService, create_serving_app

    ws = _ws(ctx)
    service = ServingService(ws.artifact_root)
    if preload and (ws.artifact_root / "LATEST").exists():
        service.load("latest")
        click.echo(f"activated {service.activate()}")
    uvicorn.run(
        create_serving_app(service),
        host=host or ws.config["serving_host"],
        port=port or ws.config["serving_port"],
        log_level="info",
    )


# -- datagen --------------------------------------------------------------------


@main.group()
def datagen():
    """Synthetic clickstream generation."""


@datagen.command("run")
@click.option("--preset", default="skewed", show_default=True,
              type=click.Choice(["skewed", "uniform", "block-diagonal"]))
@click.option("--catalog", type=int, default=50, show_default=True)
@click.option("--sessions", type=int, default=20000, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--clock-start", type=int, default=None, help="First session start (epoch ms).")
@click.option("--max-step-gap", type=int, default=None,
              help="Upper bound on think time between steps (ms). Lower it for small "
                   "corpora so late session starts still exist past a temporal split.")
@click.option("--endpoint", default=None, help="Ingest base URL to pump events into.")
@click.option("--emit-file", default=None, help="Also write events as newline-delimited JSON.")
@click.option("--rate", type=float, default=None, help="Max events per second when pumping.")
def datagen_run(preset, catalog, sessions, seed, clock_start, max_step_gap, endpoint, emit_file, rate):
    """Generate sessions from a preset shopper model; pump and/or write to a file."""
    from .datagen import MAX_STEP_GAP_MS, generate, preset as make_preset, pump

    if not endpoint and not emit_file:
        raise click.UsageError("pass --endpoint and/or --emit-file")
    model = make_preset(preset, catalog_size=catalog, seed=seed)
    clock = clock_start if clock_start is not None else int(time.time() * 1000)
    gap = max_step_gap if max_step_gap is not None else MAX_STEP_GAP_MS
    events = generate(model, sessions, clock, max_step_gap_ms=gap)
    click.echo(f"generated {len(events)} events across {sessions} sessions")
    if emit_file:
        path = Path(emit_file)
        with open(path, "w") as f:
            for e in events:
                f.write(json.dumps(e, sort_keys=True) + "\n")
        click.echo(f"wrote {path}")
    if endpoint:
        stats = pump(events, endpoint=endpoint, rate=rate)
        click.echo(
            f"pumped: {stats['sent']} sent, {stats['acked']} acked, "
            f"{len(stats['failed'])} failed in {stats['elapsed_s']:.1f}s"
        )
        if stats["failed"]:
            raise SystemExit(1)


if __name__ == "__main__":
    main()
