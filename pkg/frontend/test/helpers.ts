// An in-memory stand-in for the orchestrator REST API, faithful to its route
// shapes, error envelope, and journal-seq semantics. Tests drive the real
// console against it through the injectable fetch transport.

import type { FetchLike, RunDetail, RunStatus, RunSummary, TaskStatus } from "../src/api.js";

const clone = <T>(x: T): T => JSON.parse(JSON.stringify(x)) as T;

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function apiError(code: string, detail: string, status: number): Response {
  return json({ error: code, detail }, status);
}

export interface FakeRun extends RunDetail {}

export class FakeBackend {
  flows: Record<string, { versions: number }> = { nightly_train: { versions: 1 } };
  runs = new Map<string, FakeRun>();
  log: Array<{ method: string; path: string }> = [];
  /** When true every request rejects like a dead socket. */
  down = false;
  /** Optional latency gate awaited by mutating routes. */
  gate: Promise<void> | null = null;
  private seq = 0;
  private counter = 0;

  createRun(flow: string, status: RunStatus = "pending"): string {
    this.counter += 1;
    const runId = `run-${String(this.counter).padStart(6, "0")}-fake`;
    const taskNames = ["explode", "quality_gate", "train"];
    const tasks: Record<string, RunDetail["tasks"][string]> = {};
    for (const name of taskNames) {
      tasks[name] = {
        name,
        status: "pending",
        attempts: 0,
        started_at: null,
        ended_at: null,
        retry_eta: null,
        error: null,
        result: null,
      };
    }
    const run: FakeRun = {
      run_id: runId,
      flow,
      status,
      reason: null,
      created_at: 1_000 + this.counter, // synthetic clock; conflicts go by seq
      started_at: null,
      ended_at: null,
      retry_of: null,
      cancel_requested: false,
      seq: ++this.seq,
      task_counts: { pending: taskNames.length },
      attempts: 0,
      params: {},
      spec: {
        name: flow,
        tasks: [
          { name: "explode", action: "transform_node", depends_on: [] },
          { name: "quality_gate", action: "quality_suite", depends_on: ["explode"] },
          { name: "train", action: "recsys_step", depends_on: ["quality_gate"] },
        ],
      },
      tasks,
      notifications: [],
    };
    this.runs.set(runId, run);
    return runId;
  }

  /** Mutate a run the way new journal events would: seq always advances. */
  advance(runId: string, patch: Partial<FakeRun>): void {
    const run = this.runs.get(runId);
    if (!run) throw new Error(`no such run ${runId}`);
    Object.assign(run, patch);
    run.seq = ++this.seq;
  }

  setTask(runId: string, task: string, patch: Partial<RunDetail["tasks"][string]>): void {
    const run = this.runs.get(runId);
    if (!run) throw new Error(`no such run ${runId}`);
    Object.assign(run.tasks[task]!, patch);
    const counts: Partial<Record<TaskStatus, number>> = {};
    for (const t of Object.values(run.tasks)) counts[t.status] = (counts[t.status] ?? 0) + 1;
    run.task_counts = counts;
    run.seq = ++this.seq;
  }

  summaries(status?: string): RunSummary[] {
    const all = [...this.runs.values()]
      .filter((r) => !status || r.status === status)
      .sort((a, b) =>
        a.created_at === b.created_at
          ? b.run_id.localeCompare(a.run_id)
          : (b.created_at ?? 0) - (a.created_at ?? 0),
      );
    return all.map((r) => {
      const { params: _p, spec: _s, tasks: _t, notifications: _n, ...summary } = r;
      return clone(summary);
    });
  }

  readonly fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const u = new URL(url);
    this.log.push({ method, path: u.pathname + u.search });
    if (this.down) throw new TypeError("fetch failed");

    if (method === "GET" && u.pathname === "/flows") return json({ flows: this.flows });

    if (method === "GET" && u.pathname === "/runs") {
      const status = u.searchParams.get("status") ?? undefined;
      const page = Number(u.searchParams.get("page") ?? "1");
      const pageSize = Number(u.searchParams.get("page_size") ?? "20");
      const all = this.summaries(status);
      return json({
        runs: all.slice((page - 1) * pageSize, page * pageSize),
        page,
        page_size: pageSize,
        total: all.length,
        pages: Math.max(1, Math.ceil(all.length / pageSize)),
      });
    }

    let m = u.pathname.match(/^\/flows\/([^/]+)\/runs$/);
    if (method === "POST" && m) {
      const flow = decodeURIComponent(m[1]!);
      if (!(flow in this.flows)) return apiError("UNKNOWN_FLOW", `no flow named '${flow}'`, 404);
      if (this.gate) await this.gate;
      return json({ run_id: this.createRun(flow) });
    }

    m = u.pathname.match(/^\/runs\/([^/]+)$/);
    if (method === "GET" && m) {
      const run = this.runs.get(decodeURIComponent(m[1]!));
      if (!run) return apiError("UNKNOWN_RUN", `no run ${m[1]}`, 404);
      return json(clone(run));
    }

    m = u.pathname.match(/^\/runs\/([^/]+)\/retry$/);
    if (method === "POST" && m) {
      const id = decodeURIComponent(m[1]!);
      const run = this.runs.get(id);
      if (!run) return apiError("UNKNOWN_RUN", `no run ${id}`, 404);
      if (run.status === "pending" || run.status === "running")
        return apiError("RUN_NOT_TERMINAL", `run ${id} is ${run.status}`, 409);
      if (run.status !== "failed")
        return apiError("RUN_NOT_FAILED", `run ${id} ended ${run.status}`, 409);
      if (this.gate) await this.gate;
      const newId = this.createRun(run.flow);
      this.runs.get(newId)!.retry_of = id;
      return json({ run_id: newId });
    }

    m = u.pathname.match(/^\/runs\/([^/]+)\/cancel$/);
    if (method === "POST" && m) {
      const id = decodeURIComponent(m[1]!);
      const run = this.runs.get(id);
      if (!run) return apiError("UNKNOWN_RUN", `no run ${id}`, 404);
      if (run.status === "succeeded" || run.status === "failed")
        return apiError("RUN_NOT_ACTIVE", `run ${id} already ${run.status}`, 409);
      if (this.gate) await this.gate;
      this.advance(id, { cancel_requested: true });
      return json({ run_id: id, status: "cancelling" });
    }

    if (method === "GET" && u.pathname === "/health" && u.hostname === "serving.test") {
      return json({ status: "ok", active_version: "abc123def456", staged_version: null });
    }

    return apiError("NOT_FOUND", `${method} ${u.pathname}`, 404);
  };
}

/** Settle all pending microtasks plus zero-delay timers. */
export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
