// Typed client over the orchestrator REST API plus the serving health probe.
// Every mutation the console can perform is one call here; there is no
// console-only endpoint on the other side.

export type RunStatus = "pending" | "running" | "succeeded" | "failed";
export type TaskStatus = "pending" | "running" | "retrying" | "succeeded" | "failed" | "skipped";

export interface RunSummary {
  run_id: string;
  flow: string;
  status: RunStatus;
  reason: string | null;
  created_at: number | null;
  started_at: number | null;
  ended_at: number | null;
  retry_of: string | null;
  cancel_requested: boolean;
  seq: number;
  task_counts: Partial<Record<TaskStatus, number>>;
  attempts: number;
}

export interface TaskDetail {
  name: string;
  status: TaskStatus;
  attempts: number;
  started_at: number | null;
  ended_at: number | null;
  retry_eta: number | null;
  error: string | null;
  result: Record<string, unknown> | null;
}

export interface TaskSpec {
  name: string;
  action: string;
  depends_on: string[];
}

export interface RunDetail extends RunSummary {
  params: Record<string, unknown>;
  spec: { name: string; tasks: TaskSpec[] };
  tasks: Record<string, TaskDetail>;
  notifications: unknown[];
}

export interface RunPage {
  runs: RunSummary[];
  page: number;
  page_size: number;
  total: number;
  pages: number;
}

export interface FlowInfo {
  versions: number;
}

export interface ServingHealth {
  status: string;
  active_version: string | null;
  staged_version: string | null;
}

/** Error envelope the orchestrator returns: {"error": CODE, "detail": text}. */
export class ApiError extends Error {
  constructor(
    public readonly code: string,
    public readonly detail: string,
    public readonly httpStatus: number,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ConsoleApiOptions {
  /** Orchestrator base URL, no trailing slash. */
  orchestratorUrl: string;
  /** Serving base URL; omit to disable the serving panel probe. */
  servingUrl?: string;
  /** Injectable transport for tests; defaults to global fetch. */
  fetchImpl?: FetchLike;
}

async function request<T>(fetchImpl: FetchLike, url: string, init?: RequestInit): Promise<T> {
  const res = await fetchImpl(url, init);
  if (!res.ok) {
    let code = `HTTP_${res.status}`;
    let detail = res.statusText || "request failed";
    try {
      const body = await res.json();
      if (body && typeof body.error === "string") code = body.error;
      if (body && typeof body.detail === "string") detail = body.detail;
    } catch {
      // non-JSON error body; keep the status-derived fields
    }
    throw new ApiError(code, detail, res.status);
  }
  return res.json() as Promise<T>;
}

export class ConsoleApi {
  private readonly base: string;
  private readonly serving: string | null;
  private readonly fetchImpl: FetchLike;

  constructor(opts: ConsoleApiOptions) {
    this.base = opts.orchestratorUrl.replace(/\/$/, "");
    this.serving = opts.servingUrl ? opts.servingUrl.replace(/\/$/, "") : null;
    this.fetchImpl = opts.fetchImpl ?? ((url, init) => fetch(url, init));
  }

  listFlows(): Promise<{ flows: Record<string, FlowInfo> }> {
    return request(this.fetchImpl, `${this.base}/flows`);
  }

  listRuns(params?: { status?: RunStatus; page?: number; pageSize?: number }): Promise<RunPage> {
    const q = new URLSearchParams();
    if (params?.status) q.set("status", params.status);
    if (params?.page) q.set("page", String(params.page));
    if (params?.pageSize) q.set("page_size", String(params.pageSize));
    const qs = q.toString();
    return request(this.fetchImpl, `${this.base}/runs${qs ? "?" + qs : ""}`);
  }

  getRun(runId: string): Promise<RunDetail> {
    return request(this.fetchImpl, `${this.base}/runs/${encodeURIComponent(runId)}`);
  }

  triggerFlow(flow: string, params?: Record<string, unknown>): Promise<{ run_id: string }> {
    return request(this.fetchImpl, `${this.base}/flows/${encodeURIComponent(flow)}/runs`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ params: params ?? {} }),
    });
  }

  retryRun(runId: string): Promise<{ run_id: string }> {
    return request(this.fetchImpl, `${this.base}/runs/${encodeURIComponent(runId)}/retry`, {
      method: "POST",
    });
  }

  cancelRun(runId: string): Promise<{ run_id: string; status: string }> {
    return request(this.fetchImpl, `${this.base}/runs/${encodeURIComponent(runId)}/cancel`, {
      method: "POST",
    });
  }

  servingHealth(): Promise<ServingHealth | null> {
    if (!this.serving) return Promise.resolve(null);
    return request(this.fetchImpl, `${this.serving}/health`);
  }
}
