// DOM rendering. Pure functions from API documents to elements; no state of
// their own. Status strings are shown exactly as the API returns them, so a
// status on screen always equals a status enum on the wire.

import type { RunDetail, RunStatus, RunSummary, ServingHealth, TaskDetail, TaskSpec } from "./api.js";

const RUN_STATUS_CLASS: Record<RunStatus, string> = {
  pending: "st-pending",
  running: "st-running",
  succeeded: "st-succeeded",
  failed: "st-failed",
};

const TASK_STATUS_CLASS: Record<string, string> = {
  pending: "st-pending",
  running: "st-running",
  retrying: "st-retrying",
  succeeded: "st-succeeded",
  failed: "st-failed",
  skipped: "st-skipped",
};

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs?: Record<string, string>,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (attrs) for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function statusPill(status: string, kind: "run" | "task"): HTMLElement {
  const cls =
    kind === "run"
      ? RUN_STATUS_CLASS[status as RunStatus] ?? "st-unknown"
      : TASK_STATUS_CLASS[status] ?? "st-unknown";
  return el("span", { class: `pill ${cls}`, "data-status": status }, status);
}

function fmtTime(ms: number | null): string {
  if (ms === null) return "-";
  return new Date(ms).toISOString().slice(11, 19);
}

function fmtDuration(start: number | null, end: number | null): string {
  if (start === null || end === null) return "-";
  return `${((end - start) / 1000).toFixed(1)}s`;
}

export interface RowActions {
  canRetry: boolean;
  canCancel: boolean;
  onRetry: () => void;
  onCancel: () => void;
  onSelect: () => void;
}

export function renderRunRow(run: RunSummary, act: RowActions, selected: boolean): HTMLTableRowElement {
  const tr = el("tr", { "data-run-id": run.run_id, class: selected ? "selected" : "" });
  const idCell = el("td");
  const idLink = el("a", { href: "#", class: "run-link" }, run.run_id);
  idLink.addEventListener("click", (ev) => {
    ev.preventDefault();
    act.onSelect();
  });
  idCell.appendChild(idLink);
  if (run.retry_of) idCell.appendChild(el("div", { class: "muted small" }, `retry of ${run.retry_of}`));
  tr.appendChild(idCell);
  tr.appendChild(el("td", {}, run.flow));
  const stCell = el("td");
  stCell.appendChild(statusPill(run.status, "run"));
  if (run.cancel_requested && run.status !== "failed" && run.status !== "succeeded") {
    stCell.appendChild(el("span", { class: "muted small" }, " cancelling"));
  }
  tr.appendChild(stCell);
  tr.appendChild(el("td", {}, fmtTime(run.created_at)));
  tr.appendChild(el("td", {}, fmtDuration(run.started_at, run.ended_at)));
  tr.appendChild(el("td", {}, String(run.attempts)));

  const actions = el("td", { class: "actions" });
  const retry = el("button", { class: "btn retry", "data-action": "retry" }, "retry");
  retry.disabled = !act.canRetry;
  retry.addEventListener("click", act.onRetry);
  const cancel = el("button", { class: "btn cancel", "data-action": "cancel" }, "cancel");
  cancel.disabled = !act.canCancel;
  cancel.addEventListener("click", act.onCancel);
  actions.appendChild(retry);
  actions.appendChild(cancel);
  tr.appendChild(actions);
  return tr;
}

/** Order tasks as the flow declares them; the DAG reads top to bottom. */
function specOrder(detail: RunDetail): TaskSpec[] {
  return detail.spec.tasks;
}

function qualitySection(task: TaskDetail): HTMLElement | null {
  const report = task.result?.["report"] as
    | { results?: Array<{ name: string; status: string; observed: number }> }
    | undefined;
  if (!report?.results?.length) return null;
  const box = el("div", { class: "quality" });
  box.appendChild(el("h4", {}, "quality report"));
  const table = el("table", { class: "quality-table" });
  const head = el("tr");
  for (const h of ["expectation", "status", "observed"]) head.appendChild(el("th", {}, h));
  table.appendChild(head);
  for (const r of report.results) {
    const tr = el("tr");
    tr.appendChild(el("td", {}, r.name));
    const td = el("td");
    td.appendChild(statusPill(r.status, "task"));
    tr.appendChild(td);
    tr.appendChild(el("td", {}, String(r.observed)));
    table.appendChild(tr);
  }
  box.appendChild(table);
  return box;
}

function metricsSection(task: TaskDetail): HTMLElement | null {
  const r = task.result;
  if (!r || typeof r["version"] !== "string") return null;
  const box = el("div", { class: "metrics" });
  box.appendChild(el("h4", {}, "model"));
  const dl = el("dl");
  const pairs: Array<[string, unknown]> = [
    ["version", r["version"]],
    ["alpha", r["best_alpha"]],
    ["recall@10", r["recall_at_10"]],
    ["baseline recall@10", r["baseline_recall_at_10"]],
    ["test cases", r["n_test_cases"]],
  ];
  for (const [k, v] of pairs) {
    if (v === undefined) continue;
    dl.appendChild(el("dt", {}, k));
    dl.appendChild(el("dd", {}, String(v)));
  }
  box.appendChild(dl);
  return box;
}

export function renderRunDetail(detail: RunDetail, behind: boolean): HTMLElement {
  const root = el("div", { class: "detail", "data-run-id": detail.run_id });
  const head = el("div", { class: "detail-head" });
  head.appendChild(el("h3", {}, detail.run_id));
  head.appendChild(statusPill(detail.status, "run"));
  if (behind) head.appendChild(el("span", { class: "muted small updating" }, "updating"));
  root.appendChild(head);
  if (detail.reason) root.appendChild(el("div", { class: "reason" }, detail.reason));

  const table = el("table", { class: "tasks" });
  const thead = el("tr");
  for (const h of ["task", "status", "attempts", "time", "error"]) thead.appendChild(el("th", {}, h));
  table.appendChild(thead);
  for (const spec of specOrder(detail)) {
    const t = detail.tasks[spec.name];
    if (!t) continue;
    const tr = el("tr", { "data-task": t.name });
    const nameCell = el("td", {}, t.name);
    if (spec.depends_on.length)
      nameCell.appendChild(el("div", { class: "muted small" }, `after ${spec.depends_on.join(", ")}`));
    tr.appendChild(nameCell);
    const stCell = el("td");
    stCell.appendChild(statusPill(t.status, "task"));
    tr.appendChild(stCell);
    tr.appendChild(el("td", {}, String(t.attempts)));
    tr.appendChild(el("td", {}, fmtDuration(t.started_at, t.ended_at)));
    tr.appendChild(el("td", { class: "error-text" }, t.error ?? ""));
    table.appendChild(tr);
  }
  root.appendChild(table);

  for (const spec of specOrder(detail)) {
    const t = detail.tasks[spec.name];
    if (!t) continue;
    const q = qualitySection(t);
    if (q) root.appendChild(q);
    const m = metricsSection(t);
    if (m) root.appendChild(m);
  }
  if (detail.notifications.length)
    root.appendChild(el("div", { class: "muted small" }, `notifications sent: ${detail.notifications.length}`));
  return root;
}

export function renderServing(health: ServingHealth | null): HTMLElement {
  const box = el("div", { class: "serving" });
  if (!health) {
    box.appendChild(el("span", { class: "muted" }, "serving: unreachable"));
    return box;
  }
  box.appendChild(el("span", {}, "serving "));
  box.appendChild(el("span", { class: "pill st-succeeded" }, health.status));
  box.appendChild(
    el("span", { class: "mono" }, ` active ${health.active_version ? health.active_version.slice(0, 12) : "none"}`),
  );
  if (health.staged_version)
    box.appendChild(el("span", { class: "mono muted" }, ` staged ${health.staged_version.slice(0, 12)}`));
  return box;
}
