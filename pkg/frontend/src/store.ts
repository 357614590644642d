// Client-side state. One rule governs every write: a run document is applied
// only if its journal sequence number is >= the one already held. Poll
// responses overlap freely (the poller never awaits the previous tick), so
// late arrivals carrying older state are normal and must lose. Wall-clock
// timestamps are display-only and never decide a conflict.

import type { FlowInfo, RunDetail, RunPage, RunStatus, RunSummary, ServingHealth } from "./api.js";

interface RunEntry {
  summary: RunSummary;
  detail?: RunDetail;
}

export type ActionKey = `trigger:${string}` | `retry:${string}` | `cancel:${string}`;

export class ConsoleStore {
  private entries = new Map<string, RunEntry>();
  private order: string[] = [];
  private listSeq = -1;
  private listFilter: RunStatus | "" = "";

  filter: RunStatus | "" = "";
  page = 1;
  pages = 1;
  total = 0;
  flows: Record<string, FlowInfo> = {};
  selected: string | null = null;
  health: ServingHealth | null = null;
  connected = true;
  lastError: string | null = null;
  lastSyncAt: number | null = null;
  notice: string | null = null;
  private inflight = new Set<ActionKey>();
  private listeners: Array<() => void> = [];

  subscribe(fn: () => void): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  /** Freshest summary for a run, or undefined if never seen. */
  run(runId: string): RunSummary | undefined {
    return this.entries.get(runId)?.summary;
  }

  /** Freshest detail; may lag the summary (check isDetailBehind). */
  detail(runId: string): RunDetail | undefined {
    return this.entries.get(runId)?.detail;
  }

  /** True when the summary has moved past the detail we hold. */
  isDetailBehind(runId: string): boolean {
    const e = this.entries.get(runId);
    return !!e?.detail && e.detail.seq < e.summary.seq;
  }

  /** Rows for the list view: membership and order from the freshest applied page. */
  rows(): RunSummary[] {
    const out: RunSummary[] = [];
    for (const id of this.order) {
      const e = this.entries.get(id);
      if (e) out.push(e.summary);
    }
    return out;
  }

  applySummary(run: RunSummary): boolean {
    const e = this.entries.get(run.run_id);
    if (!e) {
      this.entries.set(run.run_id, { summary: run });
      return true;
    }
    if (run.seq < e.summary.seq) return false; // stale response lost the race
    e.summary = run;
    return true;
  }

  applyDetail(run: RunDetail): boolean {
    this.applySummary(run);
    const e = this.entries.get(run.run_id)!;
    if (e.detail && run.seq < e.detail.seq) return false;
    e.detail = run;
    this.emit();
    return true;
  }

  /**
   * Apply a GET /runs page. The response's version is the max seq it carries;
   * a page older than the one on screen is dropped wholesale, except that its
   * rows still flow through the per-run rule (they can only add, never
   * regress). A response for a different filter than the current one is
   * ignored entirely: its membership answers a question no longer asked.
   */
  applyList(resp: RunPage, filter: RunStatus | ""): boolean {
    if (filter !== this.filter) return false;
    let maxSeq = 0;
    for (const r of resp.runs) maxSeq = Math.max(maxSeq, r.seq);
    const fresh = filter !== this.listFilter || maxSeq >= this.listSeq;
    for (const r of resp.runs) this.applySummary(r);
    if (fresh) {
      this.order = resp.runs.map((r) => r.run_id);
      this.listSeq = maxSeq;
      this.listFilter = filter;
      this.page = resp.page;
      this.pages = resp.pages;
      this.total = resp.total;
    }
    this.emit();
    return fresh;
  }

  setFilter(filter: RunStatus | ""): void {
    this.filter = filter;
    this.emit();
  }

  setFlows(flows: Record<string, FlowInfo>): void {
    this.flows = flows;
    this.emit();
  }

  setHealth(health: ServingHealth | null): void {
    this.health = health;
    this.emit();
  }

  select(runId: string | null): void {
    this.selected = runId;
    this.emit();
  }

  markSyncOk(at: number): void {
    this.connected = true;
    this.lastError = null;
    this.lastSyncAt = at; // shown to the operator, never compared
    this.emit();
  }

  markSyncFailed(message: string): void {
    this.connected = false;
    this.lastError = message;
    this.emit();
  }

  setNotice(message: string | null): void {
    this.notice = message;
    this.emit();
  }

  // In-flight guards: one outstanding request per action identity. The
  // begin/end pair brackets the whole HTTP round trip, which is what makes a
  // double-click produce a single POST.
  begin(key: ActionKey): boolean {
    if (this.inflight.has(key)) return false;
    this.inflight.add(key);
    this.emit();
    return true;
  }

  end(key: ActionKey): void {
    this.inflight.delete(key);
    this.emit();
  }

  isInflight(key: ActionKey): boolean {
    return this.inflight.has(key);
  }

  canTrigger(flow: string): boolean {
    return flow in this.flows && !this.inflight.has(`trigger:${flow}`);
  }

  canRetry(run: RunSummary): boolean {
    return run.status === "failed" && !this.inflight.has(`retry:${run.run_id}`);
  }

  canCancel(run: RunSummary): boolean {
    return (
      (run.status === "pending" || run.status === "running") &&
      !run.cancel_requested &&
      !this.inflight.has(`cancel:${run.run_id}`)
    );
  }
}
