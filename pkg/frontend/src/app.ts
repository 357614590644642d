// The console proper: owns the DOM skeleton, polls the orchestrator, and
// turns operator clicks into single API calls. Polling is fire-and-forget on
// a fixed timer; ticks overlap when the network is slow and the store's
// sequence rule decides which response wins.

import { ApiError, ConsoleApi } from "./api.js";
import type { RunStatus } from "./api.js";
import { ConsoleStore } from "./store.js";
import type { ActionKey } from "./store.js";
import { el, renderRunDetail, renderRunRow, renderServing } from "./view.js";

const TEMPLATE = `
  <div class="banner hidden" data-region="banner"></div>
  <div class="notice hidden" data-region="notice"></div>
  <header class="topbar">
    <h1>recstack console</h1>
    <div data-region="serving"></div>
    <div class="sync muted small" data-region="sync"></div>
  </header>
  <section class="flows" data-region="flows"></section>
  <section class="list">
    <div class="list-controls">
      <label>status
        <select data-region="filter">
          <option value="">all</option>
          <option value="pending">pending</option>
          <option value="running">running</option>
          <option value="succeeded">succeeded</option>
          <option value="failed">failed</option>
        </select>
      </label>
      <span class="pager">
        <button data-region="prev" class="btn">&lt;</button>
        <span data-region="page"></span>
        <button data-region="next" class="btn">&gt;</button>
      </span>
    </div>
    <table class="runs">
      <thead>
        <tr><th>run</th><th>flow</th><th>status</th><th>created</th><th>duration</th><th>attempts</th><th>actions</th></tr>
      </thead>
      <tbody data-region="rows"></tbody>
    </table>
    <div class="muted small hidden" data-region="empty">no runs</div>
  </section>
  <section class="detail-pane hidden" data-region="detail"></section>
`;

export interface ConsoleAppOptions {
  /** Refresh period; the default matches a human watching a pipeline. */
  pollIntervalMs?: number;
}

export class ConsoleApp {
  readonly store = new ConsoleStore();
  private readonly regions: Record<string, HTMLElement>;
  private timer: ReturnType<typeof setInterval> | null = null;
  private requestedPage = 1;
  private readonly pollIntervalMs: number;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ConsoleApi,
    opts?: ConsoleAppOptions,
  ) {
    this.pollIntervalMs = opts?.pollIntervalMs ?? 2000;
    this.root.innerHTML = TEMPLATE;
    this.regions = {};
    for (const node of this.root.querySelectorAll<HTMLElement>("[data-region]")) {
      this.regions[node.dataset["region"]!] = node;
    }
    const filter = this.regions["filter"] as HTMLSelectElement;
    filter.addEventListener("change", () => {
      this.requestedPage = 1;
      this.store.setFilter(filter.value as RunStatus | "");
      void this.tick();
    });
    this.regions["prev"]!.addEventListener("click", () => {
      if (this.requestedPage > 1) {
        this.requestedPage -= 1;
        void this.tick();
      }
    });
    this.regions["next"]!.addEventListener("click", () => {
      if (this.requestedPage < this.store.pages) {
        this.requestedPage += 1;
        void this.tick();
      }
    });
    this.store.subscribe(() => this.render());
  }

  start(): void {
    void this.loadFlows();
    void this.tick();
    this.timer = setInterval(() => void this.tick(), this.pollIntervalMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async loadFlows(): Promise<void> {
    try {
      const res = await this.api.listFlows();
      this.store.setFlows(res.flows);
    } catch (err) {
      this.store.markSyncFailed(errText(err));
    }
  }

  /** One poll round; never awaited by the timer, so rounds may overlap. */
  async tick(): Promise<void> {
    const filter = this.store.filter;
    const page = this.requestedPage;
    const jobs: Array<Promise<void>> = [
      this.api
        .listRuns({ status: filter || undefined, page, pageSize: 20 })
        .then((resp) => {
          this.store.applyList(resp, filter);
          this.store.markSyncOk(Date.now());
        })
        .catch((err) => this.store.markSyncFailed(errText(err))),
      this.api
        .servingHealth()
        .then((h) => this.store.setHealth(h))
        .catch(() => this.store.setHealth(null)),
    ];
    const selected = this.store.selected;
    if (selected) {
      jobs.push(
        this.api
          .getRun(selected)
          .then((d) => void this.store.applyDetail(d))
          .catch((err) => {
            if (!(err instanceof ApiError)) this.store.markSyncFailed(errText(err));
          }),
      );
    }
    await Promise.all(jobs);
  }

  async trigger(flow: string): Promise<void> {
    await this.action(`trigger:${flow}`, async () => {
      const res = await this.api.triggerFlow(flow);
      this.store.select(res.run_id);
    });
  }

  async retry(runId: string): Promise<void> {
    await this.action(`retry:${runId}`, async () => {
      const res = await this.api.retryRun(runId);
      this.store.select(res.run_id);
    });
  }

  async cancel(runId: string): Promise<void> {
    await this.action(`cancel:${runId}`, async () => {
      await this.api.cancelRun(runId);
    });
  }

  // Shared action plumbing: the begin/end guard spans the full round trip and
  // a successful mutation is followed by an immediate poll so the new state
  // shows up without waiting out the interval.
  private async action(key: ActionKey, body: () => Promise<void>): Promise<void> {
    if (!this.store.begin(key)) return;
    try {
      await body();
      this.store.setNotice(null);
      await this.tick();
    } catch (err) {
      this.store.setNotice(errText(err));
    } finally {
      this.store.end(key);
    }
  }

  select(runId: string | null): void {
    this.store.select(runId);
    if (runId) void this.tick();
  }

  private render(): void {
    const s = this.store;

    const banner = this.regions["banner"]!;
    if (!s.connected) {
      banner.textContent = `connection lost: ${s.lastError ?? "unreachable"}`;
      banner.classList.remove("hidden");
    } else {
      banner.classList.add("hidden");
    }

    const notice = this.regions["notice"]!;
    if (s.notice) {
      notice.textContent = "";
      notice.appendChild(el("span", {}, s.notice));
      const dismiss = el("button", { class: "btn small" }, "dismiss");
      dismiss.addEventListener("click", () => s.setNotice(null));
      notice.appendChild(dismiss);
      notice.classList.remove("hidden");
    } else {
      notice.classList.add("hidden");
    }

    const sync = this.regions["sync"]!;
    const syncedAt = s.lastSyncAt === null ? "never" : new Date(s.lastSyncAt).toISOString().slice(11, 19);
    sync.textContent = s.connected ? `synced ${syncedAt}` : `stale (last synced ${syncedAt})`;
    sync.classList.toggle("stale", !s.connected);

    const serving = this.regions["serving"]!;
    serving.textContent = "";
    serving.appendChild(renderServing(s.health));

    const flows = this.regions["flows"]!;
    flows.textContent = "";
    for (const name of Object.keys(s.flows).sort()) {
      const btn = el("button", { class: "btn trigger", "data-flow": name }, `run ${name}`);
      btn.disabled = !s.canTrigger(name);
      btn.addEventListener("click", () => void this.trigger(name));
      flows.appendChild(btn);
    }

    const rows = this.regions["rows"]!;
    rows.textContent = "";
    const list = s.rows();
    for (const run of list) {
      rows.appendChild(
        renderRunRow(
          run,
          {
            canRetry: s.canRetry(run),
            canCancel: s.canCancel(run),
            onRetry: () => void this.retry(run.run_id),
            onCancel: () => void this.cancel(run.run_id),
            onSelect: () => this.select(run.run_id),
          },
          run.run_id === s.selected,
        ),
      );
    }
    rows.parentElement!.classList.toggle("stale", !s.connected);
    this.regions["empty"]!.classList.toggle("hidden", list.length > 0);
    this.regions["page"]!.textContent = `page ${s.page}/${s.pages} (${s.total} runs)`;

    const detailPane = this.regions["detail"]!;
    detailPane.textContent = "";
    if (s.selected) {
      detailPane.classList.remove("hidden");
      const close = el("button", { class: "btn small close" }, "close");
      close.addEventListener("click", () => this.select(null));
      detailPane.appendChild(close);
      const detail = s.detail(s.selected);
      if (detail) {
        detailPane.appendChild(renderRunDetail(detail, s.isDetailBehind(s.selected)));
      } else {
        detailPane.appendChild(el("div", { class: "muted" }, "loading run..."));
      }
    } else {
      detailPane.classList.add("hidden");
    }
  }
}

function errText(err: unknown): string {
  if (err instanceof ApiError) return `${err.code}: ${err.detail}`;
  if (err instanceof Error) return err.message;
  return String(err);
}
