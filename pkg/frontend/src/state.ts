/**
 * Console view state.
 *
 * Nothing held here is authoritative: the queue, the KB count and the run
 * status are whatever the API reported last, and every mutation goes through
 * the client.  The state exists so the UI can be optimistic about decisions
 * and honest about everything else.
 */

import {
  ApiError,
  type ClusterDetail,
  type DecisionRequest,
  type ItemStatus,
  type ReviewApi,
  type ReviewItem,
  type RunStatus,
} from "./api";

export interface QueueFilter {
  status: ItemStatus;
  company?: string;
}

export interface DecisionDraft {
  question: string;
  answer: string;
}

export type DecideOutcome = "applied" | "conflict" | "failed" | "in-flight";

/** Human-readable message for a failed call, suitable for the error banner. */
export function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0 ? err.message : `API error ${err.status}: ${err.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

/**
 * Client-side check for a run window.  Returns a message when the window is
 * unusable, null when it is fine; empty fields are fine (no bound).
 */
export function validateWindow(from: string, to: string): string | null {
  const fromText = from.trim();
  const toText = to.trim();
  const fromMs = fromText ? Date.parse(fromText) : null;
  const toMs = toText ? Date.parse(toText) : null;
  if (fromMs !== null && Number.isNaN(fromMs)) {
    return `"from" is not a valid timestamp`;
  }
  if (toMs !== null && Number.isNaN(toMs)) {
    return `"to" is not a valid timestamp`;
  }
  if (fromMs !== null && toMs !== null && fromMs > toMs) {
    return `"from" is after "to"`;
  }
  return null;
}

export class ConsoleState {
  filter: QueueFilter = { status: "Pending" };
  windowFrom = "";
  windowTo = "";

  items: ReviewItem[] = [];
  total = 0;
  kbTotal = 0;
  banner: string | null = null;

  selected: ReviewItem | null = null;
  cluster: ClusterDetail | null = null;
  draft: DecisionDraft | null = null;

  run: RunStatus | null = null;
  runError: string | null = null;

  private decidingId: string | null = null;

  constructor(private readonly client: ReviewApi) {}

  /** True while a decision POST for this item is on the wire. */
  isDeciding(itemId: string): boolean {
    return this.decidingId === itemId;
  }

  /** Reload the queue; on failure keep the stale list and raise the banner. */
  async refreshQueue(): Promise<void> {
    try {
      const page = await this.client.listReviewItems({
        status: this.filter.status,
        company: this.filter.company,
        page_size: 200,
      });
      this.items = page.items;
      this.total = page.total;
      this.banner = null;
    } catch (err) {
      this.banner = describeError(err);
    }
  }

  async refreshKbCount(company: string): Promise<void> {
    try {
      const page = await this.client.listEntries({ company, page_size: 1 });
      this.kbTotal = page.total;
    } catch (err) {
      this.banner = describeError(err);
    }
  }

  /** Select an item and pull its cluster so the reviewer can see the evidence. */
  async select(item: ReviewItem): Promise<void> {
    this.selected = item;
    this.cluster = null;
    this.draft = null;
    try {
      this.cluster = await this.client.getCluster(item.cluster_id);
    } catch (err) {
      this.banner = describeError(err);
    }
  }

  /** Open an edit draft.  Only items that can still be decided get one. */
  beginEdit(): DecisionDraft | null {
    if (!this.selected || this.selected.status !== "Pending") {
      return null;
    }
    this.draft = { question: this.selected.question, answer: this.selected.answer };
    return this.draft;
  }

  /**
   * Record a decision.  The item leaves the queue immediately; if the server
   * says someone else already decided it (409) the queue is refreshed from
   * the server instead of restored locally.  While one decision is on the
   * wire, further calls are ignored, so a double-click sends a single POST.
   */
  async decide(item: ReviewItem, request: DecisionRequest): Promise<DecideOutcome> {
    if (this.decidingId !== null) {
      return "in-flight";
    }
    this.decidingId = item.item_id;
    const index = this.items.findIndex((i) => i.item_id === item.item_id);
    if (index >= 0) {
      this.items.splice(index, 1);
      this.total -= 1;
    }
    try {
      const decided = await this.client.postDecision(item.item_id, request);
      if (decided.kb_entry_id) {
        this.kbTotal += 1;
      }
      if (this.selected?.item_id === item.item_id) {
        this.selected = decided;
        this.draft = null;
      }
      return "applied";
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // someone else got there first: trust the server, not our copy
        await this.refreshQueue();
        return "conflict";
      }
      if (index >= 0) {
        this.items.splice(index, 0, item);
        this.total += 1;
      }
      this.banner = describeError(err);
      return "failed";
    } finally {
      this.decidingId = null;
    }
  }

  /**
   * Start a pipeline run over the configured window.  A window that fails
   * the client-side check never reaches the API; server rejections (bad
   * window, duplicate run) land in runError for inline display.
   */
  async triggerRun(company?: string): Promise<string | null> {
    const problem = validateWindow(this.windowFrom, this.windowTo);
    if (problem) {
      this.runError = problem;
      return null;
    }
    this.runError = null;
    try {
      const started = await this.client.triggerRun({
        company,
        from: this.windowFrom.trim() || undefined,
        to: this.windowTo.trim() || undefined,
      });
      this.run = { run_id: started.run_id, status: started.status };
      return started.run_id;
    } catch (err) {
      this.runError = describeError(err);
      return null;
    }
  }

  /** Poll a run until it leaves the running state, updating `run` as it goes. */
  async pollRun(runId: string, opts: { intervalMs?: number; timeoutMs?: number } = {}): Promise<RunStatus> {
    const interval = opts.intervalMs ?? 250;
    const deadline = Date.now() + (opts.timeoutMs ?? 60_000);
    for (;;) {
      const status = await this.client.getRun(runId);
      this.run = status;
      if (status.status !== "running") {
        return status;
      }
      if (Date.now() > deadline) {
        throw new Error(`run ${runId} still running after timeout`);
      }
      await new Promise((resolve) => setTimeout(resolve, interval));
    }
  }
}
