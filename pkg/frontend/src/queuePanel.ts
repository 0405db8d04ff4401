import { ApiClient, ApiError } from "./api.js";
import { TaskRow } from "./types.js";

/**
 * State model for the queue control panel: enqueue with optimistic row
 * insertion, periodic polling that reconciles optimistic rows, and retry
 * gated to failed tasks.
 */
export class QueueModel {
  rows: TaskRow[] = [];
  inlineError: string | null = null;
  private optimistic = new Map<string, TaskRow>();

  constructor(private api: ApiClient) {}

  async enqueue(address: string): Promise<void> {
    this.inlineError = null;
    const placeholder: TaskRow = {
      task_id: `optimistic:${address}`,
      kind: "contract",
      status: "pending",
      attempts: 0,
      last_error: null,
      payload: { address },
    };
    this.optimistic.set(address, placeholder);
    this.rows = [placeholder, ...this.rows];
    try {
      await this.api.enqueue(address);
    } catch (e) {
      this.optimistic.delete(address);
      this.rows = this.rows.filter((r) => r !== placeholder);
      if (e instanceof ApiError && e.status === 409) {
        this.inlineError = `already queued: ${address}`;
        return;
      }
      throw e;
    }
  }

  /** One poll cycle: server truth replaces rows; optimistic rows survive
   * only until the server knows about their address. */
  async poll(): Promise<void> {
    const page = await this.api.tasks(undefined, 0, 200);
    const known = new Set(
      page.tasks.map((t) => String(t.payload["address"] ?? ""))
    );
    for (const addr of [...this.optimistic.keys()]) {
      if (known.has(addr)) this.optimistic.delete(addr);
    }
    this.rows = [...this.optimistic.values(), ...page.tasks];
  }

  canRetry(row: TaskRow): boolean {
    return row.status === "failed" && !row.task_id.startsWith("optimistic:");
  }

  async retry(row: TaskRow): Promise<void> {
    if (!this.canRetry(row)) return; // control is disabled for non-failed rows
    await this.api.retry(row.task_id);
    await this.poll();
  }
}
