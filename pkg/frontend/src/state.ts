/** Session controller: the console's ask/tell loop against the service.
 *
 * All numbers shown to the user originate from service responses; the
 * controller never recomputes model quantities.  Mutations carry
 * idempotency keys, so a retry after a network failure or page reload is
 * always safe; an observation rejected with 409 means another tab already
 * recorded it, surfaced as a stale-suggestion notice and resolved by
 * re-fetching.
 */

import { ApiError, ServiceClient, newIdempotencyKey } from "./api.js";
import { buildCreateRequest, validateForm } from "./validate.js";
import { denormalize } from "./units.js";
import type {
  HistoryEntry,
  SessionFormInput,
  SessionRecord,
  Suggestion,
} from "./types.js";

export interface PendingObservation {
  x: number[];
  y: number;
  key: string;
}

export type Phase = "setup" | "suggesting" | "awaiting-entry" | "closed";

export interface ControllerEvents {
  onChange?: () => void;
  onError?: (message: string) => void;
  onStaleSuggestion?: () => void;
}

export class SessionController {
  readonly client: ServiceClient;
  private readonly events: ControllerEvents;

  sessionId: string | null = null;
  record: SessionRecord | null = null;
  suggestion: Suggestion | null = null;
  history: HistoryEntry[] = [];
  phase: Phase = "setup";
  /** failed submissions waiting for a retry (offline tolerance) */
  queue: PendingObservation[] = [];
  lastWarning: string | null = null;

  constructor(client: ServiceClient, events: ControllerEvents = {}) {
    this.client = client;
    this.events = events;
  }

  private changed(): void {
    this.events.onChange?.();
  }

  get bounds(): [number, number][] {
    return this.record?.bounds ?? [];
  }

  get bestSoFar(): number | null {
    return this.history.length
      ? this.history[this.history.length - 1].bestSoFar
      : this.record?.best_y ?? null;
  }

  /** Best-so-far series for the chart, one point per iteration. */
  get convergenceSeries(): { t: number; best: number }[] {
    return this.history.map((h) => ({ t: h.t, best: h.bestSoFar }));
  }

  async createFromForm(input: SessionFormInput): Promise<void> {
    const errors = validateForm(input);
    if (errors.length) {
      throw new ApiError(0, "validation", errors[0].message, errors[0].field);
    }
    let uploadId: string | undefined;
    if (input.auxCsv) {
      uploadId = await this.client.uploadDataset(input.auxCsv);
    }
    const req = buildCreateRequest(input, uploadId);
    const { id } = await this.client.createSession(req);
    await this.attach(id);
  }

  /** Attach to an existing session (reload-safe: the id lives in the URL). */
  async attach(id: string): Promise<void> {
    this.record = await this.client.getSession(id);
    this.sessionId = id;
    this.history = [];
    const text = await this.client.getTraceText(id);
    for (const line of text.split("\n")) {
      if (!line.trim()) continue;
      const row = JSON.parse(line);
      this.history.push(this.toEntry(row.t, row.x, row.y, row.best));
    }
    if (this.record.status === "closed") {
      this.phase = "closed";
      this.suggestion = null;
    } else {
      this.phase = "suggesting";
      await this.refreshSuggestion();
    }
    this.changed();
  }

  private toEntry(t: number, xn: number[], y: number, best: number): HistoryEntry {
    return {
      t,
      xNormalized: xn,
      xOriginal: denormalize(xn, this.bounds),
      y,
      bestSoFar: best,
    };
  }

  async refreshSuggestion(): Promise<void> {
    if (!this.sessionId) throw new Error("no session attached");
    this.suggestion = await this.client.getSuggestion(this.sessionId);
    this.phase = "awaiting-entry";
    this.changed();
  }

  /** Submit the measured outcome for the current suggestion. */
  async submitObservation(y: number): Promise<void> {
    if (!this.sessionId || !this.suggestion) {
      throw new Error("no suggestion pending");
    }
    if (!Number.isFinite(y)) {
      throw new ApiError(0, "validation", "the measured value must be finite", "y");
    }
    const pending: PendingObservation = {
      x: this.suggestion.x,
      y,
      key: newIdempotencyKey(),
    };
    await this.flushOne(pending);
  }

  private async flushOne(pending: PendingObservation): Promise<void> {
    if (!this.sessionId) throw new Error("no session attached");
    try {
      const res = await this.client.postObservation(
        this.sessionId, pending.x, pending.y, pending.key);
      this.history.push(this.toEntry(res.t, pending.x, pending.y, res.best_so_far));
      this.suggestion = null;
      this.changed();
      // the next suggestion loads automatically after a recorded outcome
      await this.refreshSuggestion();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // another tab observed first: refresh instead of retrying
        this.events.onStaleSuggestion?.();
        await this.resync();
        return;
      }
      if (err instanceof ApiError && err.status >= 400 && err.status < 500) {
        throw err; // a real rejection (bad value); do not queue
      }
      // network-level failure: queue for retry with the same key
      this.queue.push(pending);
      this.events.onError?.(
        `submission failed (${(err as Error).message}); queued for retry`);
      this.changed();
    }
  }

  /** Retry queued submissions (same idempotency keys: replay-safe). */
  async retryQueued(): Promise<void> {
    const queued = this.queue.splice(0);
    for (const pending of queued) {
      await this.flushOne(pending);
    }
  }

  /** Re-read authoritative state after a conflict. */
  async resync(): Promise<void> {
    if (!this.sessionId) return;
    await this.attach(this.sessionId);
  }

  /** Raw JSONL export, byte-identical to the service response. */
  exportTrace(): Promise<string> {
    if (!this.sessionId) throw new Error("no session attached");
    return this.client.getTraceText(this.sessionId);
  }

  async close(): Promise<Record<string, unknown>> {
    if (!this.sessionId) throw new Error("no session attached");
    const summary = await this.client.closeSession(this.sessionId);
    this.phase = "closed";
    this.suggestion = null;
    this.changed();
    return summary;
  }
}

/** Monotonicity of the best-so-far series under the session goal. */
export function seriesIsMonotone(
  series: { best: number }[],
  goal: "minimize" | "maximize",
): boolean {
  for (let i = 1; i < series.length; i++) {
    const prev = series[i - 1].best;
    const cur = series[i].best;
    if (goal === "minimize" ? cur > prev : cur < prev) return false;
  }
  return true;
}
