/** Typed client for the session service.
 *
 * Every mutation carries an idempotency key so retries (page reloads,
 * flaky networks) never advance a session twice.  The fetch implementation
 * is injectable for tests and non-browser use.
 */

import type {
  ApiErrorBody,
  CreateSessionRequest,
  ObservationResponse,
  SessionRecord,
  Suggestion,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly code: string;
  readonly field?: string;

  constructor(status: number, code: string, message: string, field?: string) {
    super(message);
    this.status = status;
    this.code = code;
    this.field = field;
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(res: Response): Promise<void> {
  if (res.ok) return;
  let code = "http";
  let message = `${res.status} ${res.statusText}`;
  let field: string | undefined;
  try {
    const body = (await res.json()) as ApiErrorBody;
    if (body && body.error) {
      code = body.error.code;
      message = body.error.message;
      field = body.error.field;
    }
  } catch {
    /* non-JSON error body: keep the status text */
  }
  throw new ApiError(res.status, code, message, field);
}

export class ServiceClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.base + path, init);
    await raiseForStatus(res);
    return (await res.json()) as T;
  }

  async uploadDataset(csvText: string): Promise<string> {
    const body = await this.json<{ id: string }>("/v1/datasets", {
      method: "POST",
      headers: { "content-type": "text/csv" },
      body: csvText,
    });
    return body.id;
  }

  createSession(req: CreateSessionRequest): Promise<{ id: string }> {
    return this.json("/v1/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
  }

  getSession(id: string): Promise<SessionRecord> {
    return this.json(`/v1/sessions/${id}`);
  }

  getSuggestion(id: string): Promise<Suggestion> {
    return this.json(`/v1/sessions/${id}/suggestion`);
  }

  postObservation(
    id: string,
    x: number[],
    y: number,
    idempotencyKey: string,
  ): Promise<ObservationResponse> {
    return this.json(`/v1/sessions/${id}/observations`, {
      method: "POST",
      headers: {
        "content-type": "application/json",
        "Idempotency-Key": idempotencyKey,
      },
      body: JSON.stringify({ x, y }),
    });
  }

  /** Raw JSONL trace text, byte-for-byte as the service stores it. */
  async getTraceText(id: string): Promise<string> {
    const res = await this.fetchImpl(`${this.base}/v1/sessions/${id}/trace`);
    await raiseForStatus(res);
    return res.text();
  }

  closeSession(id: string): Promise<Record<string, unknown>> {
    return this.json(`/v1/sessions/${id}/close`, { method: "POST" });
  }
}

/** URL-safe random idempotency key. */
export function newIdempotencyKey(): string {
  const bytes = new Uint8Array(12);
  if (typeof crypto !== "undefined" && crypto.getRandomValues) {
    crypto.getRandomValues(bytes);
  } else {
    for (let i = 0; i < bytes.length; i++) {
      bytes[i] = Math.floor(Math.random() * 256);
    }
  }
  let out = "";
  for (const b of bytes) out += b.toString(16).padStart(2, "0");
  return out;
}
