// Thin typed wrapper over the three review endpoints. All writes go
// through submitVerdict; the UI has no other mutation path.

import type {
  EntryRecord,
  QueueFilters,
  StatsPayload,
  VerdictRequest,
} from "./types.js";

/** Error body the server sends with 4xx responses. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly reason: string,
    public readonly detail: string,
  ) {
    super(`${status} ${reason}: ${detail}`);
    this.name = "ApiError";
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let reason = "error";
  let detail = resp.statusText;
  try {
    const body = (await resp.json()) as { reason?: string; detail?: string };
    if (body.reason) reason = body.reason;
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body, keep the status text
  }
  return new ApiError(resp.status, reason, detail);
}

/** What the session layer needs from a client; tests stub this. */
export interface ReviewApi {
  fetchNext(filters?: QueueFilters): Promise<EntryRecord[]>;
  submitVerdict(request: VerdictRequest): Promise<EntryRecord>;
  fetchStats(): Promise<StatsPayload>;
}

export class ReviewClient implements ReviewApi {
  constructor(private readonly baseUrl: string = "") {}

  /** Lease the next batch of pending entries, worst judge score first. */
  async fetchNext(filters: QueueFilters = {}): Promise<EntryRecord[]> {
    const params = new URLSearchParams();
    params.set("batch", String(filters.batch ?? 10));
    if (filters.task) params.set("task", filters.task);
    const resp = await fetch(`${this.baseUrl}/api/review/next?${params}`);
    if (!resp.ok) throw await parseError(resp);
    const body = (await resp.json()) as { entries: EntryRecord[] };
    return body.entries;
  }

  /** Finalize one entry. 409 means someone else got there first. */
  async submitVerdict(request: VerdictRequest): Promise<EntryRecord> {
    const resp = await fetch(`${this.baseUrl}/api/review/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!resp.ok) throw await parseError(resp);
    const body = (await resp.json()) as { entry: EntryRecord };
    return body.entry;
  }

  async fetchStats(): Promise<StatsPayload> {
    const resp = await fetch(`${this.baseUrl}/api/review/stats`);
    if (!resp.ok) throw await parseError(resp);
    return (await resp.json()) as StatsPayload;
  }
}
