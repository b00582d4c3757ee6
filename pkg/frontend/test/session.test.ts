import { describe, expect, it } from "vitest";
import { ApiError, type ReviewApi } from "../src/api.js";
import { ReviewSession } from "../src/session.js";
import type { EntryRecord, QueueFilters, StatsPayload, VerdictRequest } from "../src/types.js";
import { makeEntry } from "./fixture-server.js";

interface StubOptions {
  entries?: EntryRecord[];
  stats?: StatsPayload;
  verdictError?: Error;
}

class StubClient implements ReviewApi {
  fetchCalls: QueueFilters[] = [];
  verdictCalls: VerdictRequest[] = [];
  entries: EntryRecord[];
  private readonly stats: StatsPayload;
  private readonly verdictError?: Error;

  constructor(options: StubOptions = {}) {
    this.entries = options.entries ?? [];
    this.stats = options.stats ?? { by_status: {}, by_task: {} };
    this.verdictError = options.verdictError;
  }

  async fetchNext(filters: QueueFilters = {}): Promise<EntryRecord[]> {
    this.fetchCalls.push(filters);
    return [...this.entries];
  }

  async submitVerdict(request: VerdictRequest): Promise<EntryRecord> {
    this.verdictCalls.push(request);
    if (this.verdictError) throw this.verdictError;
    const entry = this.entries.find((e) => e.id === request.entry_id);
    if (!entry) throw new ApiError(404, "not_found", "missing");
    return { ...entry, status: "accepted" };
  }

  async fetchStats(): Promise<StatsPayload> {
    return this.stats;
  }
}

function threeEntries(): EntryRecord[] {
  return [
    makeEntry({ task: "mcq", id: "a1", judge_score: 3 }),
    makeEntry({ task: "qa", id: "a2", judge_score: 7 }),
    makeEntry({ task: "summarization", id: "a3", judge_score: 9 }),
  ];
}

describe("loadQueue", () => {
  it("focuses the first entry and passes the task filter through", async () => {
    const client = new StubClient({ entries: threeEntries() });
    const session = new ReviewSession(client, "alice", 25);
    await session.loadQueue({ task: "qa" });
    expect(session.current()?.id).toBe("a1");
    expect(session.cursor).toBe(0);
    expect(client.fetchCalls).toEqual([{ batch: 25, task: "qa" }]);
  });

  it("fetches stats for the drained view when the queue is empty", async () => {
    const stats: StatsPayload = {
      by_status: { accepted: 4, pending: 0 },
      by_task: { qa: { accepted: 4 } },
    };
    const client = new StubClient({ stats });
    const session = new ReviewSession(client, "alice");
    await session.loadQueue();
    expect(session.drained).toBe(true);
    expect(session.stats).toEqual(stats);
  });
});

describe("skip", () => {
  it("cycles through the queue and wraps around", async () => {
    const session = new ReviewSession(new StubClient({ entries: threeEntries() }), "alice");
    await session.loadQueue();
    session.skip();
    expect(session.current()?.id).toBe("a2");
    session.skip();
    session.skip();
    expect(session.current()?.id).toBe("a1");
  });
});

describe("submitVerdict", () => {
  it("advances to the next entry after a successful accept", async () => {
    const session = new ReviewSession(new StubClient({ entries: threeEntries() }), "alice");
    await session.loadQueue();
    const outcome = await session.submitVerdict("accept");
    expect(outcome.ok).toBe(true);
    expect(session.queue.map((e) => e.id)).toEqual(["a2", "a3"]);
    expect(session.current()?.id).toBe("a2");
  });

  it("restores the queue and raises the retry banner on network failure", async () => {
    const client = new StubClient({
      entries: threeEntries(),
      verdictError: new TypeError("fetch failed"),
    });
    const session = new ReviewSession(client, "alice");
    await session.loadQueue();
    session.beginEdit();
    session.updateDraft("question", "Edited question text kept across the failure.");
    const outcome = await session.submitVerdict("accept");
    expect(outcome).toMatchObject({ ok: false, kind: "network" });
    expect(session.retryBanner).toBe(true);
    expect(session.queue.map((e) => e.id)).toEqual(["a1", "a2", "a3"]);
    expect(session.current()?.id).toBe("a1");
    expect(session.draft()?.question).toBe("Edited question text kept across the failure.");
  });

  it("blocks an invalid fix before anything is sent", async () => {
    const client = new StubClient({ entries: threeEntries() });
    const session = new ReviewSession(client, "alice");
    await session.loadQueue();
    session.beginEdit();
    session.updateOption("B", "");
    expect(session.canSubmitFix()).toBe(false);
    const outcome = await session.submitVerdict("fix");
    expect(outcome).toMatchObject({ ok: false, kind: "validation" });
    if (!outcome.ok && outcome.kind === "validation") {
      expect(outcome.errors.some((e) => e.field === "option B")).toBe(true);
    }
    expect(client.verdictCalls).toEqual([]);
    expect(session.queue).toHaveLength(3);
  });

  it("refuses a fix with no changes", async () => {
    const client = new StubClient({ entries: threeEntries() });
    const session = new ReviewSession(client, "alice");
    await session.loadQueue();
    session.beginEdit();
    expect(session.canSubmitFix()).toBe(false);
    const outcome = await session.submitVerdict("fix");
    expect(outcome).toMatchObject({ ok: false, kind: "validation" });
    expect(client.verdictCalls).toEqual([]);
  });

  it("sends only the fields that changed", async () => {
    const client = new StubClient({ entries: threeEntries() });
    const session = new ReviewSession(client, "alice");
    await session.loadQueue();
    session.skip();
    session.beginEdit();
    session.updateDraft("answer", "It routes job output to the named class.");
    const outcome = await session.submitVerdict("fix");
    expect(outcome.ok).toBe(true);
    expect(client.verdictCalls).toHaveLength(1);
    expect(client.verdictCalls[0]?.fields).toEqual({
      answer: "It routes job output to the named class.",
    });
    expect(client.verdictCalls[0]?.actor).toBe("alice");
  });

  it("maps a server 400 to inline errors and keeps the entry", async () => {
    const client = new StubClient({
      entries: threeEntries(),
      verdictError: new ApiError(400, "invalid", "question too short"),
    });
    const session = new ReviewSession(client, "alice");
    await session.loadQueue();
    const outcome = await session.submitVerdict("accept");
    expect(outcome).toMatchObject({ ok: false, kind: "validation" });
    if (!outcome.ok && outcome.kind === "validation") {
      expect(outcome.errors[0]?.message).toBe("question too short");
    }
    expect(session.queue).toHaveLength(3);
    expect(session.retryBanner).toBe(false);
  });
});

describe("draftDiff", () => {
  it("reports per-field before and after", async () => {
    const session = new ReviewSession(new StubClient({ entries: threeEntries() }), "alice");
    await session.loadQueue();
    session.beginEdit();
    session.updateDraft("question", "Which verb copies a value?");
    session.updateOption("D", "WRITE");
    const diffs = session.draftDiff();
    expect(diffs).toEqual([
      {
        field: "question",
        before: "Which statement moves a value?",
        after: "Which verb copies a value?",
      },
      { field: "option D", before: "READ", after: "WRITE" },
    ]);
  });

  it("is empty before any edit", async () => {
    const session = new ReviewSession(new StubClient({ entries: threeEntries() }), "alice");
    await session.loadQueue();
    session.beginEdit();
    expect(session.draftDiff()).toEqual([]);
  });
});
