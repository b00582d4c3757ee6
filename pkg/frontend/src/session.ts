// Review session state: the fetched queue, the focused entry, local
// edit drafts, and verdict submission with optimistic advance. All
// server writes go through the injected ReviewClient.

import { ApiError, type ReviewApi } from "./api.js";
import type {
  EntryRecord,
  FieldEdits,
  QueueFilters,
  StatsPayload,
  Verdict,
} from "./types.js";
import { editableFields, validateDraft, type FieldError } from "./validate.js";

export interface FieldDiff {
  field: string;
  before: string;
  after: string;
}

export interface ConflictNotice {
  entryId: string;
  detail: string;
}

export type SubmitOutcome =
  | { ok: true; entry: EntryRecord }
  | { ok: false; kind: "validation"; errors: FieldError[] }
  | { ok: false; kind: "conflict"; detail: string }
  | { ok: false; kind: "network"; detail: string };

/** Copy just the editable fields of an entry into a draft. */
function draftFrom(entry: EntryRecord): FieldEdits {
  const draft: FieldEdits = {};
  for (const field of editableFields(entry.task)) {
    if (field === "options") {
      draft.options = { ...(entry.options ?? {}) };
    } else {
      const value = entry[field as "question" | "answer" | "source" | "summary"];
      if (value !== undefined) draft[field as keyof Omit<FieldEdits, "options">] = value;
    }
  }
  return draft;
}

export class ReviewSession {
  queue: EntryRecord[] = [];
  cursor = 0;
  stats: StatsPayload | null = null;
  conflict: ConflictNotice | null = null;
  retryBanner = false;
  submitted: { entryId: string; verdict: Verdict }[] = [];

  private drafts = new Map<string, FieldEdits>();
  private filters: QueueFilters = {};
  private inFlight = false;

  constructor(
    private readonly client: ReviewApi,
    public readonly actor: string,
    private readonly batchSize = 10,
  ) {}

  get drained(): boolean {
    return this.queue.length === 0;
  }

  current(): EntryRecord | null {
    return this.queue[this.cursor] ?? null;
  }

  /** Fetch a fresh batch; on an empty queue pull stats for the drained view. */
  async loadQueue(filters: QueueFilters = {}): Promise<void> {
    this.filters = { batch: this.batchSize, ...filters };
    this.queue = await this.client.fetchNext(this.filters);
    this.cursor = 0;
    this.retryBanner = false;
    if (this.queue.length === 0) {
      this.stats = await this.client.fetchStats();
    }
  }

  /** Move focus to the next entry without a verdict; wraps around. */
  skip(): void {
    if (this.queue.length > 0) {
      this.cursor = (this.cursor + 1) % this.queue.length;
    }
  }

  /** Start (or resume) an edit draft for the focused entry. */
  beginEdit(): FieldEdits | null {
    const entry = this.current();
    if (!entry) return null;
    let draft = this.drafts.get(entry.id);
    if (!draft) {
      draft = draftFrom(entry);
      this.drafts.set(entry.id, draft);
    }
    return draft;
  }

  draft(): FieldEdits | null {
    const entry = this.current();
    return entry ? (this.drafts.get(entry.id) ?? null) : null;
  }

  cancelEdit(): void {
    const entry = this.current();
    if (entry) this.drafts.delete(entry.id);
  }

  updateDraft(field: "question" | "answer" | "source" | "summary", value: string): void {
    const draft = this.draft();
    if (draft) draft[field] = value;
  }

  updateOption(label: string, value: string): void {
    const draft = this.draft();
    if (draft) {
      if (!draft.options) draft.options = {};
      draft.options[label] = value;
    }
  }

  /** Per-field before/after pairs for the focused entry's draft. */
  draftDiff(): FieldDiff[] {
    const entry = this.current();
    const draft = entry ? this.drafts.get(entry.id) : undefined;
    if (!entry || !draft) return [];
    const diffs: FieldDiff[] = [];
    for (const field of ["question", "answer", "source", "summary"] as const) {
      const after = draft[field];
      const before = entry[field] ?? "";
      if (after !== undefined && after !== before) {
        diffs.push({ field, before, after });
      }
    }
    if (draft.options) {
      const original = entry.options ?? {};
      for (const label of Object.keys(draft.options).sort()) {
        const after = draft.options[label] ?? "";
        const before = original[label] ?? "";
        if (after !== before) {
          diffs.push({ field: `option ${label}`, before, after });
        }
      }
    }
    return diffs;
  }

  /** A fix is sendable only when something changed and the draft validates. */
  canSubmitFix(): boolean {
    const entry = this.current();
    const draft = entry ? this.drafts.get(entry.id) : undefined;
    if (!entry || !draft) return false;
    if (this.draftDiff().length === 0) return false;
    return validateDraft(entry.task, draft).length === 0;
  }

  /** Only the fields that actually changed go over the wire. */
  private changedFields(entry: EntryRecord, draft: FieldEdits): FieldEdits {
    const fields: FieldEdits = {};
    for (const field of ["question", "answer", "source", "summary"] as const) {
      const after = draft[field];
      if (after !== undefined && after !== (entry[field] ?? "")) {
        fields[field] = after;
      }
    }
    if (draft.options) {
      const original = entry.options ?? {};
      const changed = Object.keys(draft.options).some(
        (label) => draft.options?.[label] !== original[label],
      );
      if (changed) fields.options = { ...draft.options };
    }
    return fields;
  }

  /**
   * Submit a verdict for the focused entry. The entry leaves the queue
   * immediately (optimistic advance); a failure puts it back. A 409
   * means another reviewer finalized it first: the queue is refreshed
   * so the stale entry drops out, and a conflict notice is kept for
   * the toast.
   */
  async submitVerdict(verdict: Verdict): Promise<SubmitOutcome> {
    const entry = this.current();
    if (!entry) throw new Error("no entry focused");
    if (this.inFlight) throw new Error("a verdict is already in flight");

    let fields: FieldEdits | undefined;
    if (verdict === "fix") {
      const draft = this.drafts.get(entry.id);
      if (!draft) {
        return { ok: false, kind: "validation", errors: [{ field: "draft", message: "nothing edited" }] };
      }
      const errors = validateDraft(entry.task, draft);
      if (errors.length > 0) {
        return { ok: false, kind: "validation", errors };
      }
      fields = this.changedFields(entry, draft);
      if (Object.keys(fields).length === 0) {
        return { ok: false, kind: "validation", errors: [{ field: "draft", message: "no changes to send" }] };
      }
    }

    const index = this.cursor;
    this.queue.splice(index, 1);
    if (this.cursor >= this.queue.length) {
      this.cursor = Math.max(0, this.queue.length - 1);
    }
    this.inFlight = true;
    try {
      const finalized = await this.client.submitVerdict({
        entry_id: entry.id,
        verdict,
        fields,
        actor: this.actor,
      });
      this.drafts.delete(entry.id);
      this.submitted.push({ entryId: entry.id, verdict });
      if (this.queue.length === 0) {
        this.stats = await this.client.fetchStats();
      }
      return { ok: true, entry: finalized };
    } catch (err) {
      this.queue.splice(index, 0, entry);
      this.cursor = index;
      if (err instanceof ApiError && err.status === 409) {
        this.conflict = { entryId: entry.id, detail: err.detail };
        this.inFlight = false;
        await this.loadQueue(this.filters);
        return { ok: false, kind: "conflict", detail: err.detail };
      }
      if (err instanceof ApiError) {
        return { ok: false, kind: "validation", errors: [{ field: "request", message: err.detail }] };
      }
      // network trouble: keep queue and draft, show the retry banner
      this.retryBanner = true;
      const detail = err instanceof Error ? err.message : String(err);
      return { ok: false, kind: "network", detail };
    } finally {
      this.inFlight = false;
    }
  }
}
