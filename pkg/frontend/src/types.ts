// Wire types for the review HTTP API. Field names mirror the JSON the
// server emits, so records pass through untouched.

export type Task = "mcq" | "qa" | "summarization";

export type Verdict = "accept" | "fix" | "delete";

/** One entry as served by GET /api/review/next. */
export interface EntryRecord {
  id: string;
  task: Task;
  status: string;
  provenance: string;
  model_name?: string;
  sub_topic?: string;
  question?: string;
  options?: Record<string, string>;
  answer?: string;
  source?: string;
  summary?: string;
  judge_score?: number;
  status_reason?: string;
}

/** Editable fields sent with a fix verdict. */
export interface FieldEdits {
  question?: string;
  options?: Record<string, string>;
  answer?: string;
  source?: string;
  summary?: string;
}

export interface VerdictRequest {
  entry_id: string;
  verdict: Verdict;
  fields?: FieldEdits;
  actor: string;
}

/** GET /api/review/stats payload: status and task/status cross-tabs. */
export interface StatsPayload {
  by_status: Record<string, number>;
  by_task: Record<string, Record<string, number>>;
}

export interface QueueFilters {
  batch?: number;
  task?: Task;
}

export const MCQ_LABELS = ["A", "B", "C", "D"] as const;

export type McqLabel = (typeof MCQ_LABELS)[number];
