// Client-side mirror of the server's field rules, so no valid
// submission bounces and invalid drafts never leave the browser.

import { MCQ_LABELS, type FieldEdits, type Task } from "./types.js";

export const MIN_FIELD_CHARS = 2;
export const MAX_FIELD_CHARS = 20000;

export interface FieldError {
  field: string;
  message: string;
}

/** Fields a fix verdict may edit for each task. */
export function editableFields(task: Task): string[] {
  switch (task) {
    case "mcq":
      return ["question", "options", "answer"];
    case "qa":
      return ["question", "answer"];
    case "summarization":
      return ["source", "summary"];
  }
}

function checkLength(field: string, value: string, out: FieldError[]): void {
  if (value.length < MIN_FIELD_CHARS) {
    out.push({ field, message: `must be at least ${MIN_FIELD_CHARS} characters` });
  } else if (value.length > MAX_FIELD_CHARS) {
    out.push({ field, message: `must be at most ${MAX_FIELD_CHARS} characters` });
  }
}

/**
 * Validate a draft before it is sent as a fix. Returns one error per
 * offending field; an empty list means the draft is sendable.
 */
export function validateDraft(task: Task, draft: FieldEdits): FieldError[] {
  const errors: FieldError[] = [];
  for (const field of ["question", "source", "summary"] as const) {
    const value = draft[field];
    if (value !== undefined) checkLength(field, value, errors);
  }
  if (task === "qa" && draft.answer !== undefined) {
    checkLength("answer", draft.answer, errors);
  }
  if (task === "mcq") {
    if (draft.options !== undefined) {
      const labels = Object.keys(draft.options).sort();
      if (labels.join(",") !== MCQ_LABELS.join(",")) {
        errors.push({ field: "options", message: "options must use labels A, B, C, D" });
      }
      for (const label of MCQ_LABELS) {
        const text = draft.options[label];
        if (text !== undefined) checkLength(`option ${label}`, text, errors);
      }
    }
    if (draft.answer !== undefined && !(MCQ_LABELS as readonly string[]).includes(draft.answer)) {
      errors.push({ field: "answer", message: "answer must be one of A, B, C, D" });
    }
  }
  return errors;
}
