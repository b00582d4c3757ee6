// Pure HTML-string builders. Nothing in here touches the DOM, which
// keeps the render layer testable without a browser.

import type { EntryRecord, FieldEdits, StatsPayload } from "./types.js";
import type { FieldDiff } from "./session.js";
import { MCQ_LABELS } from "./types.js";
import type { FieldError } from "./validate.js";

/** Escape text for interpolation into HTML. */
export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

const COBOL_KEYWORDS = [
  "ACCEPT", "ADD", "CALL", "CLOSE", "COMPUTE", "CONTINUE", "DISPLAY",
  "DIVISION", "ELSE", "END-IF", "END-PERFORM", "EVALUATE", "EXEC", "FROM",
  "GIVING", "GOBACK", "IF", "INTO", "MOVE", "OPEN", "PERFORM", "PIC",
  "READ", "RUN", "SECTION", "STOP", "THRU", "TO", "UNTIL", "VALUE",
  "VARYING", "WHEN", "WRITE",
];

const KEYWORD_RE = new RegExp(`\\b(${COBOL_KEYWORDS.join("|")})\\b`, "g");
const LABEL_RE = /^(\s*)([A-Z][A-Z0-9-]*)(\.)/;

/** Escape COBOL source and wrap keywords and paragraph labels in spans. */
export function highlightCobol(source: string): string {
  return source
    .split("\n")
    .map((line) => {
      let escaped = escapeHtml(line);
      const label = LABEL_RE.exec(escaped);
      let prefix = "";
      if (label) {
        prefix = `${label[1]}<span class="cobol-label">${label[2]}</span>${label[3]}`;
        escaped = escaped.slice(label[0].length);
      }
      const body = escaped.replace(KEYWORD_RE, '<span class="cobol-kw">$1</span>');
      return prefix + body;
    })
    .join("\n");
}

function scoreBadge(entry: EntryRecord): string {
  if (entry.judge_score === undefined) {
    return '<span class="badge badge-unscored">unscored</span>';
  }
  return `<span class="badge badge-score">judge ${entry.judge_score}</span>`;
}

function fieldBlock(label: string, value: string): string {
  return `<div class="field"><span class="field-label">${escapeHtml(label)}</span>` +
    `<div class="field-value">${escapeHtml(value)}</div></div>`;
}

/** Read-only card for the focused entry. */
export function entryCardHtml(entry: EntryRecord): string {
  const parts = [
    `<header class="entry-head">`,
    `<span class="badge badge-task">${escapeHtml(entry.task)}</span>`,
    scoreBadge(entry),
    `<span class="entry-id">${escapeHtml(entry.id)}</span>`,
    `<span class="entry-prov">${escapeHtml(entry.provenance)}</span>`,
    `</header>`,
  ];
  if (entry.sub_topic) parts.push(fieldBlock("topic", entry.sub_topic));
  if (entry.question !== undefined) parts.push(fieldBlock("question", entry.question));
  if (entry.options) {
    for (const label of MCQ_LABELS) {
      const text = entry.options[label];
      if (text !== undefined) parts.push(fieldBlock(label, text));
    }
  }
  if (entry.answer !== undefined) parts.push(fieldBlock("answer", entry.answer));
  if (entry.source !== undefined) {
    parts.push(
      `<div class="field"><span class="field-label">source</span>` +
      `<pre class="code-pane">${highlightCobol(entry.source)}</pre></div>`,
    );
  }
  if (entry.summary !== undefined) parts.push(fieldBlock("summary", entry.summary));
  return `<article class="entry-card" data-entry-id="${escapeHtml(entry.id)}">${parts.join("")}</article>`;
}

function textArea(field: string, value: string): string {
  return `<label class="edit-field">${escapeHtml(field)}` +
    `<textarea data-field="${escapeHtml(field)}">${escapeHtml(value)}</textarea></label>`;
}

/** Task-specific edit form for the current draft. */
export function editFormHtml(entry: EntryRecord, draft: FieldEdits): string {
  const parts: string[] = [];
  if (entry.task === "mcq") {
    parts.push(textArea("question", draft.question ?? ""));
    for (const label of MCQ_LABELS) {
      parts.push(
        `<label class="edit-field">option ${label}` +
        `<input type="text" data-option="${label}" value="${escapeHtml(draft.options?.[label] ?? "")}"></label>`,
      );
    }
    const selected = draft.answer ?? "";
    const choices = MCQ_LABELS.map((label) => {
      const sel = label === selected ? " selected" : "";
      return `<option value="${label}"${sel}>${label}</option>`;
    }).join("");
    parts.push(`<label class="edit-field">answer<select data-field="answer">${choices}</select></label>`);
  } else if (entry.task === "qa") {
    parts.push(textArea("question", draft.question ?? ""));
    parts.push(textArea("answer", draft.answer ?? ""));
  } else {
    parts.push(
      `<div class="field"><span class="field-label">source</span>` +
      `<pre class="code-pane">${highlightCobol(entry.source ?? "")}</pre></div>`,
    );
    parts.push(textArea("summary", draft.summary ?? ""));
  }
  return `<form class="edit-form" data-task="${entry.task}">${parts.join("")}</form>`;
}

/** Replace whitespace with visible markers for whitespace-only diffs. */
export function showWhitespace(text: string): string {
  return text
    .replace(/ /g, "·")
    .replace(/\t/g, "→")
    .replace(/\n/g, "¶\n");
}

/**
 * Before/after preview of the draft. A diff whose sides differ only in
 * whitespace is rendered with whitespace made visible, so the change
 * does not look like a no-op.
 */
export function diffHtml(diffs: FieldDiff[]): string {
  if (diffs.length === 0) {
    return '<p class="diff-empty">no changes</p>';
  }
  const blocks = diffs.map((diff) => {
    const whitespaceOnly =
      diff.before !== diff.after &&
      diff.before.replace(/\s+/g, " ").trim() === diff.after.replace(/\s+/g, " ").trim();
    const mode = whitespaceOnly ? ' data-whitespace="visible"' : "";
    const before = whitespaceOnly ? showWhitespace(diff.before) : diff.before;
    const after = whitespaceOnly ? showWhitespace(diff.after) : diff.after;
    return (
      `<div class="diff-field"${mode}><span class="field-label">${escapeHtml(diff.field)}</span>` +
      `<pre class="diff-before">${escapeHtml(before)}</pre>` +
      `<pre class="diff-after">${escapeHtml(after)}</pre></div>`
    );
  });
  return `<div class="diff">${blocks.join("")}</div>`;
}

/** Inline list of validation problems. */
export function errorListHtml(errors: FieldError[]): string {
  if (errors.length === 0) return "";
  const items = errors
    .map((e) => `<li data-field="${escapeHtml(e.field)}">${escapeHtml(e.field)}: ${escapeHtml(e.message)}</li>`)
    .join("");
  return `<ul class="field-errors">${items}</ul>`;
}

/** Shown when the queue is empty: progress counts by status and task. */
export function drainedHtml(stats: StatsPayload | null): string {
  if (!stats) {
    return '<div class="drained"><p>queue drained</p></div>';
  }
  const statusRows = Object.keys(stats.by_status)
    .sort()
    .map((status) => `<tr><td>${escapeHtml(status)}</td><td>${stats.by_status[status]}</td></tr>`)
    .join("");
  const taskRows = Object.keys(stats.by_task)
    .sort()
    .map((task) => {
      const counts = stats.by_task[task] ?? {};
      const total = Object.values(counts).reduce((a, b) => a + b, 0);
      const pending = counts["pending"] ?? 0;
      return `<tr><td>${escapeHtml(task)}</td><td>${pending}</td><td>${total}</td></tr>`;
    })
    .join("");
  return (
    '<div class="drained"><p>queue drained</p>' +
    `<table class="stats-table"><caption>by status</caption>${statusRows}</table>` +
    `<table class="stats-table"><caption>by task</caption>` +
    `<tr><th>task</th><th>pending</th><th>total</th></tr>${taskRows}</table></div>`
  );
}

/** Toast shown after a 409: someone else finalized the entry first. */
export function conflictToastHtml(entryId: string, detail: string): string {
  return `<div class="toast toast-conflict">entry ${escapeHtml(entryId)} was finalized elsewhere: ${escapeHtml(detail)}</div>`;
}

/** Banner shown when a request failed and can be retried. */
export function retryBannerHtml(): string {
  return '<div class="banner banner-retry">request failed <button data-action="retry">retry</button></div>';
}
