// Browser bootstrap: wires the session to the page. This is the only
// module that touches the DOM; everything else is plain data in and
// HTML strings out.

import { ReviewClient } from "./api.js";
import {
  conflictToastHtml,
  diffHtml,
  drainedHtml,
  editFormHtml,
  entryCardHtml,
  errorListHtml,
  retryBannerHtml,
} from "./render.js";
import { ReviewSession } from "./session.js";
import type { Task } from "./types.js";
import type { FieldError } from "./validate.js";

const ACTOR_KEY = "review-actor";

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function currentActor(): string {
  return localStorage.getItem(ACTOR_KEY) ?? "reviewer";
}

class App {
  private session: ReviewSession;
  private editing = false;
  private errors: FieldError[] = [];

  constructor() {
    this.session = new ReviewSession(new ReviewClient(), currentActor());
  }

  async start(): Promise<void> {
    const actorInput = $("actor") as HTMLInputElement;
    actorInput.value = currentActor();
    actorInput.addEventListener("change", () => {
      const actor = actorInput.value.trim() || "reviewer";
      localStorage.setItem(ACTOR_KEY, actor);
      this.session = new ReviewSession(new ReviewClient(), actor);
      void this.reload();
    });

    const taskFilter = $("task-filter") as HTMLSelectElement;
    taskFilter.addEventListener("change", () => void this.reload());

    document.addEventListener("keydown", (event) => {
      if (event.target instanceof HTMLInputElement || event.target instanceof HTMLTextAreaElement) {
        if (event.key === "Escape") {
          this.editing = false;
          this.session.cancelEdit();
          this.renderPage();
        }
        return;
      }
      void this.onKey(event.key);
    });

    $("main").addEventListener("click", (event) => {
      const target = event.target as HTMLElement;
      const action = target.dataset["action"];
      if (action) void this.onAction(action);
    });
    $("main").addEventListener("input", (event) => {
      const target = event.target as HTMLElement;
      this.onEditInput(target);
    });

    await this.reload();
  }

  private async reload(): Promise<void> {
    const taskFilter = $("task-filter") as HTMLSelectElement;
    const task = taskFilter.value as Task | "";
    this.editing = false;
    this.errors = [];
    try {
      await this.session.loadQueue(task ? { task } : {});
    } catch {
      this.session.retryBanner = true;
    }
    this.renderPage();
  }

  private async onKey(key: string): Promise<void> {
    switch (key) {
      case "a":
        await this.submit("accept");
        break;
      case "e":
        if (this.session.current()) {
          this.editing = true;
          this.session.beginEdit();
          this.renderPage();
        }
        break;
      case "d":
        await this.submit("delete");
        break;
      case "s":
        this.session.skip();
        this.renderPage();
        break;
      case "Escape":
        this.editing = false;
        this.session.cancelEdit();
        this.renderPage();
        break;
      default:
        break;
    }
  }

  private async onAction(action: string): Promise<void> {
    switch (action) {
      case "accept":
        await this.submit("accept");
        break;
      case "edit":
        if (this.session.current()) {
          this.editing = true;
          this.session.beginEdit();
          this.renderPage();
        }
        break;
      case "fix":
        await this.submit("fix");
        break;
      case "delete":
        await this.submit("delete");
        break;
      case "skip":
        this.session.skip();
        this.renderPage();
        break;
      case "cancel":
        this.editing = false;
        this.session.cancelEdit();
        this.renderPage();
        break;
      case "retry":
        await this.reload();
        break;
      default:
        break;
    }
  }

  private onEditInput(target: HTMLElement): void {
    if (target instanceof HTMLTextAreaElement || target instanceof HTMLSelectElement) {
      const field = target.dataset["field"];
      if (field === "question" || field === "answer" || field === "source" || field === "summary") {
        this.session.updateDraft(field, target.value);
        this.renderEditPreview();
      }
    }
    if (target instanceof HTMLInputElement) {
      const label = target.dataset["option"];
      if (label) {
        this.session.updateOption(label, target.value);
        this.renderEditPreview();
      }
    }
  }

  private async submit(verdict: "accept" | "fix" | "delete"): Promise<void> {
    if (!this.session.current()) return;
    const outcome = await this.session.submitVerdict(verdict);
    if (outcome.ok) {
      this.editing = false;
      this.errors = [];
    } else if (outcome.kind === "validation") {
      this.errors = outcome.errors;
    }
    this.renderPage();
  }

  private renderEditPreview(): void {
    const preview = document.getElementById("diff-preview");
    if (preview) preview.innerHTML = diffHtml(this.session.draftDiff());
    const fixButton = document.querySelector<HTMLButtonElement>('button[data-action="fix"]');
    if (fixButton) fixButton.disabled = !this.session.canSubmitFix();
  }

  private renderPage(): void {
    const main = $("main");
    const notices: string[] = [];
    if (this.session.retryBanner) notices.push(retryBannerHtml());
    if (this.session.conflict) {
      notices.push(conflictToastHtml(this.session.conflict.entryId, this.session.conflict.detail));
      this.session.conflict = null;
    }

    const entry = this.session.current();
    if (!entry) {
      main.innerHTML = notices.join("") + drainedHtml(this.session.stats);
      return;
    }

    const position = `<p class="queue-pos">${this.session.cursor + 1} / ${this.session.queue.length}</p>`;
    let body = entryCardHtml(entry);
    let buttons: string;
    if (this.editing) {
      const draft = this.session.beginEdit();
      body += editFormHtml(entry, draft ?? {});
      body += `<div id="diff-preview">${diffHtml(this.session.draftDiff())}</div>`;
      body += errorListHtml(this.errors);
      const fixDisabled = this.session.canSubmitFix() ? "" : " disabled";
      buttons =
        `<button data-action="fix"${fixDisabled}>submit fix</button>` +
        '<button data-action="cancel">cancel</button>';
    } else {
      body += errorListHtml(this.errors);
      buttons =
        '<button data-action="accept">accept (a)</button>' +
        '<button data-action="edit">edit (e)</button>' +
        '<button data-action="delete">delete (d)</button>' +
        '<button data-action="skip">skip (s)</button>';
    }
    main.innerHTML = notices.join("") + position + body + `<div class="actions">${buttons}</div>`;
  }
}

new App().start().catch((err) => {
  console.error(err);
});
