/** Clarification wizard: question rounds, review of the decomposition, finalize. */

import { ApiClient, ApiError, NetworkError } from "./api.js";
import type { Session, Subgoal } from "./types.js";

export type WizardView =
  | { kind: "idle" }
  | {
      kind: "questions";
      sessionId: string;
      version: number;
      round: number;
      maxRounds: number;
      questions: string[];
      /** preserved answers so a conflict or network error never loses input */
      draft: string[];
      banner: string | null;
      retriable: boolean;
      conflict: boolean;
    }
  | { kind: "review"; sessionId: string; subgoals: Subgoal[]; accepted: boolean }
  | { kind: "abandoned"; sessionId: string }
  | { kind: "error"; message: string; retriable: boolean };

export class WizardController {
  private view_: WizardView = { kind: "idle" };
  private session: Session | null = null;

  constructor(private api: ApiClient) {}

  get view(): WizardView {
    return this.view_;
  }

  private fromSession(session: Session, banner: string | null = null, conflict = false): void {
    this.session = session;
    if (session.state === "decomposed" && session.result) {
      this.view_ = {
        kind: "review",
        sessionId: session.id,
        subgoals: session.result.subgoals,
        accepted: false,
      };
      return;
    }
    if (session.state === "abandoned") {
      this.view_ = { kind: "abandoned", sessionId: session.id };
      return;
    }
    const pending = session.exchanges[session.exchanges.length - 1];
    this.view_ = {
      kind: "questions",
      sessionId: session.id,
      version: session.version,
      round: pending?.round ?? 1,
      maxRounds: session.max_rounds,
      questions: pending?.questions ?? [],
      draft: new Array(pending?.questions.length ?? 0).fill(""),
      banner,
      retriable: banner !== null && !conflict,
      conflict,
    };
  }

  async create(goal: { statement: string; domain_label?: string; task_type?: string }, maxRounds = 3): Promise<WizardView> {
    try {
      this.fromSession(await this.api.createSession(goal, maxRounds));
    } catch (err) {
      this.view_ = { kind: "error", message: String(err), retriable: err instanceof NetworkError };
    }
    return this.view_;
  }

  /** Attach to an existing server-side session (second tab, page refresh). */
  async attach(sessionId: string): Promise<WizardView> {
    this.fromSession(await this.api.getSession(sessionId));
    return this.view_;
  }

  setDraft(index: number, text: string): void {
    if (this.view_.kind === "questions") this.view_.draft[index] = text;
  }

  /** Submit the current round; on a stale-version conflict the form (and the
   * practitioner's draft answers) survive behind a reload prompt. */
  async submit(): Promise<WizardView> {
    if (this.view_.kind !== "questions") return this.view_;
    const current = this.view_;
    try {
      this.fromSession(
        await this.api.submitResponses(current.sessionId, current.version, current.draft),
      );
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        this.view_ = { ...current, banner: "Session changed elsewhere; reload to continue.", conflict: true, retriable: false };
      } else if (err instanceof NetworkError) {
        this.view_ = { ...current, banner: "Network failure; retry submission.", conflict: false, retriable: true };
      } else {
        this.view_ = { kind: "error", message: String(err), retriable: false };
      }
    }
    return this.view_;
  }

  /** Reload the server copy after a conflict, dropping the stale version. */
  async reload(): Promise<WizardView> {
    if (this.session === null) return this.view_;
    this.fromSession(await this.api.getSession(this.session.id));
    return this.view_;
  }

  async forceFinalize(): Promise<WizardView> {
    if (this.view_.kind !== "questions") return this.view_;
    const current = this.view_;
    try {
      this.fromSession(await this.api.finalizeSession(current.sessionId, current.version));
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        this.view_ = { ...current, banner: "Session changed elsewhere; reload to continue.", conflict: true, retriable: false };
      } else {
        this.view_ = { kind: "error", message: String(err), retriable: err instanceof NetworkError };
      }
    }
    return this.view_;
  }

  /** Local edit of a decomposed subgoal before accepting it. */
  editSubgoal(subgoalId: string, patch: Partial<Pick<Subgoal, "label" | "description">>): void {
    if (this.view_.kind !== "review") return;
    this.view_ = {
      ...this.view_,
      subgoals: this.view_.subgoals.map((s) =>
        s.id === subgoalId ? { ...s, ...patch } : s,
      ),
    };
  }

  accept(): WizardView {
    if (this.view_.kind === "review") {
      this.view_ = { ...this.view_, accepted: true };
    }
    return this.view_;
  }
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderWizard(view: WizardView): string {
  switch (view.kind) {
    case "idle":
      return `<section class="wizard"><form data-role="goal-form">
        <label>Fine-tuning goal <textarea name="statement" required></textarea></label>
        <label>Domain <input name="domain_label" /></label>
        <label>Task type <input name="task_type" /></label>
        <button type="submit">Start clarification</button>
      </form></section>`;
    case "questions": {
      const inputs = view.questions
        .map(
          (question, i) => `
        <label class="question">
          <span>${escapeHtml(question)}</span>
          <input data-role="answer" data-index="${i}" value="${escapeHtml(view.draft[i] ?? "")}" />
        </label>`,
        )
        .join("\n");
      const banner = view.banner
        ? `<div class="banner ${view.conflict ? "conflict" : "retriable"}" data-role="banner">
             ${escapeHtml(view.banner)}
             ${view.conflict ? '<button data-role="reload">Reload</button>' : '<button data-role="retry">Retry</button>'}
           </div>`
        : "";
      return `<section class="wizard" data-session="${escapeHtml(view.sessionId)}">
        ${banner}
        <h2>Round ${view.round} of ${view.maxRounds}</h2>
        <form data-role="answers-form">${inputs}
          <button type="submit" data-role="submit">Submit answers</button>
          <button type="button" data-role="finalize">Finalize now</button>
        </form>
      </section>`;
    }
    case "review": {
      const items = view.subgoals
        .map(
          (s) => `
        <li class="subgoal" data-subgoal="${escapeHtml(s.id)}">
          <strong data-role="label" contenteditable="true">${escapeHtml(s.label)}</strong>
          <p data-role="description" contenteditable="true">${escapeHtml(s.description)}</p>
        </li>`,
        )
        .join("\n");
      return `<section class="wizard review" data-session="${escapeHtml(view.sessionId)}">
        <h2>Decomposed subgoals</h2>
        <ul class="subgoals">${items}</ul>
        <button data-role="accept" ${view.accepted ? "disabled" : ""}>
          ${view.accepted ? "Accepted" : "Accept decomposition"}
        </button>
      </section>`;
    }
    case "abandoned":
      return `<section class="wizard"><p>Session abandoned.</p></section>`;
    case "error":
      return `<section class="wizard"><div class="banner ${view.retriable ? "retriable" : "fatal"}">
        ${escapeHtml(view.message)}${view.retriable ? ' <button data-role="retry">Retry</button>' : ""}
      </div></section>`;
  }
}
