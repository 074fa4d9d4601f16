/** Sequential budget-spending flow: choose a top-up, confirm against the
 * advisor's necessary minimum and the remaining budget, then submit.
 * Budget mutations are never optimistic; the view updates only from the
 * service response.
 */

import { ApiError } from "./api.js";
import { escapeHtml } from "./charts.js";
import type { AdviceView, SessionView } from "./types.js";

export type TopupState =
  | { kind: "idle" }
  | { kind: "choosing"; chosen: number | null; warning: string | null }
  | { kind: "confirming"; chosen: number; warning: string | null }
  | { kind: "submitting"; chosen: number }
  | { kind: "done"; session: SessionView }
  | { kind: "exhausted"; message: string; remaining: number | null };

export class TopupFlow {
  state: TopupState = { kind: "idle" };

  constructor(
    private session: SessionView,
    private advice: AdviceView | null,
    private readonly submit: (epsilonPlus: number) => Promise<SessionView>,
  ) {}

  get remaining(): number | null {
    return this.session.budget.remaining;
  }

  get enabled(): boolean {
    return this.remaining === null || this.remaining > 0;
  }

  begin(): void {
    if (!this.enabled) {
      this.state = {
        kind: "exhausted",
        message: "Privacy budget exhausted; no further releases are possible.",
        remaining: this.remaining,
      };
      return;
    }
    this.state = { kind: "choosing", chosen: null, warning: null };
  }

  choose(epsilonPlus: number): void {
    if (this.state.kind !== "choosing" && this.state.kind !== "confirming") {
      throw new Error(`cannot choose from state ${this.state.kind}`);
    }
    let warning: string | null = null;
    const minimum = this.advice?.advice.epsilon_plus_min ?? null;
    if (minimum !== null && epsilonPlus < minimum) {
      // the bound is necessary, not sufficient: spending below it cannot
      // reach the requested confidence, but the analyst may still proceed
      warning =
        `Chosen budget ${epsilonPlus} is below the necessary minimum ` +
        `${minimum}; escaping the abstention region at the requested ` +
        `confidence is impossible.`;
    }
    if (this.remaining !== null && epsilonPlus > this.remaining) {
      warning = `Chosen budget ${epsilonPlus} exceeds the remaining ${this.remaining}.`;
    }
    this.state = { kind: "choosing", chosen: epsilonPlus, warning };
  }

  confirmDialog(): string {
    if (this.state.kind !== "choosing" || this.state.chosen === null) {
      throw new Error("choose a budget before confirming");
    }
    const chosen = this.state.chosen;
    const before = this.remaining;
    const after = before === null ? null : before - chosen;
    const minimum = this.advice?.advice.epsilon_plus_min ?? null;
    const lines = [
      '<div class="confirm-dialog" role="dialog">',
      `<p>Spend <strong>${escapeHtml(String(chosen))}</strong> additional budget?</p>`,
      `<p>Remaining before: ${escapeHtml(before === null ? "unlimited" : String(before))}</p>`,
      `<p>Remaining after: ${escapeHtml(after === null ? "unlimited" : String(after))}</p>`,
    ];
    if (minimum !== null) {
      lines.push(
        `<p class="advice-note">Advisor minimum: ${escapeHtml(String(minimum))} ` +
          "(necessary, not sufficient)</p>",
      );
    }
    if (this.state.warning) {
      lines.push(
        `<p class="warning" data-warning="below-minimum">` +
          `${escapeHtml(this.state.warning)}</p>`,
      );
    }
    lines.push(
      '<button class="confirm">Confirm</button>',
      '<button class="cancel">Cancel</button>',
      "</div>",
    );
    this.state = { kind: "confirming", chosen, warning: this.state.warning };
    return lines.join("\n");
  }

  cancel(): void {
    this.state = { kind: "idle" };
  }

  async confirm(): Promise<TopupState> {
    if (this.state.kind !== "confirming") {
      throw new Error("nothing to confirm");
    }
    const chosen = this.state.chosen;
    this.state = { kind: "submitting", chosen };
    try {
      const session = await this.submit(chosen);
      this.session = session;
      this.state = { kind: "done", session };
    } catch (error) {
      if (error instanceof ApiError && error.budgetExhausted) {
        this.state = {
          kind: "exhausted",
          message: error.body.message,
          remaining: error.body.remaining_budget ?? null,
        };
      } else {
        throw error;
      }
    }
    return this.state;
  }

  renderControl(): string {
    const disabled = this.enabled ? "" : " disabled";
    const remaining = this.remaining;
    const caption =
      remaining === null
        ? "no budget cap"
        : `remaining budget ${escapeHtml(String(remaining))}`;
    return (
      `<button class="topup-button"${disabled}>Request top-up release</button>` +
      `<span class="budget-caption">${caption}</span>`
    );
  }
}
