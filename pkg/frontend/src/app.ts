/** Browser shell: wires the service client to the panels.
 *
 * Demo mode creates a dataset from one of the public example tables so the
 * dashboard can be explored without live confidential data; the non-private
 * reference line is drawn only in this mode.
 */

import { ApiError, ServiceClient } from "./api.js";
import {
  renderDecisionGauge,
  renderPosteriorChart,
  renderSummaryPanel,
} from "./charts.js";
import { renderLedgerPanel } from "./ledger.js";
import { TopupFlow } from "./topup.js";
import type { AdviceView, SessionView } from "./types.js";

export const DEMO_TABLES = {
  // balanced 500-per-arm demonstration table; non-private p = 0.2846
  balanced_demo: {
    table: { n1: 500, n0: 500, n11: 260, n01: 250 },
    referenceP: 0.2846,
  },
  // public trial aggregates: primary composite endpoint, p = 0.7464
  trial_primary: {
    table: { n1: 7536, n0: 7540, n11: 569, n01: 590 },
    referenceP: 0.7464,
  },
  // public trial aggregates: major bleeding endpoint, p = 0.8452
  trial_bleeding: {
    table: { n1: 7536, n0: 7540, n11: 44, n01: 53 },
    referenceP: 0.8452,
  },
} as const;

export interface AppOptions {
  baseUrl: string;
  token?: string;
  demo?: keyof typeof DEMO_TABLES;
  cap?: number;
}

export class Dashboard {
  private client: ServiceClient;
  private session: SessionView | null = null;
  private advice: AdviceView | null = null;
  private flow: TopupFlow | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly options: AppOptions,
  ) {
    this.client = new ServiceClient({
      baseUrl: options.baseUrl,
      token: options.token,
    });
  }

  async startDemo(epsilon: number): Promise<void> {
    const demo = DEMO_TABLES[this.options.demo ?? "balanced_demo"];
    const dataset = await this.client.createDataset(
      demo.table,
      this.options.cap ?? 2.0,
    );
    this.session = await this.client.createSession(dataset.dataset_id, {
      epsilon,
    });
    await this.refreshAdvice();
    this.render(demo.referenceP);
  }

  async attach(sessionId: string): Promise<void> {
    this.session = await this.client.getSession(sessionId);
    await this.refreshAdvice();
    this.render();
  }

  private async refreshAdvice(): Promise<void> {
    this.advice = null;
    if (this.session && this.session.decision.outcome === "abstain") {
      try {
        this.advice = await this.client.getAdvice(this.session.session_id);
      } catch (error) {
        if (!(error instanceof ApiError)) throw error;
      }
    }
  }

  private render(referenceP?: number): void {
    if (!this.session) return;
    const session = this.session;
    this.flow = new TopupFlow(session, this.advice, (epsilonPlus) =>
      this.client.topup(session.session_id, epsilonPlus),
    );
    const chart = renderPosteriorChart(session, {
      alpha: session.settings.alpha,
      referenceP,
    });
    const advisor = this.advice
      ? `<div class="advisor">minimum top-up ${String(
          this.advice.advice.epsilon_plus_min,
        )} (necessary, not sufficient); suggested ${String(
          this.advice.suggested_spend,
        )}</div>`
      : "";
    this.root.innerHTML = [
      chart,
      renderSummaryPanel(session),
      renderDecisionGauge(session),
      advisor,
      this.flow.renderControl(),
    ].join("\n");
  }

  async topupAndRerender(epsilonPlus: number): Promise<void> {
    if (!this.flow) throw new Error("no active session");
    this.flow.begin();
    this.flow.choose(epsilonPlus);
    this.flow.confirmDialog();
    const state = await this.flow.confirm();
    if (state.kind === "done") {
      this.session = state.session;
      await this.refreshAdvice();
      this.render();
    } else if (state.kind === "exhausted") {
      const banner = document.createElement("div");
      banner.className = "banner banner-exhausted";
      banner.textContent = state.message;
      this.root.prepend(banner);
    }
  }

  async showLedger(): Promise<void> {
    if (!this.session) return;
    const ledger = await this.client.getLedger(this.session.dataset_id);
    const panel = document.createElement("div");
    panel.innerHTML = renderLedgerPanel(ledger);
    this.root.append(panel);
  }
}
