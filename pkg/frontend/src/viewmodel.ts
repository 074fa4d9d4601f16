/** Payload -> view mapping. Every displayed number is the payload value
 * converted with String(); nothing is recomputed client-side. */

import type { AdviceView, SessionView } from "./types.js";

export interface SessionViewModel {
  sessionId: string;
  datasetId: string;
  psiText: string;
  alphaText: string;
  decision: "reject" | "not_reject" | "abstain";
  decisionLabel: string;
  bandLow: number;
  bandHigh: number;
  bandDegenerate: boolean;
  summaries: { mean: string; median: string; map: string };
  credible: { low: string; high: string; level: string; attained: string };
  releases: { epsilon: string; n11Tilde: string; n01Tilde: string }[];
  budget: { spent: string; cap: string; remaining: string };
  advisorAvailable: boolean;
}

const DECISION_LABELS = {
  reject: "Reject",
  not_reject: "Do not reject",
  abstain: "Abstain",
} as const;

export function buildSessionViewModel(payload: SessionView): SessionViewModel {
  const et = payload.posterior.credible.equal_tailed;
  return {
    sessionId: payload.session_id,
    datasetId: payload.dataset_id,
    psiText: String(payload.psi),
    alphaText: String(payload.settings.alpha),
    decision: payload.decision.outcome,
    decisionLabel: DECISION_LABELS[payload.decision.outcome],
    bandLow: payload.decision.region.t_low,
    bandHigh: payload.decision.region.t_high,
    bandDegenerate: payload.decision.region.degenerate,
    summaries: {
      mean: String(payload.posterior.summaries.mean),
      median: String(payload.posterior.summaries.median),
      map: String(payload.posterior.summaries.map),
    },
    credible: {
      low: String(et.low),
      high: String(et.high),
      level: String(et.level),
      attained: String(et.attained_mass),
    },
    releases: payload.releases.map((r) => ({
      epsilon: String(r.epsilon),
      n11Tilde: String(r.n11_tilde),
      n01Tilde: String(r.n01_tilde),
    })),
    budget: {
      spent: String(payload.budget.spent),
      cap: payload.budget.cap === null ? "none" : String(payload.budget.cap),
      remaining:
        payload.budget.remaining === null
          ? "unlimited"
          : String(payload.budget.remaining),
    },
    advisorAvailable: payload.decision.outcome === "abstain",
  };
}

export interface AdviceViewModel {
  minimumText: string;
  suggestedText: string;
  note: string;
  lMaxText: string;
  etaText: string;
  unbounded: boolean;
  curve: { epsilonPlus: number; bound: number }[];
}

export function buildAdviceViewModel(payload: AdviceView): AdviceViewModel {
  return {
    minimumText:
      payload.advice.epsilon_plus_min === null
        ? "unbounded"
        : String(payload.advice.epsilon_plus_min),
    suggestedText:
      payload.suggested_spend === null ? "n/a" : String(payload.suggested_spend),
    note: payload.note,
    lMaxText: String(payload.advice.l_max),
    etaText: String(payload.advice.eta),
    unbounded: payload.advice.unbounded,
    curve: payload.escape_bound_curve.map((point) => ({
      epsilonPlus: point.epsilon_plus,
      bound: point.bound,
    })),
  };
}
