/** Payload shapes served by the release service. Field names and values are
 * rendered as received; the client never recomputes DP quantities. */

export interface ReleaseView {
  n11_tilde: number;
  n01_tilde: number;
  epsilon: number;
  released_at: string;
  release_id: string;
}

export interface CredibleSetView {
  kind: string;
  level: number;
  points: number[];
  low: number;
  high: number;
  attained_mass: number;
  tie_rule: string;
}

export interface PosteriorView {
  support: number[];
  masses: number[];
  method: "exact" | "sampled";
  summaries: { mean: number; median: number; map: number };
  credible: { equal_tailed: CredibleSetView; hpd: CredibleSetView };
  psi?: number;
  alpha?: number;
}

export interface RegionView {
  t_low: number;
  t_high: number;
  degenerate: boolean;
}

export interface DecisionView {
  outcome: "reject" | "not_reject" | "abstain";
  psi: number;
  region: RegionView;
  losses: { lambda0: number; lambda1: number; lambda_u?: number };
  alpha?: number;
}

export interface SessionSettingsView {
  epsilon: number;
  prior: { family: string } & Record<string, unknown>;
  alpha: number;
  losses: number[];
  eta: number;
}

export interface BudgetView {
  spent: number;
  cap: number | null;
  remaining: number | null;
}

export interface SessionView {
  session_id: string;
  dataset_id: string;
  settings: SessionSettingsView;
  releases: ReleaseView[];
  posterior: PosteriorView;
  psi: number;
  decision: DecisionView;
  budget: BudgetView;
}

export interface BudgetAdviceView {
  epsilon_plus_min: number | null;
  l_max: number;
  eta: number;
  psi: number;
  r: number;
  unbounded: boolean;
}

export interface AdviceView {
  session_id: string;
  psi: number;
  advice: BudgetAdviceView;
  note: string;
  suggested_spend: number | null;
  escape_bound_curve: { epsilon_plus: number; bound: number }[];
  remaining_budget: number | null;
}

export interface LedgerEntryView {
  mechanism: string;
  epsilon: number;
  timestamp: string;
  release_id: string;
}

export interface LedgerView {
  dataset_id: string;
  cap: number | null;
  spent: number;
  remaining: number | null;
  entries: LedgerEntryView[];
}

export interface ServiceError {
  code: string;
  message: string;
  remaining_budget?: number;
}
