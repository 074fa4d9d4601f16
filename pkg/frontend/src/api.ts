/** Minimal typed client for the release service. */

import type {
  AdviceView,
  LedgerView,
  ServiceError,
  SessionView,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: ServiceError,
  ) {
    super(`${body.code}: ${body.message}`);
  }

  get budgetExhausted(): boolean {
    return this.status === 409 && this.body.code === "budget_exhausted";
  }
}

export interface ClientOptions {
  baseUrl: string;
  token?: string;
  fetchImpl?: typeof fetch;
}

export class ServiceClient {
  private readonly fetchImpl: typeof fetch;

  constructor(private readonly options: ClientOptions) {
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    idempotencyKey?: string,
  ): Promise<T> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.options.token) headers["authorization"] = `Bearer ${this.options.token}`;
    if (idempotencyKey) headers["idempotency-key"] = idempotencyKey;
    const response = await this.fetchImpl(`${this.options.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, payload as ServiceError);
    }
    return payload as T;
  }

  createDataset(
    table: { n1: number; n0: number; n11: number; n01: number },
    cap?: number,
    idempotencyKey?: string,
  ): Promise<{ dataset_id: string; cap: number | null }> {
    return this.request("POST", "/datasets", { table, cap }, idempotencyKey);
  }

  createSession(
    datasetId: string,
    body: {
      epsilon: number;
      prior?: Record<string, unknown>;
      alpha?: number;
      losses?: { lambda0: number; lambda1: number; lambda_u: number };
      eta?: number;
    },
    idempotencyKey?: string,
  ): Promise<SessionView> {
    return this.request(
      "POST",
      `/datasets/${datasetId}/sessions`,
      body,
      idempotencyKey,
    );
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  topup(
    sessionId: string,
    epsilonPlus: number,
    idempotencyKey?: string,
  ): Promise<SessionView> {
    return this.request(
      "POST",
      `/sessions/${sessionId}/topup`,
      { epsilon_plus: epsilonPlus },
      idempotencyKey,
    );
  }

  getAdvice(sessionId: string, eta?: number): Promise<AdviceView> {
    const query = eta === undefined ? "" : `?eta=${eta}`;
    return this.request("GET", `/sessions/${sessionId}/advice${query}`);
  }

  getLedger(datasetId: string): Promise<LedgerView> {
    return this.request("GET", `/datasets/${datasetId}/ledger`);
  }
}
