import { describe, expect, it } from "vitest";

import { ApiError } from "../src/api.js";
import { TopupFlow } from "../src/topup.js";
import { buildAdviceViewModel } from "../src/viewmodel.js";
import type { AdviceView, SessionView } from "../src/types.js";

import abstainFixture from "./fixtures/recorded-abstain.json";

const session = abstainFixture.session as unknown as SessionView;
const advice = abstainFixture.advice as unknown as AdviceView;

function makeFlow(
  submit?: (epsilonPlus: number) => Promise<SessionView>,
  view: SessionView = session,
) {
  return new TopupFlow(
    view,
    advice,
    submit ?? (async () => session),
  );
}

describe("top-up flow", () => {
  it("suggested spend flows into the request body", async () => {
    const requested: number[] = [];
    const flow = makeFlow(async (epsilonPlus) => {
      requested.push(epsilonPlus);
      return session;
    });
    flow.begin();
    flow.choose(advice.suggested_spend as number);
    flow.confirmDialog();
    const state = await flow.confirm();
    expect(state.kind).toBe("done");
    expect(requested).toEqual([advice.suggested_spend]);
  });

  it("below the necessary minimum warns but still allows the spend", async () => {
    const minimum = advice.advice.epsilon_plus_min as number;
    const below = minimum / 2;
    const requested: number[] = [];
    const flow = makeFlow(async (epsilonPlus) => {
      requested.push(epsilonPlus);
      return session;
    });
    flow.begin();
    flow.choose(below);
    expect(flow.state.kind).toBe("choosing");
    expect(flow.state.kind === "choosing" && flow.state.warning).toContain(
      "below the necessary minimum",
    );
    const dialog = flow.confirmDialog();
    expect(dialog).toContain('data-warning="below-minimum"');
    expect(dialog).toContain("necessary, not sufficient");
    const state = await flow.confirm();
    expect(state.kind).toBe("done");
    expect(requested).toEqual([below]);
  });

  it("confirmation shows remaining budget before and after", () => {
    const flow = makeFlow();
    flow.begin();
    flow.choose(0.25);
    const dialog = flow.confirmDialog();
    const before = session.budget.remaining as number;
    expect(dialog).toContain(`Remaining before: ${before}`);
    expect(dialog).toContain(`Remaining after: ${before - 0.25}`);
    expect(dialog).toMatchSnapshot();
  });

  it("service budget refusal surfaces as an exhausted banner state", async () => {
    const flow = makeFlow(async () => {
      throw new ApiError(409, {
        code: "budget_exhausted",
        message: "privacy budget exhausted: requested 0.5, remaining 0.1",
        remaining_budget: 0.1,
      });
    });
    flow.begin();
    flow.choose(0.5);
    flow.confirmDialog();
    const state = await flow.confirm();
    expect(state.kind).toBe("exhausted");
    expect(state.kind === "exhausted" && state.remaining).toBe(0.1);
  });

  it("exhausted budget disables the control", () => {
    const spent: SessionView = {
      ...session,
      budget: { spent: 2.0, cap: 2.0, remaining: 0.0 },
    };
    const flow = makeFlow(undefined, spent);
    expect(flow.enabled).toBe(false);
    expect(flow.renderControl()).toContain("disabled");
    expect(flow.renderControl()).toContain("remaining budget 0");
    flow.begin();
    expect(flow.state.kind).toBe("exhausted");
  });

  it("other errors propagate", async () => {
    const flow = makeFlow(async () => {
      throw new ApiError(500, { code: "boom", message: "server error" });
    });
    flow.begin();
    flow.choose(0.1);
    flow.confirmDialog();
    await expect(flow.confirm()).rejects.toThrow("boom");
  });
});

describe("advice view model", () => {
  it("maps advisor fields verbatim", () => {
    const vm = buildAdviceViewModel(advice);
    expect(vm.minimumText).toBe(String(advice.advice.epsilon_plus_min));
    expect(vm.suggestedText).toBe(String(advice.suggested_spend));
    expect(vm.note).toBe("necessary minimum, not sufficient");
    expect(vm.curve.length).toBe(advice.escape_bound_curve.length);
    const bounds = vm.curve.map((point) => point.bound);
    expect([...bounds].sort((a, b) => a - b)).toEqual(bounds);
  });
});
