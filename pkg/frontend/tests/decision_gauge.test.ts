import { describe, expect, it } from "vitest";

import { renderDecisionGauge } from "../src/charts.js";
import { buildSessionViewModel } from "../src/viewmodel.js";
import type { SessionView } from "../src/types.js";

import abstainFixture from "./fixtures/recorded-abstain.json";
import notRejectFixture from "./fixtures/recorded-notreject.json";

const abstain = abstainFixture.session as unknown as SessionView;
const notReject = notRejectFixture.session as unknown as SessionView;

function withPsi(session: SessionView, psi: number): SessionView {
  return {
    ...session,
    psi,
    decision: { ...session.decision, psi },
  };
}

describe("decision gauge", () => {
  it("published abstention case: needle inside the band, abstain badge", () => {
    // evidence value from the published trial analysis at budget 0.1
    const session = withPsi(abstain, 0.1031);
    const html = renderDecisionGauge(session);
    expect(html).toContain('data-outcome="abstain"');
    expect(html).toContain(">Abstain</span>");
    // needle at 0.1031 on the 20..400 pixel track lies inside the shaded
    // band spanning (0.025, 0.975)
    const needleX = 20 + 0.1031 * 380;
    const bandLow = 20 + 0.025 * 380;
    const bandHigh = 20 + 0.975 * 380;
    expect(html).toContain(`x1="${needleX.toFixed(2)}"`);
    expect(needleX).toBeGreaterThan(bandLow);
    expect(needleX).toBeLessThan(bandHigh);
    expect(html).toContain('class="abstention-band"');
    expect(html).toMatchSnapshot();
  });

  it("recorded abstain payload renders its own evidence verbatim", () => {
    const html = renderDecisionGauge(abstain);
    expect(html).toContain(String(abstain.decision.psi));
    expect(html).toContain('data-outcome="abstain"');
  });

  it("high evidence renders the reject badge", () => {
    const session = withPsi(abstain, 0.99);
    const html = renderDecisionGauge({
      ...session,
      decision: { ...session.decision, outcome: "reject" },
    });
    expect(html).toContain('data-outcome="reject"');
    expect(html).toContain(">Reject</span>");
  });

  it("recorded not-reject payload shows its badge", () => {
    const html = renderDecisionGauge(notReject);
    expect(html).toContain('data-outcome="not_reject"');
    expect(html).toContain(">Do not reject</span>");
  });

  it("degenerate band renders the binary badge only", () => {
    const session = {
      ...notReject,
      decision: {
        ...notReject.decision,
        region: { t_low: 0.5, t_high: 0.5, degenerate: true },
      },
    } as SessionView;
    const html = renderDecisionGauge(session);
    expect(html).not.toContain('class="abstention-band"');
    expect(html).toContain("(binary rule)");
  });
});

describe("view-model traceability", () => {
  it("every displayed statistic equals a service payload field verbatim", () => {
    const vm = buildSessionViewModel(abstain);
    expect(vm.psiText).toBe(String(abstain.psi));
    expect(vm.bandLow).toBe(abstain.decision.region.t_low);
    expect(vm.bandHigh).toBe(abstain.decision.region.t_high);
    expect(vm.summaries.mean).toBe(String(abstain.posterior.summaries.mean));
    expect(vm.summaries.median).toBe(String(abstain.posterior.summaries.median));
    expect(vm.summaries.map).toBe(String(abstain.posterior.summaries.map));
    expect(vm.credible.low).toBe(
      String(abstain.posterior.credible.equal_tailed.low),
    );
    expect(vm.budget.spent).toBe(String(abstain.budget.spent));
    expect(vm.releases[0].n11Tilde).toBe(String(abstain.releases[0].n11_tilde));
    expect(vm.advisorAvailable).toBe(true);
    expect(vm).toMatchSnapshot();
  });
});
