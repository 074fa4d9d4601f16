/** SVG renderers for the discrete p-value posterior and the decision gauge.
 *
 * The posterior is drawn as stems, never a smoothed density: the
 * distribution genuinely lives on discrete points.  Stem positions are
 * aggregated into pixel columns purely for drawing; every number shown in
 * text comes from the payload verbatim.
 */

import type { PosteriorView, SessionView } from "./types.js";

const WIDTH = 640;
const HEIGHT = 280;
const MARGIN = { top: 16, right: 16, bottom: 34, left: 52 };
const MAX_STEMS = 160;

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

interface Stem {
  p: number;
  mass: number;
}

/** Visual aggregation of the served series into at most maxStems columns. */
export function stemColumns(posterior: PosteriorView, maxStems = MAX_STEMS): Stem[] {
  const { support, masses } = posterior;
  if (support.length <= maxStems) {
    return support.map((p, i) => ({ p, mass: masses[i] }));
  }
  const lo = support[0];
  const hi = support[support.length - 1];
  const step = (hi - lo) / maxStems || 1;
  const columns = new Map<number, Stem>();
  for (let i = 0; i < support.length; i++) {
    const bin = Math.min(maxStems - 1, Math.floor((support[i] - lo) / step));
    const existing = columns.get(bin);
    if (existing) {
      existing.mass += masses[i];
    } else {
      columns.set(bin, { p: lo + (bin + 0.5) * step, mass: masses[i] });
    }
  }
  return Array.from(columns.values()).sort((a, b) => a.p - b.p);
}

export interface PosteriorChartOptions {
  alpha?: number;
  /** Non-private reference line; demo mode only, never for live data. */
  referenceP?: number;
  title?: string;
}

export function renderPosteriorChart(
  session: SessionView,
  options: PosteriorChartOptions = {},
): string {
  const posterior = session.posterior;
  if (posterior.support.length === 0) {
    return '<div class="empty-state">No posterior series to display.</div>';
  }
  const stems = stemColumns(posterior);
  const maxMass = Math.max(...stems.map((s) => s.mass));
  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const x = (p: number) => MARGIN.left + p * plotW;
  const y = (mass: number) => MARGIN.top + plotH * (1 - mass / maxMass);

  const et = posterior.credible.equal_tailed;
  const parts: string[] = [];
  parts.push(
    `<svg class="posterior-chart" viewBox="0 0 ${WIDTH} ${HEIGHT}" role="img">`,
  );
  // credible-interval shading behind the stems
  parts.push(
    `<rect class="credible-band" x="${x(et.low).toFixed(2)}" y="${MARGIN.top}" ` +
      `width="${(x(et.high) - x(et.low)).toFixed(2)}" height="${plotH}"></rect>`,
  );
  for (const stem of stems) {
    parts.push(
      `<line class="stem" x1="${x(stem.p).toFixed(2)}" x2="${x(stem.p).toFixed(2)}" ` +
        `y1="${y(0).toFixed(2)}" y2="${y(stem.mass).toFixed(2)}"></line>`,
    );
  }
  if (options.alpha !== undefined) {
    parts.push(
      `<line class="alpha-marker" x1="${x(options.alpha).toFixed(2)}" ` +
        `x2="${x(options.alpha).toFixed(2)}" y1="${MARGIN.top}" ` +
        `y2="${MARGIN.top + plotH}" stroke-dasharray="2 3"></line>`,
    );
  }
  if (options.referenceP !== undefined) {
    parts.push(
      `<line class="reference-line" x1="${x(options.referenceP).toFixed(2)}" ` +
        `x2="${x(options.referenceP).toFixed(2)}" y1="${MARGIN.top}" ` +
        `y2="${MARGIN.top + plotH}" stroke-dasharray="6 3"></line>`,
    );
  }
  // axes
  parts.push(
    `<line class="axis" x1="${MARGIN.left}" x2="${WIDTH - MARGIN.right}" ` +
      `y1="${MARGIN.top + plotH}" y2="${MARGIN.top + plotH}"></line>`,
  );
  for (const tick of [0, 0.25, 0.5, 0.75, 1]) {
    parts.push(
      `<text class="tick" x="${x(tick).toFixed(2)}" y="${HEIGHT - 12}" ` +
        `text-anchor="middle">${tick}</text>`,
    );
  }
  parts.push(
    `<text class="axis-label" x="${MARGIN.left + plotW / 2}" y="${HEIGHT - 1}" ` +
      `text-anchor="middle">exact p-value</text>`,
  );
  if (options.title) {
    parts.push(
      `<text class="title" x="${MARGIN.left}" y="12">${escapeHtml(options.title)}</text>`,
    );
  }
  parts.push("</svg>");
  return parts.join("\n");
}

export function renderDecisionGauge(session: SessionView): string {
  const decision = session.decision;
  const region = decision.region;
  const width = 420;
  const barY = 34;
  const barH = 18;
  const x = (v: number) => 20 + v * (width - 40);
  const badgeClass = `badge badge-${decision.outcome}`;
  const labels = {
    reject: "Reject",
    not_reject: "Do not reject",
    abstain: "Abstain",
  } as const;
  const parts: string[] = [];
  parts.push('<div class="decision-panel">');
  parts.push(
    `<span class="${badgeClass}" data-outcome="${decision.outcome}">` +
      `${labels[decision.outcome]}</span>`,
  );
  parts.push(
    `<svg class="decision-gauge" viewBox="0 0 ${width} 72" role="img">`,
  );
  parts.push(
    `<rect class="gauge-track" x="${x(0)}" y="${barY}" width="${x(1) - x(0)}" ` +
      `height="${barH}"></rect>`,
  );
  if (!region.degenerate) {
    parts.push(
      `<rect class="abstention-band" x="${x(region.t_low).toFixed(2)}" y="${barY}" ` +
        `width="${(x(region.t_high) - x(region.t_low)).toFixed(2)}" ` +
        `height="${barH}"></rect>`,
    );
  }
  parts.push(
    `<line class="needle" x1="${x(decision.psi).toFixed(2)}" ` +
      `x2="${x(decision.psi).toFixed(2)}" y1="${barY - 8}" ` +
      `y2="${barY + barH + 8}"></line>`,
  );
  parts.push("</svg>");
  parts.push(
    `<div class="evidence-caption">Evidence ${escapeHtml(String(decision.psi))}` +
      (region.degenerate
        ? " (binary rule)"
        : ` against band (${escapeHtml(String(region.t_low))}, ` +
          `${escapeHtml(String(region.t_high))})`) +
      "</div>",
  );
  parts.push("</div>");
  return parts.join("\n");
}

export function renderSummaryPanel(session: SessionView): string {
  const s = session.posterior.summaries;
  const et = session.posterior.credible.equal_tailed;
  const rows = [
    ["posterior mean", String(s.mean)],
    ["posterior median", String(s.median)],
    ["posterior mode", String(s.map)],
    [
      `credible set (level ${String(et.level)})`,
      `[${String(et.low)}, ${String(et.high)}] mass ${String(et.attained_mass)}`,
    ],
    ["evidence Pr(p ≤ α)", String(session.psi)],
  ];
  const cells = rows
    .map(
      ([k, v]) =>
        `<tr><th>${escapeHtml(k)}</th><td>${escapeHtml(v)}</td></tr>`,
    )
    .join("\n");
  return `<table class="summary-panel">\n${cells}\n</table>`;
}
