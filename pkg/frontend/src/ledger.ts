/** Budget-ledger panel. */

import { escapeHtml } from "./charts.js";
import type { LedgerView } from "./types.js";

export function renderLedgerPanel(ledger: LedgerView): string {
  const rows = ledger.entries
    .map(
      (entry) =>
        "<tr>" +
        `<td>${escapeHtml(entry.timestamp)}</td>` +
        `<td>${escapeHtml(entry.mechanism)}</td>` +
        `<td>${escapeHtml(String(entry.epsilon))}</td>` +
        "</tr>",
    )
    .join("\n");
  const remaining =
    ledger.remaining === null ? "unlimited" : String(ledger.remaining);
  const cap = ledger.cap === null ? "none" : String(ledger.cap);
  return [
    '<section class="ledger-panel">',
    `<header>spent ${escapeHtml(String(ledger.spent))} / cap ${escapeHtml(cap)}` +
      ` (remaining ${escapeHtml(remaining)})</header>`,
    "<table>",
    "<thead><tr><th>time</th><th>mechanism</th><th>budget</th></tr></thead>",
    `<tbody>\n${rows}\n</tbody>`,
    "</table>",
    "</section>",
  ].join("\n");
}
