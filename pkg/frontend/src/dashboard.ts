/** Coverage dashboard: one bar per subgoal with the tau marker and flags.
 *
 * The client performs no scoring arithmetic: every displayed number is a
 * server report field rendered verbatim. The only client-side computation is
 * re-deriving the below-tau flags when the slider moves.
 */

import type { CoverageSummary, MatrixSummaryDoc } from "./types.js";

export interface BarModel {
  subgoalId: string;
  label: string;
  /** Exact server value; null when the subgoal had no ok records. */
  mean: number | null;
  /** Verbatim string form of the server value (what the user sees). */
  displayMean: string;
  widthPct: number;
  flagged: boolean;
  unscorable: boolean;
  nLow: number;
  nFailed: number;
}

export interface DashboardModel {
  tau: number;
  aggregateMean: number | null;
  displayAggregate: string;
  bars: BarModel[];
  flaggedSubgoalIds: string[];
}

/** Flag recomputation from server-provided per-subgoal means only. */
export function flagsForTau(summaries: CoverageSummary[], tau: number): string[] {
  return summaries
    .filter((s) => s.mean_score !== null && s.mean_score < tau)
    .map((s) => s.subgoal_id);
}

export function dashboardModel(report: MatrixSummaryDoc, tau: number): DashboardModel {
  const labels = new Map(report.subgoals.map((s) => [s.id, s.label]));
  const flagged = flagsForTau(report.summaries, tau);
  const flaggedSet = new Set(flagged);
  const bars = report.summaries.map((summary) => {
    const mean = summary.mean_score;
    return {
      subgoalId: summary.subgoal_id,
      label: labels.get(summary.subgoal_id) ?? summary.subgoal_id,
      mean,
      displayMean: mean === null ? "unscorable" : String(mean),
      widthPct: mean === null ? 0 : mean * 100,
      flagged: flaggedSet.has(summary.subgoal_id),
      unscorable: mean === null,
      nLow: summary.n_low,
      nFailed: summary.n_failed,
    };
  });
  return {
    tau,
    aggregateMean: report.aggregate_mean_score,
    displayAggregate:
      report.aggregate_mean_score === null ? "unscorable" : String(report.aggregate_mean_score),
    bars,
    flaggedSubgoalIds: flagged,
  };
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderDashboard(model: DashboardModel): string {
  const rows = model.bars
    .map((bar) => {
      const flagClass = bar.flagged ? " flagged" : "";
      const badge = bar.flagged
        ? '<span class="badge gap">below τ</span>'
        : bar.unscorable
          ? '<span class="badge unscorable">unscorable</span>'
          : "";
      return `
      <div class="bar-row${flagClass}" data-subgoal="${escapeHtml(bar.subgoalId)}">
        <span class="bar-label">${escapeHtml(bar.label)}</span>
        <div class="bar-track">
          <div class="bar-fill" style="width:${bar.widthPct}%"></div>
          <div class="tau-marker" style="left:${model.tau * 100}%"></div>
        </div>
        <span class="bar-value" data-value="${bar.mean ?? ""}">${escapeHtml(bar.displayMean)}</span>
        ${badge}
      </div>`;
    })
    .join("\n");
  return `
  <section class="dashboard">
    <header>
      <h2>Coverage by subgoal</h2>
      <p class="aggregate">Aggregate mean:
        <strong data-role="aggregate">${escapeHtml(model.displayAggregate)}</strong>
        · τ = <span data-role="tau">${model.tau}</span>
        · ${model.flaggedSubgoalIds.length} flagged</p>
    </header>
    ${rows}
  </section>`;
}
