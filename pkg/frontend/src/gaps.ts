/** Gap drill-down panel and corruption-experiment comparison. */

import type {
  ExperimentReportDoc,
  GapReportDoc,
  JobHandle,
  Recommendation,
} from "./types.js";

export interface GapPanelEntry {
  subgoalId: string;
  label: string;
  issues: string[];
  evidenceCount: number;
  fixes: string[];
  recommendationError: string | null;
  synthesisAvailable: boolean;
}

export interface JobRow {
  jobId: string;
  kind: string;
  state: string;
  progress: number;
  acceptedCount: number | null;
}

export function gapPanelModel(
  report: GapReportDoc,
  recommendations: Recommendation[] = [],
): GapPanelEntry[] {
  const labels = new Map(report.subgoals.map((s) => [s.id, s.label]));
  const bySubgoal = new Map(recommendations.map((r) => [r.subgoal_id, r]));
  return report.findings.map((finding) => {
    const recommendation = bySubgoal.get(finding.subgoal_id);
    return {
      subgoalId: finding.subgoal_id,
      label: labels.get(finding.subgoal_id) ?? finding.subgoal_id,
      issues: finding.issues,
      evidenceCount: finding.evidence_count,
      fixes: recommendation?.remediation ?? [],
      recommendationError: recommendation?.error ?? null,
      synthesisAvailable: Boolean(recommendation?.synthesis_plan),
    };
  });
}

export function jobRow(handle: JobHandle, acceptedCount: number | null = null): JobRow {
  return {
    jobId: handle.id,
    kind: handle.kind,
    state: handle.state,
    progress: handle.progress,
    acceptedCount,
  };
}

function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export function renderGapPanel(entries: GapPanelEntry[], jobs: JobRow[] = []): string {
  if (entries.length === 0) {
    return `<section class="gaps"><p>No subgoal fell below the threshold.</p></section>`;
  }
  const boxes = entries
    .map((entry) => {
      const issues = entry.issues.map((i) => `<li>Issue: ${escapeHtml(i)}</li>`).join("");
      const fixes = entry.fixes.map((f) => `<li>Fix: ${escapeHtml(f)}</li>`).join("");
      const recError = entry.recommendationError
        ? `<p class="rec-error">recommendation unavailable: ${escapeHtml(entry.recommendationError)}</p>`
        : "";
      return `
      <article class="gap-box" data-subgoal="${escapeHtml(entry.subgoalId)}">
        <h3>${escapeHtml(entry.label)}</h3>
        <ul class="issues">${issues}</ul>
        <ul class="fixes">${fixes}</ul>
        ${recError}
        <p class="evidence">${entry.evidenceCount} low-score explanation(s)</p>
        <button data-role="launch-synthesis" data-subgoal="${escapeHtml(entry.subgoalId)}"
          ${entry.synthesisAvailable ? "" : "disabled"}>Synthesize samples</button>
        <button data-role="launch-filter" data-subgoal="${escapeHtml(entry.subgoalId)}">Filter dataset</button>
      </article>`;
    })
    .join("\n");
  const jobRows = jobs
    .map(
      (job) => `
      <tr data-job="${escapeHtml(job.jobId)}">
        <td>${escapeHtml(job.kind)}</td>
        <td data-role="state">${escapeHtml(job.state)}</td>
        <td data-role="progress">${Math.round(job.progress * 100)}%</td>
        <td>${job.acceptedCount === null ? "" : `${job.acceptedCount} accepted`}</td>
      </tr>`,
    )
    .join("\n");
  const jobsTable = jobs.length
    ? `<table class="jobs"><thead><tr><th>Job</th><th>State</th><th>Progress</th><th></th></tr></thead>
       <tbody>${jobRows}</tbody></table>`
    : "";
  return `<section class="gaps">${boxes}${jobsTable}</section>`;
}

// -- experiment comparison ----------------------------------------------------

export interface ComparisonCell {
  /** verbatim string of the server value, or "unscorable" */
  display: string;
  value: number | null;
  isTarget: boolean;
}

export interface ComparisonRowModel {
  subgoalId: string;
  cells: ComparisonCell[]; // one per experiment, delta_rel_pct
}

export interface ComparisonModel {
  patternNames: string[];
  rows: ComparisonRowModel[];
}

/** Side-by-side relative-change table across experiments; values verbatim. */
export function comparisonModel(reports: ExperimentReportDoc[]): ComparisonModel {
  const subgoalIds: string[] = [];
  for (const report of reports) {
    for (const row of report.rows) {
      if (!subgoalIds.includes(row.subgoal_id)) subgoalIds.push(row.subgoal_id);
    }
  }
  const rows = subgoalIds.map((sid) => ({
    subgoalId: sid,
    cells: reports.map((report) => {
      const row = report.rows.find((r) => r.subgoal_id === sid);
      const value = row?.delta_rel_pct ?? null;
      return {
        display: value === null ? "unscorable" : String(value),
        value,
        isTarget: row?.is_target ?? false,
      };
    }),
  }));
  return { patternNames: reports.map((r) => r.pattern_name), rows };
}

export function renderComparison(model: ComparisonModel): string {
  const header = model.patternNames.map((n) => `<th>${escapeHtml(n)}</th>`).join("");
  const body = model.rows
    .map((row) => {
      const cells = row.cells
        .map(
          (cell) =>
            `<td data-value="${cell.value ?? ""}"${cell.isTarget ? ' class="target"' : ""}>${escapeHtml(cell.display)}</td>`,
        )
        .join("");
      return `<tr data-subgoal="${escapeHtml(row.subgoalId)}"><td>${escapeHtml(row.subgoalId)}</td>${cells}</tr>`;
    })
    .join("\n");
  return `<table class="comparison">
    <thead><tr><th>Subgoal (Δ_rel %)</th>${header}</tr></thead>
    <tbody>${body}</tbody>
  </table>`;
}
