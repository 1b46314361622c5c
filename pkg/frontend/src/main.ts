/** SPA wiring: wizard -> assessment -> dashboard -> gap panel, all polled. */

import { ApiClient } from "./api.js";
import { dashboardModel, renderDashboard } from "./dashboard.js";
import { gapPanelModel, jobRow, renderGapPanel } from "./gaps.js";
import { pollJob } from "./poll.js";
import { ViewState } from "./state.js";
import type { GapReportDoc, MatrixSummaryDoc, Recommendation } from "./types.js";
import { WizardController, renderWizard } from "./wizard.js";

const POLL_INTERVAL_MS = 1000;

const state = new ViewState();
const api = new ApiClient("", localStorage.getItem("capgap_token"));
const wizard = new WizardController(api);

let matrixReport: MatrixSummaryDoc | null = null;
let gapReport: (GapReportDoc & { id?: string }) | null = null;
let recommendations: Recommendation[] = [];
let jobs: ReturnType<typeof jobRow>[] = [];

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function paintWizard(): void {
  el("wizard-root").innerHTML = renderWizard(wizard.view);
  bindWizard();
}

function paintDashboard(): void {
  if (!matrixReport) return;
  el("dashboard-root").innerHTML = renderDashboard(dashboardModel(matrixReport, state.tau));
}

function paintGaps(): void {
  if (!gapReport) return;
  el("gaps-root").innerHTML = renderGapPanel(gapPanelModel(gapReport, recommendations), jobs);
  bindGapButtons();
}

function bindWizard(): void {
  const root = el("wizard-root");
  root.querySelector<HTMLFormElement>('[data-role="goal-form"]')?.addEventListener("submit", async (event) => {
    event.preventDefault();
    const data = new FormData(event.target as HTMLFormElement);
    await wizard.create({
      statement: String(data.get("statement") ?? ""),
      domain_label: String(data.get("domain_label") ?? ""),
      task_type: String(data.get("task_type") ?? ""),
    });
    paintWizard();
  });
  root.querySelectorAll<HTMLInputElement>('[data-role="answer"]').forEach((input) => {
    input.addEventListener("input", () => {
      wizard.setDraft(Number(input.dataset.index), input.value);
    });
  });
  root.querySelector<HTMLFormElement>('[data-role="answers-form"]')?.addEventListener("submit", async (event) => {
    event.preventDefault();
    await wizard.submit();
    paintWizard();
  });
  root.querySelector('[data-role="finalize"]')?.addEventListener("click", async () => {
    await wizard.forceFinalize();
    paintWizard();
  });
  root.querySelector('[data-role="reload"]')?.addEventListener("click", async () => {
    await wizard.reload();
    paintWizard();
  });
  root.querySelector('[data-role="retry"]')?.addEventListener("click", async () => {
    await wizard.submit();
    paintWizard();
  });
  root.querySelector('[data-role="accept"]')?.addEventListener("click", () => {
    wizard.accept();
    paintWizard();
  });
}

function bindGapButtons(): void {
  el("gaps-root").querySelectorAll<HTMLButtonElement>('[data-role="launch-synthesis"]').forEach((button) => {
    button.addEventListener("click", async () => {
      if (!gapReport?.id) return;
      const handle = await api.startSynthesis(gapReport.id, button.dataset.subgoal ?? "");
      trackJob(handle.id, () => api.getSynthesis(handle.id));
    });
  });
}

function trackJob(jobId: string, fetchHandle: () => Promise<any>): void {
  const { promise, stop } = pollJob(fetchHandle, {
    intervalMs: POLL_INTERVAL_MS,
    onUpdate: (handle) => {
      jobs = [...jobs.filter((j) => j.jobId !== jobId), jobRow(handle, handle.completed || null)];
      paintGaps();
    },
  });
  state.registerPoller(jobId, { stop });
  void promise.finally(() => state.releasePoller(jobId));
}

function bindTauSlider(): void {
  const slider = el("tau-slider") as HTMLInputElement;
  slider.addEventListener("input", () => {
    state.setTau(Number(slider.value));
    // re-flagging uses server-provided means only; evidence membership needs
    // a server recompute, triggered by the refresh button instead
    paintDashboard();
  });
  el("refresh-gaps").addEventListener("click", async () => {
    if (!matrixReport) return;
    const assessmentId = el("dashboard-root").dataset.assessmentId;
    if (!assessmentId) return;
    gapReport = await api.detectGaps(assessmentId, state.tau);
    recommendations = gapReport.id
      ? (await api.recommendations(gapReport.id)).recommendations
      : [];
    paintGaps();
  });
}

export async function runAssessmentFlow(datasetId: string): Promise<void> {
  const view = wizard.view;
  if (view.kind !== "review") throw new Error("finish the wizard first");
  const subgoalSet = {
    goal_id: state.activeSessionId ?? "",
    subgoals: view.subgoals,
    provenance: "elicited",
  };
  const handle = await api.createAssessment(datasetId, subgoalSet, state.tau);
  el("dashboard-root").dataset.assessmentId = handle.id;
  trackJob(handle.id, () => api.getAssessment(handle.id));
  const done = await api.getAssessment(handle.id);
  if (done.state === "done") {
    matrixReport = await api.getAssessmentReport(handle.id);
    state.activeMatrixId = matrixReport.id;
    paintDashboard();
  }
}

if (typeof document !== "undefined" && document.getElementById("wizard-root")) {
  paintWizard();
  bindTauSlider();
}
