/** Thin typed client over the service routes. Fetch is injectable for tests. */

import type {
  GapReportDoc,
  JobHandle,
  MatrixSummaryDoc,
  Recommendation,
  Session,
  SubgoalSet,
} from "./types.js";

export type Fetcher = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

export class NetworkError extends Error {}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private token: string | null = null,
    private fetchImpl: Fetcher = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkError(String(err));
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = await response.json();
        detail = typeof parsed.detail === "string" ? parsed.detail : JSON.stringify(parsed.detail);
      } catch {
        /* keep statusText */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  createSession(goal: { statement: string; domain_label?: string; task_type?: string }, maxRounds = 3): Promise<Session> {
    return this.request("POST", "/sessions", { goal, max_rounds: maxRounds });
  }

  getSession(id: string): Promise<Session> {
    return this.request("GET", `/sessions/${id}`);
  }

  submitResponses(id: string, version: number, responses: string[]): Promise<Session> {
    return this.request("POST", `/sessions/${id}/responses`, { version, responses });
  }

  finalizeSession(id: string, version: number): Promise<Session> {
    return this.request("POST", `/sessions/${id}/finalize`, { version });
  }

  abandonSession(id: string, version: number): Promise<Session> {
    return this.request("POST", `/sessions/${id}/abandon`, { version });
  }

  createAssessment(datasetId: string, subgoalSet: SubgoalSet, tau = 0.4): Promise<JobHandle> {
    return this.request("POST", "/assessments", {
      dataset_id: datasetId,
      subgoal_set: subgoalSet,
      tau,
    });
  }

  getAssessment(jobId: string): Promise<JobHandle> {
    return this.request("GET", `/assessments/${jobId}`);
  }

  getAssessmentReport(jobId: string): Promise<MatrixSummaryDoc> {
    return this.request("GET", `/assessments/${jobId}/report`);
  }

  detectGaps(assessmentId: string, tau?: number): Promise<GapReportDoc> {
    return this.request("POST", "/gaps", { assessment_id: assessmentId, tau });
  }

  recommendations(gapsId: string): Promise<{ gaps_id: string; recommendations: Recommendation[] }> {
    return this.request("POST", "/recommendations", { gaps_id: gapsId });
  }

  startSynthesis(gapsId: string, subgoalId: string, targetCount = 8): Promise<JobHandle> {
    return this.request("POST", "/synthesis", {
      gaps_id: gapsId,
      subgoal_id: subgoalId,
      target_count: targetCount,
    });
  }

  getSynthesis(jobId: string): Promise<JobHandle & { result?: { accepted: unknown[] } }> {
    return this.request("GET", `/synthesis/${jobId}`);
  }

  getExperimentReport(jobId: string): Promise<unknown> {
    return this.request("GET", `/experiments/${jobId}/report`);
  }

  health(): Promise<{ status: string; backend: string }> {
    return this.request("GET", "/health");
  }
}
