/** Wire types mirroring the server's JSON schemas, field for field. */

export interface Goal {
  id: string;
  statement: string;
  domain_label: string;
  task_type: string;
}

export interface ClarifyingExchange {
  round: number;
  questions: string[];
  responses: string[];
}

export interface Subgoal {
  id: string;
  label: string;
  description: string;
  rubric_hint: string;
}

export interface SubgoalSet {
  goal_id: string;
  subgoals: Subgoal[];
  provenance: string;
}

export type SessionState =
  | "created"
  | "awaiting_responses"
  | "refining"
  | "decomposed"
  | "abandoned";

export interface Session {
  id: string;
  goal: Goal;
  state: SessionState;
  exchanges: ClarifyingExchange[];
  max_rounds: number;
  result: SubgoalSet | null;
  version: number;
  transitions: string[];
}

export interface CoverageSummary {
  subgoal_id: string;
  mean_score: number | null;
  n_scored: number;
  n_failed: number;
  n_low: number;
}

export interface MatrixSummaryDoc {
  schema_version: number;
  kind: "coverage_matrix";
  id: string;
  dataset_id: string;
  subgoal_set_id: string;
  subgoals: Subgoal[];
  threshold_tau: number;
  evaluator_id: string;
  n_records: number;
  records_file: string;
  aggregate_mean_score: number | null;
  summaries: CoverageSummary[];
}

export interface GapFinding {
  subgoal_id: string;
  issues: string[];
  evidence_count: number;
  evidence_char_limit: number;
}

export interface GapReportDoc {
  id?: string;
  schema_version: number;
  kind: "gap_report";
  matrix_id: string;
  tau: number;
  findings: GapFinding[];
  flagged_subgoal_ids: string[];
  unscorable_subgoal_ids: string[];
  subgoals: Subgoal[];
}

export interface SynthesisPlan {
  target_count: number;
  accept_threshold: number;
  max_iterations: number;
}

export interface Recommendation {
  subgoal_id: string;
  remediation?: string[];
  synthesis_plan?: SynthesisPlan | null;
  error?: string;
}

export type JobState = "queued" | "running" | "done" | "failed" | "partial";

export interface JobHandle {
  id: string;
  kind: string;
  state: JobState;
  progress: number;
  completed: number;
  total: number;
  result_ref: string | null;
  error: string | null;
}

export interface ExperimentRow {
  subgoal_id: string;
  original_mean: number | null;
  after_mean: number | null;
  delta_abs: number | null;
  delta_rel_pct: number | null;
  is_target: boolean;
}

export interface ExperimentReportDoc {
  schema_version: number;
  kind: "experiment_report";
  pattern_name: string;
  retention_pct: number;
  rows: ExperimentRow[];
  emptied: boolean;
}
