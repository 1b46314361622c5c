"""HTTP service exposing sessions, assessments, gaps, synthesis, and experiments."""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional

from fastapi import Depends, FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from . import clarify
from .backends.base import EvaluatorBackend
from .corruption import load_builtin_patterns, run_experiment
from .coverage import assess, load_matrix, save_matrix
from .errors import (
    CapgapError,
    PartialResultError,
    PreconditionError,
    StateError,
    VersionConflictError,
)
from .gaps import GapReport, detect_gaps
from .model import (
    Dataset,
    Goal,
    RemovalPattern,
    Sample,
    Subgoal,
    SubgoalSet,
    canonical_json,
    content_hash,
)
from .reports import write_report
from .storage import DocumentStore, FieldMapping, ScoreCache, load_dataset
from .synthesis import SynthesisConfig, synthesize


class JobHandle:
    """Mutable job tracker; serialized snapshots go over the wire."""

    def __init__(self, job_id: str, kind: str) -> None:
        self.id = job_id
        self.kind = kind
        self.state = "queued"
        self.progress = 0.0
        self.completed = 0
        self.total = 0
        self.result_ref: Optional[str] = None
        self.error: Optional[str] = None
        self._lock = threading.Lock()

    def update(self, **fields: Any) -> None:
        with self._lock:
            if "progress" in fields:
                # progress never moves backwards
                fields["progress"] = max(self.progress, fields["progress"])
            for name, value in fields.items():
                setattr(self, name, value)

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "id": self.id,
                "kind": self.kind,
                "state": self.state,
                "progress": self.progress,
                "completed": self.completed,
                "total": self.total,
                "result_ref": self.result_ref,
                "error": self.error,
            }


class Workspace:
    """Disk layout and shared state behind the service."""

    def __init__(self, data_dir: str | Path) -> None:
        self.root = Path(data_dir)
        self.sessions = DocumentStore(self.root / "sessions")
        self.datasets_dir = self.root / "datasets"
        self.datasets_dir.mkdir(parents=True, exist_ok=True)
        self.reports_dir = self.root / "reports"
        self.reports_dir.mkdir(parents=True, exist_ok=True)
        self.jobs_store = DocumentStore(self.root / "jobs")
        self.gap_reports = DocumentStore(self.root / "gaps")
        self.cache = ScoreCache(self.root / "cache")
        self.jobs: dict[str, JobHandle] = {}
        self.idempotency: dict[str, str] = {}
        self.executor = ThreadPoolExecutor(max_workers=4)
        self._lock = threading.Lock()
        self._counter = 0

    def next_id(self, prefix: str) -> str:
        with self._lock:
            self._counter += 1
            return f"{prefix}-{self._counter:06d}"

    def save_dataset(self, dataset: Dataset) -> None:
        path = self.datasets_dir / f"{dataset.id}.json"
        path.write_text(canonical_json(dataset.to_dict()), encoding="utf-8")

    def get_dataset(self, dataset_id: str) -> Dataset:
        path = self.datasets_dir / f"{dataset_id}.json"
        if not path.exists():
            raise HTTPException(404, f"no dataset {dataset_id!r}")
        import json

        return Dataset.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def persist_job(self, job: JobHandle) -> None:
        self.jobs_store.save(job.id, job.to_dict())

    def submit_job(self, job: JobHandle, work) -> None:
        self.jobs[job.id] = job
        self.persist_job(job)

        def runner() -> None:
            job.update(state="running")
            self.persist_job(job)
            try:
                work(job)
                job.update(state="done", progress=1.0)
            except PartialResultError as exc:
                job.update(state="partial", error=str(exc))
            except Exception as exc:  # noqa: BLE001 - job boundary
                job.update(state="failed", error=str(exc))
            self.persist_job(job)

        self.executor.submit(runner)


# -- request bodies -----------------------------------------------------------


class GoalBody(BaseModel):
    id: str = ""
    statement: str
    domain_label: str = ""
    task_type: str = ""


class CreateSessionBody(BaseModel):
    goal: GoalBody
    max_rounds: int = 3


class ResponsesBody(BaseModel):
    version: int
    responses: list[str]


class VersionBody(BaseModel):
    version: int


class MappingBody(BaseModel):
    input_field: str
    output_field: str
    id_field: Optional[str] = None


class SampleBody(BaseModel):
    id: str = ""
    input: str
    output: str = ""
    tags: list[str] = Field(default_factory=list)


class CreateDatasetBody(BaseModel):
    id: str = ""
    source: str = ""
    samples: Optional[list[SampleBody]] = None
    path: Optional[str] = None
    mapping: Optional[MappingBody] = None
    limit: Optional[int] = None


class SubgoalBody(BaseModel):
    id: str
    label: str
    description: str
    rubric_hint: str = ""


class SubgoalSetBody(BaseModel):
    goal_id: str = ""
    subgoals: list[SubgoalBody]
    provenance: str = "manual"


class CreateAssessmentBody(BaseModel):
    dataset_id: str
    subgoal_set: Optional[SubgoalSetBody] = None
    session_id: Optional[str] = None
    tau: float = 0.4
    concurrency: int = 8
    idempotency_key: Optional[str] = None


class GapsBody(BaseModel):
    assessment_id: str
    tau: Optional[float] = None
    max_evidence: int = 50


class RecommendationsBody(BaseModel):
    gaps_id: str


class SynthesisBody(BaseModel):
    gaps_id: str
    subgoal_id: str
    target_count: int = 8
    accept_threshold: float = 0.8
    max_iterations: int = 5
    batch_size: int = 8
    idempotency_key: Optional[str] = None


class PatternBody(BaseModel):
    name: str
    terms: list[str]
    target_subgoal_id: str
    match_scope: str = "both"


class CorruptionBody(BaseModel):
    dataset_id: str
    subgoal_set: Optional[SubgoalSetBody] = None
    session_id: Optional[str] = None
    pattern: Optional[PatternBody] = None
    pattern_name: Optional[str] = None
    tau: float = 0.4
    idempotency_key: Optional[str] = None


# -- app factory --------------------------------------------------------------


def create_app(
    data_dir: str | Path,
    backend: EvaluatorBackend,
    api_token: Optional[str] = None,
    static_dir: Optional[str | Path] = None,
) -> FastAPI:
    """Build the service around one workspace and one evaluator backend.

    Without a token (argument or CAPGAP_API_TOKEN) all mutating routes are
    disabled; with one, mutating requests must present it as a bearer token.
    """
    workspace = Workspace(data_dir)
    token = api_token if api_token is not None else os.environ.get("CAPGAP_API_TOKEN")
    app = FastAPI(title="capgap", version="0.1.0")
    app.state.workspace = workspace
    app.state.backend = backend

    def require_auth(request: Request) -> None:
        if token is None:
            raise HTTPException(403, "mutating routes are disabled: no API token configured")
        provided = request.headers.get("Authorization", "")
        if provided != f"Bearer {token}":
            raise HTTPException(401, "missing or invalid bearer token")

    @app.exception_handler(CapgapError)
    def handle_capgap_error(request: Request, exc: CapgapError) -> JSONResponse:
        status = 400
        if isinstance(exc, VersionConflictError):
            status = 409
        elif isinstance(exc, StateError):
            status = 409
        return JSONResponse({"detail": str(exc)}, status_code=status)

    # -- sessions -------------------------------------------------------------

    def load_session(session_id: str) -> clarify.ClarificationSession:
        doc = workspace.sessions.load(session_id)
        if doc is None:
            raise HTTPException(404, f"no session {session_id!r}")
        return clarify.ClarificationSession.from_dict(doc)

    def store_session(
        session: clarify.ClarificationSession, expected_version: Optional[int]
    ) -> None:
        workspace.sessions.save(session.id, session.to_dict(), expected_version)

    @app.post("/sessions", status_code=201, dependencies=[Depends(require_auth)])
    def create_session(body: CreateSessionBody) -> dict:
        goal = Goal(
            id=body.goal.id,
            statement=body.goal.statement,
            domain_label=body.goal.domain_label,
            task_type=body.goal.task_type,
        )
        session = clarify.start_session(
            goal, backend, max_rounds=body.max_rounds,
            session_id=workspace.next_id("session"),
        )
        store_session(session, None)
        return session.to_dict()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        return load_session(session_id).to_dict()

    @app.post("/sessions/{session_id}/responses", dependencies=[Depends(require_auth)])
    def post_responses(session_id: str, body: ResponsesBody) -> dict:
        session = load_session(session_id)
        if session.version != body.version:
            raise VersionConflictError(
                f"session is at version {session.version}, request carried {body.version}"
            )
        updated = clarify.submit_responses(session, body.responses, backend)
        store_session(updated, session.version)
        return updated.to_dict()

    @app.post("/sessions/{session_id}/finalize", dependencies=[Depends(require_auth)])
    def post_finalize(session_id: str, body: VersionBody) -> dict:
        session = load_session(session_id)
        if session.version != body.version:
            raise VersionConflictError(
                f"session is at version {session.version}, request carried {body.version}"
            )
        updated = clarify.force_finalize(session, backend)
        store_session(updated, session.version)
        return updated.to_dict()

    @app.post("/sessions/{session_id}/abandon", dependencies=[Depends(require_auth)])
    def post_abandon(session_id: str, body: VersionBody) -> dict:
        session = load_session(session_id)
        if session.version != body.version:
            raise VersionConflictError(
                f"session is at version {session.version}, request carried {body.version}"
            )
        updated = clarify.abandon_session(session)
        if updated is not session:
            store_session(updated, session.version)
        return updated.to_dict()

    # -- datasets -------------------------------------------------------------

    @app.post("/datasets", status_code=201, dependencies=[Depends(require_auth)])
    def create_dataset(body: CreateDatasetBody) -> dict:
        if body.samples is not None:
            samples = tuple(
                Sample(id=s.id, input=s.input, output=s.output, tags=frozenset(s.tags))
                for s in body.samples
            )
            dataset = Dataset(
                id=body.id or workspace.next_id("dataset"),
                samples=samples,
                source=body.source or "inline upload",
            )
        elif body.path is not None and body.mapping is not None:
            mapping = FieldMapping(
                input_field=body.mapping.input_field,
                output_field=body.mapping.output_field,
                id_field=body.mapping.id_field,
            )
            dataset = load_dataset(
                body.path, mapping, limit=body.limit,
                dataset_id=body.id or workspace.next_id("dataset"),
            )
        else:
            raise HTTPException(422, "provide either samples or path+mapping")
        workspace.save_dataset(dataset)
        return {"id": dataset.id, "n_samples": len(dataset)}

    # -- helpers ----------------------------------------------------------------

    def resolve_subgoals(
        subgoal_set: Optional[SubgoalSetBody], session_id: Optional[str]
    ) -> SubgoalSet:
        if subgoal_set is not None:
            return SubgoalSet(
                goal_id=subgoal_set.goal_id,
                subgoals=tuple(
                    Subgoal(
                        id=s.id, label=s.label,
                        description=s.description, rubric_hint=s.rubric_hint,
                    )
                    for s in subgoal_set.subgoals
                ),
                provenance=subgoal_set.provenance,
            )
        if session_id is not None:
            session = load_session(session_id)
            if session.result is None:
                raise HTTPException(409, f"session {session_id!r} is not decomposed")
            return session.result
        raise HTTPException(422, "provide either subgoal_set or session_id")

    def job_or_404(job_id: str) -> dict:
        job = workspace.jobs.get(job_id)
        if job is not None:
            return job.to_dict()
        doc = workspace.jobs_store.load(job_id)
        if doc is None:
            raise HTTPException(404, f"no job {job_id!r}")
        return doc

    def reuse_idempotent(key: Optional[str], kind: str) -> Optional[dict]:
        if key is None:
            return None
        existing = workspace.idempotency.get(f"{kind}:{key}")
        if existing is None:
            return None
        return job_or_404(existing)

    def register_idempotent(key: Optional[str], kind: str, job_id: str) -> None:
        if key is not None:
            workspace.idempotency[f"{kind}:{key}"] = job_id

    # -- assessments ------------------------------------------------------------

    @app.post("/assessments", status_code=202, dependencies=[Depends(require_auth)])
    def create_assessment(body: CreateAssessmentBody) -> dict:
        existing = reuse_idempotent(body.idempotency_key, "assessment")
        if existing is not None:
            return existing
        dataset = workspace.get_dataset(body.dataset_id)
        subgoals = resolve_subgoals(body.subgoal_set, body.session_id)
        job = JobHandle(workspace.next_id("assessment"), "assessment")
        register_idempotent(body.idempotency_key, "assessment", job.id)

        def work(handle: JobHandle) -> None:
            def progress(done: int, total: int) -> None:
                handle.update(
                    progress=done / total if total else 1.0, completed=done, total=total
                )

            matrix = assess(
                dataset, subgoals, backend,
                tau=body.tau, concurrency_limit=body.concurrency,
                cache=workspace.cache, progress=progress,
            )
            prefix = workspace.reports_dir / handle.id
            summary_path, _ = save_matrix(matrix, prefix)
            handle.update(result_ref=f"/assessments/{handle.id}/report")

        workspace.submit_job(job, work)
        return job.to_dict()

    @app.get("/assessments/{job_id}")
    def get_assessment(job_id: str) -> dict:
        return job_or_404(job_id)

    @app.get("/assessments/{job_id}/report")
    def get_assessment_report(job_id: str) -> dict:
        summary = workspace.reports_dir / f"{job_id}.summary.json"
        if not summary.exists():
            raise HTTPException(404, f"no report for job {job_id!r}")
        import json

        return json.loads(summary.read_text(encoding="utf-8"))

    # -- gaps and recommendations -------------------------------------------------

    @app.post("/gaps", dependencies=[Depends(require_auth)])
    def post_gaps(body: GapsBody) -> dict:
        summary = workspace.reports_dir / f"{body.assessment_id}.summary.json"
        if not summary.exists():
            raise HTTPException(404, f"no assessment report {body.assessment_id!r}")
        matrix = load_matrix(summary)
        tau = body.tau if body.tau is not None else matrix.threshold_tau
        report = detect_gaps(matrix, tau, backend, max_evidence=body.max_evidence)
        gaps_id = content_hash(body.assessment_id, repr(tau), str(body.max_evidence))
        doc = {"id": gaps_id, **report.to_dict()}
        workspace.gap_reports.save(gaps_id, doc)
        return doc

    @app.post("/recommendations", dependencies=[Depends(require_auth)])
    def post_recommendations(body: RecommendationsBody) -> dict:
        doc = workspace.gap_reports.load(body.gaps_id)
        if doc is None:
            raise HTTPException(404, f"no gap report {body.gaps_id!r}")
        report = GapReport.from_dict(doc)
        from .synthesis import recommend_for_gaps

        results = recommend_for_gaps(report, backend)
        return {
            "gaps_id": body.gaps_id,
            "recommendations": [r.to_dict() for r in results],
        }

    # -- synthesis ------------------------------------------------------------------

    @app.post("/synthesis", status_code=202, dependencies=[Depends(require_auth)])
    def post_synthesis(body: SynthesisBody) -> dict:
        existing = reuse_idempotent(body.idempotency_key, "synthesis")
        if existing is not None:
            return existing
        doc = workspace.gap_reports.load(body.gaps_id)
        if doc is None:
            raise HTTPException(404, f"no gap report {body.gaps_id!r}")
        report = GapReport.from_dict(doc)
        subgoal = report.subgoal(body.subgoal_id)
        finding = next(
            (f for f in report.findings if f.subgoal_id == body.subgoal_id), None
        )
        config = SynthesisConfig(
            target_count=body.target_count,
            accept_threshold=body.accept_threshold,
            max_iterations=body.max_iterations,
            batch_size=body.batch_size,
        )
        job = JobHandle(workspace.next_id("synthesis"), "synthesis")
        register_idempotent(body.idempotency_key, "synthesis", job.id)

        def work(handle: JobHandle) -> None:
            run = synthesize(subgoal, finding, backend, backend, config)
            path = workspace.reports_dir / f"{handle.id}.synthesis.json"
            write_report(run, "json", path)
            handle.update(
                result_ref=f"/synthesis/{handle.id}",
                completed=len(run.accepted),
                total=run.target_count,
            )

        workspace.submit_job(job, work)
        return job.to_dict()

    @app.get("/synthesis/{job_id}")
    def get_synthesis(job_id: str) -> dict:
        handle = job_or_404(job_id)
        path = workspace.reports_dir / f"{job_id}.synthesis.json"
        if path.exists():
            import json

            handle = {**handle, "result": json.loads(path.read_text(encoding="utf-8"))}
        return handle

    # -- corruption experiments --------------------------------------------------------

    @app.post("/experiments/corruption", status_code=202, dependencies=[Depends(require_auth)])
    def post_corruption(body: CorruptionBody) -> dict:
        existing = reuse_idempotent(body.idempotency_key, "experiment")
        if existing is not None:
            return existing
        dataset = workspace.get_dataset(body.dataset_id)
        subgoals = resolve_subgoals(body.subgoal_set, body.session_id)
        if body.pattern is not None:
            pattern = RemovalPattern(
                name=body.pattern.name,
                terms=frozenset(body.pattern.terms),
                target_subgoal_id=body.pattern.target_subgoal_id,
                match_scope=body.pattern.match_scope,
            )
        elif body.pattern_name is not None:
            builtin = {p.name: p for p in load_builtin_patterns()}
            if body.pattern_name not in builtin:
                raise HTTPException(404, f"no builtin pattern {body.pattern_name!r}")
            pattern = builtin[body.pattern_name]
        else:
            raise HTTPException(422, "provide either pattern or pattern_name")
        job = JobHandle(workspace.next_id("experiment"), "experiment")
        register_idempotent(body.idempotency_key, "experiment", job.id)

        def work(handle: JobHandle) -> None:
            report = run_experiment(
                dataset, subgoals, pattern, backend,
                tau=body.tau, cache=workspace.cache,
            )
            path = workspace.reports_dir / f"{handle.id}.experiment.json"
            write_report(report, "json", path)
            handle.update(result_ref=f"/experiments/{handle.id}/report")

        workspace.submit_job(job, work)
        return job.to_dict()

    @app.get("/experiments/{job_id}")
    def get_experiment(job_id: str) -> dict:
        return job_or_404(job_id)

    @app.get("/experiments/{job_id}/report")
    def get_experiment_report(job_id: str) -> dict:
        path = workspace.reports_dir / f"{job_id}.experiment.json"
        if not path.exists():
            raise HTTPException(404, f"no report for job {job_id!r}")
        import json

        return json.loads(path.read_text(encoding="utf-8"))

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "backend": backend.id}

    if static_dir is not None and Path(static_dir).exists():
        app.mount("/ui", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
