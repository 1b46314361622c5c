"""Coverage assessment: score every (sample, subgoal) pair and aggregate.

Evaluations run with a bounded number in flight; results are collected by a
single writer, and the finished matrix is immutable. Pairs already present in
the score cache are never re-sent, which is both the resume path and the
warm-cache fast path.
"""

from __future__ import annotations

import json
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

from .backends.base import EvaluatorBackend
from .errors import (
    PartialResultError,
    PreconditionError,
    ResponseFormatError,
    TransportError,
    UndefinedMeanError,
)
from .model import (
    SCHEMA_VERSION,
    AlignmentRecord,
    CoverageSummary,
    Dataset,
    RecordStatus,
    Sample,
    Subgoal,
    SubgoalSet,
    canonical_json,
    content_hash,
    validate_subgoal_set,
)
from .storage import ScoreCache, ScoreCacheKey


@dataclass(frozen=True)
class CoverageMatrix:
    """All alignment records for one dataset against one subgoal set."""

    dataset_id: str
    subgoal_set_id: str
    subgoals: tuple[Subgoal, ...]
    records: dict[tuple[str, str], AlignmentRecord]
    summaries: tuple[CoverageSummary, ...]
    threshold_tau: float
    evaluator_id: str

    @property
    def id(self) -> str:
        return content_hash(
            self.dataset_id, self.subgoal_set_id, self.evaluator_id, repr(self.threshold_tau)
        )

    def subgoal(self, subgoal_id: str) -> Subgoal:
        for s in self.subgoals:
            if s.id == subgoal_id:
                return s
        raise PreconditionError(f"subgoal {subgoal_id!r} not covered by this matrix")

    def summary(self, subgoal_id: str) -> CoverageSummary:
        for s in self.summaries:
            if s.subgoal_id == subgoal_id:
                return s
        raise PreconditionError(f"subgoal {subgoal_id!r} not covered by this matrix")

    def records_for(self, subgoal_id: str) -> list[AlignmentRecord]:
        return [r for (_, sid), r in sorted(self.records.items()) if sid == subgoal_id]

    def ok_records_for(self, subgoal_id: str) -> list[AlignmentRecord]:
        return [r for r in self.records_for(subgoal_id) if r.ok]

    def sorted_records(self) -> list[AlignmentRecord]:
        return [self.records[key] for key in sorted(self.records)]

    def transport_failures(self) -> int:
        return sum(1 for r in self.records.values() if r.failure_kind == "transport")

    @property
    def aggregate_mean_score(self) -> Optional[float]:
        """Unweighted mean of the defined per-subgoal means (the headline
        number that can look fine while single subgoals are starved)."""
        defined = [s.mean_score for s in self.summaries if s.mean_score is not None]
        return sum(defined) / len(defined) if defined else None


def _summarize(
    subgoal_id: str, records: Sequence[AlignmentRecord], tau: float
) -> CoverageSummary:
    ok_scores = [r.score for r in records if r.ok]
    n_failed = sum(1 for r in records if not r.ok)
    mean = sum(ok_scores) / len(ok_scores) if ok_scores else None
    n_low = sum(1 for s in ok_scores if s < tau)
    return CoverageSummary(
        subgoal_id=subgoal_id,
        mean_score=mean,
        n_scored=len(ok_scores),
        n_failed=n_failed,
        n_low=n_low,
    )


def _score_pair(
    backend: EvaluatorBackend, sample: Sample, subgoal: Subgoal
) -> AlignmentRecord:
    try:
        record = backend.score_alignment(sample, subgoal)
    except TransportError as exc:
        return AlignmentRecord(
            sample_id=sample.id,
            subgoal_id=subgoal.id,
            score=None,
            explanation=f"transport failure: {exc}",
            evaluator_id=backend.id,
            status=RecordStatus.FAILED,
            failure_kind="transport",
        )
    except ResponseFormatError as exc:
        return AlignmentRecord(
            sample_id=sample.id,
            subgoal_id=subgoal.id,
            score=None,
            explanation=f"unusable response: {exc}",
            evaluator_id=backend.id,
            status=RecordStatus.FAILED,
            failure_kind="format",
        )
    if record.sample_id != sample.id or record.subgoal_id != subgoal.id:
        raise PreconditionError("backend returned a record for the wrong pair")
    return record


def assess(
    dataset: Dataset,
    subgoals: SubgoalSet,
    backend: EvaluatorBackend,
    tau: float = 0.4,
    concurrency_limit: int = 8,
    cache: Optional[ScoreCache] = None,
    progress: Optional[Callable[[int, int], None]] = None,
) -> CoverageMatrix:
    """Score all N x k pairs and compute per-subgoal summaries.

    Raises PartialResultError carrying the matrix when any pair ended in a
    transport-level failure: those pairs are not cached, so re-running with
    the same cache resumes exactly where the backend dropped out.
    """
    if len(dataset) < 1:
        raise PreconditionError("dataset is empty")
    violations = validate_subgoal_set(subgoals)
    if violations:
        raise PreconditionError(
            "invalid subgoal set: " + "; ".join(v.message for v in violations)
        )
    if not 0.0 < tau < 1.0:
        raise PreconditionError("tau must lie strictly between 0 and 1")
    if concurrency_limit < 1:
        raise PreconditionError("concurrency_limit must be >= 1")

    total = len(dataset) * len(subgoals.subgoals)
    completed = 0
    records: dict[tuple[str, str], AlignmentRecord] = {}
    to_evaluate: list[tuple[Sample, Subgoal, ScoreCacheKey | None]] = []

    for sample in dataset.samples:
        for subgoal in subgoals.subgoals:
            key = None
            if cache is not None:
                key = ScoreCacheKey.for_pair(sample, subgoal.id, backend.id)
                hit = cache.get(key)
                if hit is not None:
                    if hit.sample_id != sample.id:
                        # content-keyed cache: rebind to this dataset's sample id
                        hit = AlignmentRecord.from_dict(
                            {**hit.to_dict(), "sample_id": sample.id}
                        )
                    records[(sample.id, subgoal.id)] = hit
                    completed += 1
                    if progress is not None:
                        progress(completed, total)
                    continue
            to_evaluate.append((sample, subgoal, key))

    if to_evaluate:
        with ThreadPoolExecutor(max_workers=concurrency_limit) as pool:
            pending = {}
            work = iter(to_evaluate)
            # keep at most concurrency_limit evaluations in flight
            for item in to_evaluate[: concurrency_limit * 2]:
                sample, subgoal, key = item
                pending[pool.submit(_score_pair, backend, sample, subgoal)] = item
            submitted = len(pending)
            while pending:
                done, _ = wait(list(pending), return_when=FIRST_COMPLETED)
                for future in done:
                    sample, subgoal, key = pending.pop(future)
                    record = future.result()
                    records[(sample.id, subgoal.id)] = record
                    if cache is not None and key is not None:
                        cache.put(key, record)
                    completed += 1
                    if progress is not None:
                        progress(completed, total)
                while submitted < len(to_evaluate) and len(pending) < concurrency_limit * 2:
                    item = to_evaluate[submitted]
                    submitted += 1
                    sample, subgoal, key = item
                    pending[pool.submit(_score_pair, backend, sample, subgoal)] = item

    summaries = []
    for subgoal in subgoals.subgoals:
        subgoal_records = [records[(s.id, subgoal.id)] for s in dataset.samples]
        summaries.append(_summarize(subgoal.id, subgoal_records, tau))

    matrix = CoverageMatrix(
        dataset_id=dataset.id,
        subgoal_set_id=subgoals.id,
        subgoals=subgoals.subgoals,
        records=records,
        summaries=tuple(summaries),
        threshold_tau=tau,
        evaluator_id=backend.id,
    )
    transport_failures = matrix.transport_failures()
    if transport_failures:
        raise PartialResultError(
            f"{transport_failures} of {total} evaluations failed at transport level",
            matrix,
        )
    return matrix


def mean_alignment(matrix: CoverageMatrix, subgoal_id: str) -> float:
    """Arithmetic mean over ok records only."""
    summary = matrix.summary(subgoal_id)
    if summary.mean_score is None:
        raise UndefinedMeanError(f"no ok records for subgoal {subgoal_id!r}")
    return summary.mean_score


def low_scoring(
    matrix: CoverageMatrix, subgoal_id: str, tau: float
) -> list[tuple[str, float, str]]:
    """The ok records strictly below tau, ascending by (score, sample_id)."""
    matrix.subgoal(subgoal_id)
    rows = [
        (r.sample_id, r.score, r.explanation)
        for r in matrix.ok_records_for(subgoal_id)
        if r.score < tau
    ]
    rows.sort(key=lambda row: (row[1], row[0]))
    return rows


# ---------------------------------------------------------------------------
# Persistence: a JSONL record stream plus a JSON summary document
# ---------------------------------------------------------------------------


def save_matrix(matrix: CoverageMatrix, prefix: str | Path) -> tuple[Path, Path]:
    """Write ``<prefix>.summary.json`` and ``<prefix>.records.jsonl``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    records_path = prefix.with_name(prefix.name + ".records.jsonl")
    summary_path = prefix.with_name(prefix.name + ".summary.json")
    with records_path.open("w", encoding="utf-8") as handle:
        for record in matrix.sorted_records():
            handle.write(canonical_json(record.to_dict(), indent=None) + "\n")
    summary_doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "coverage_matrix",
        "id": matrix.id,
        "dataset_id": matrix.dataset_id,
        "subgoal_set_id": matrix.subgoal_set_id,
        "subgoals": [s.to_dict() for s in matrix.subgoals],
        "threshold_tau": matrix.threshold_tau,
        "evaluator_id": matrix.evaluator_id,
        "n_records": len(matrix.records),
        "records_file": records_path.name,
        "aggregate_mean_score": matrix.aggregate_mean_score,
        "summaries": [s.to_dict() for s in matrix.summaries],
    }
    summary_path.write_text(canonical_json(summary_doc), encoding="utf-8")
    return summary_path, records_path


def load_matrix(summary_path: str | Path) -> CoverageMatrix:
    summary_path = Path(summary_path)
    doc = json.loads(summary_path.read_text(encoding="utf-8"))
    records_path = summary_path.parent / doc["records_file"]
    records: dict[tuple[str, str], AlignmentRecord] = {}
    with records_path.open("r", encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = AlignmentRecord.from_dict(json.loads(line))
            records[(record.sample_id, record.subgoal_id)] = record
    return CoverageMatrix(
        dataset_id=doc["dataset_id"],
        subgoal_set_id=doc["subgoal_set_id"],
        subgoals=tuple(Subgoal.from_dict(s) for s in doc["subgoals"]),
        records=records,
        summaries=tuple(CoverageSummary.from_dict(s) for s in doc["summaries"]),
        threshold_tau=doc["threshold_tau"],
        evaluator_id=doc["evaluator_id"],
    )
