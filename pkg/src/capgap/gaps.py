"""Gap analysis: flag under-supported subgoals and distill their evidence."""

from __future__ import annotations

from dataclasses import dataclass
from .backends.base import EvaluatorBackend
from .coverage import CoverageMatrix, low_scoring
from .errors import PreconditionError, UndefinedMeanError
from .model import SCHEMA_VERSION, GapFinding, Subgoal

DEFAULT_MAX_EVIDENCE = 50
EVIDENCE_CHAR_LIMIT = 500


@dataclass(frozen=True)
class GapReport:
    """Findings for every subgoal whose mean alignment fell below tau.

    Subgoals with no ok records at all cannot be averaged; they are listed in
    ``unscorable_subgoal_ids`` instead of getting a finding.
    """

    matrix_id: str
    tau: float
    findings: tuple[GapFinding, ...]
    flagged_subgoal_ids: tuple[str, ...]
    unscorable_subgoal_ids: tuple[str, ...] = ()
    subgoals: tuple[Subgoal, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "findings", tuple(self.findings))
        object.__setattr__(self, "flagged_subgoal_ids", tuple(self.flagged_subgoal_ids))
        object.__setattr__(self, "unscorable_subgoal_ids", tuple(self.unscorable_subgoal_ids))
        object.__setattr__(self, "subgoals", tuple(self.subgoals))
        if {f.subgoal_id for f in self.findings} != set(self.flagged_subgoal_ids):
            raise PreconditionError("findings must cover exactly the flagged subgoals")

    def subgoal(self, subgoal_id: str) -> Subgoal:
        for s in self.subgoals:
            if s.id == subgoal_id:
                return s
        raise PreconditionError(f"subgoal {subgoal_id!r} not present in report")

    def label_for(self, subgoal_id: str) -> str:
        try:
            return self.subgoal(subgoal_id).label
        except PreconditionError:
            return subgoal_id

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "gap_report",
            "matrix_id": self.matrix_id,
            "tau": self.tau,
            "findings": [f.to_dict() for f in self.findings],
            "flagged_subgoal_ids": list(self.flagged_subgoal_ids),
            "unscorable_subgoal_ids": list(self.unscorable_subgoal_ids),
            "subgoals": [s.to_dict() for s in self.subgoals],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GapReport":
        return cls(
            matrix_id=data["matrix_id"],
            tau=data["tau"],
            findings=tuple(GapFinding.from_dict(f) for f in data["findings"]),
            flagged_subgoal_ids=tuple(data["flagged_subgoal_ids"]),
            unscorable_subgoal_ids=tuple(data.get("unscorable_subgoal_ids", ())),
            subgoals=tuple(Subgoal.from_dict(s) for s in data.get("subgoals", ())),
        )


def detect_gaps(
    matrix: CoverageMatrix,
    tau: float,
    backend: EvaluatorBackend,
    max_evidence: int = DEFAULT_MAX_EVIDENCE,
) -> GapReport:
    """Flag subgoals with mean alignment strictly below tau and analyze each.

    The analyzer sees the lowest-scoring explanations (ascending score,
    sample-id tiebreak), capped at ``max_evidence`` and truncated to
    EVIDENCE_CHAR_LIMIT characters each.
    """
    if max_evidence < 1:
        raise PreconditionError("max_evidence must be >= 1")

    flagged: list[str] = []
    unscorable: list[str] = []
    findings: list[GapFinding] = []
    for summary in matrix.summaries:
        if summary.mean_score is None:
            unscorable.append(summary.subgoal_id)
            continue
        if summary.mean_score >= tau:
            continue
        flagged.append(summary.subgoal_id)
        evidence = [
            explanation[:EVIDENCE_CHAR_LIMIT]
            for (_, _, explanation) in low_scoring(matrix, summary.subgoal_id, tau)[:max_evidence]
        ]
        subgoal = matrix.subgoal(summary.subgoal_id)
        finding = backend.analyze_gap(evidence, subgoal)
        if finding.evidence_count != len(evidence):
            finding = GapFinding(
                subgoal_id=finding.subgoal_id,
                issues=finding.issues,
                evidence_count=len(evidence),
                evidence_char_limit=EVIDENCE_CHAR_LIMIT,
            )
        findings.append(finding)

    return GapReport(
        matrix_id=matrix.id,
        tau=tau,
        findings=tuple(findings),
        flagged_subgoal_ids=tuple(flagged),
        unscorable_subgoal_ids=tuple(unscorable),
        subgoals=matrix.subgoals,
    )


def gap_severity(matrix: CoverageMatrix, subgoal_id: str, tau: float) -> float:
    """(tau - mean) / tau clamped to [0, 1]; 0 for unflagged subgoals."""
    summary = matrix.summary(subgoal_id)
    if summary.mean_score is None:
        raise UndefinedMeanError(f"no ok records for subgoal {subgoal_id!r}")
    if summary.mean_score >= tau:
        return 0.0
    return min(1.0, max(0.0, (tau - summary.mean_score) / tau))
