"""Domain types shared across the pipeline, with structural validation and canonical JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from fractions import Fraction
from typing import Any, Optional

SCHEMA_VERSION = 1

#: The six admissible alignment scores. Snapped values are always drawn from
#: this tuple, so float equality against its members is safe.
ANCHORS: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)

_ANCHOR_FRACTIONS = tuple(Fraction(i, 5) for i in range(6))


class ModelError(ValueError):
    """Invariant violation raised at construction time."""


def snap_to_anchor(value: float | Fraction) -> float:
    """Snap a value in [0, 1] to the nearest anchor, ties rounding up.

    Comparison happens on the exact decimal literal of the value (0.7 is
    treated as the true midpoint of 0.6 and 0.8, not as its binary float
    neighbour), so tie-up behaves the way the rubric reads on paper.
    """
    if isinstance(value, Fraction):
        exact = value
    else:
        exact = Fraction(Decimal(repr(float(value))))
    if exact < 0 or exact > 1:
        raise ModelError(f"score {value!r} outside [0, 1]")
    best = _ANCHOR_FRACTIONS[0]
    best_dist = abs(exact - best)
    for anchor in _ANCHOR_FRACTIONS[1:]:
        dist = abs(exact - anchor)
        # ties resolve upward: a later (larger) anchor wins on equality
        if dist <= best_dist:
            best = anchor
            best_dist = dist
    return float(ANCHORS[int(best * 5)])


def content_hash(*parts: str) -> str:
    """Stable 16-hex-digit digest over the given text parts."""
    joined = "\x1f".join(parts)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


def canonical_json(payload: Any, indent: int | None = 2) -> str:
    """Serialize with a stable field order; identical values give identical bytes."""
    return json.dumps(payload, ensure_ascii=False, indent=indent, allow_nan=False)


# ---------------------------------------------------------------------------
# Core value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Goal:
    """A practitioner's high-level fine-tuning objective."""

    id: str
    statement: str
    domain_label: str = ""
    task_type: str = ""

    def __post_init__(self) -> None:
        if not self.statement.strip():
            raise ModelError("goal statement must be non-empty")
        if not self.id:
            object.__setattr__(self, "id", content_hash(self.statement))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "statement": self.statement,
            "domain_label": self.domain_label,
            "task_type": self.task_type,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Goal":
        return cls(
            id=data["id"],
            statement=data["statement"],
            domain_label=data.get("domain_label", ""),
            task_type=data.get("task_type", ""),
        )


@dataclass(frozen=True)
class ClarifyingExchange:
    """One round of clarifying questions and the practitioner's answers."""

    round: int
    questions: tuple[str, ...]
    responses: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "questions", tuple(self.questions))
        object.__setattr__(self, "responses", tuple(self.responses))
        if self.round < 1:
            raise ModelError("round numbers start at 1")
        if len(self.responses) > len(self.questions):
            raise ModelError("more responses than questions")

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "questions": list(self.questions),
            "responses": list(self.responses),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClarifyingExchange":
        return cls(
            round=data["round"],
            questions=tuple(data["questions"]),
            responses=tuple(data.get("responses", ())),
        )


@dataclass(frozen=True)
class Subgoal:
    """An atomic, independently evaluable capability."""

    id: str
    label: str
    description: str
    rubric_hint: str = ""

    def __post_init__(self) -> None:
        if not self.label.strip():
            raise ModelError("subgoal label must be non-empty")
        if not self.description.strip():
            raise ModelError("subgoal description must be non-empty")
        if not self.id:
            object.__setattr__(self, "id", content_hash(self.label, self.description))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "label": self.label,
            "description": self.description,
            "rubric_hint": self.rubric_hint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Subgoal":
        return cls(
            id=data["id"],
            label=data["label"],
            description=data["description"],
            rubric_hint=data.get("rubric_hint", ""),
        )


class Provenance(str, Enum):
    ELICITED = "elicited"
    MANUAL = "manual"
    FIXTURE = "fixture"


@dataclass(frozen=True)
class SubgoalSet:
    """An ordered decomposition of one goal into subgoals.

    Construction is deliberately permissive: structural problems (duplicate
    ids, identical descriptions, emptiness) are reported by
    :func:`validate_subgoal_set` as data, not raised, so that backend output
    can be inspected before it is accepted.
    """

    goal_id: str
    subgoals: tuple[Subgoal, ...]
    provenance: Provenance = Provenance.MANUAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "subgoals", tuple(self.subgoals))
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def id(self) -> str:
        return content_hash(self.goal_id, *(s.id for s in self.subgoals))

    def subgoal_ids(self) -> list[str]:
        return [s.id for s in self.subgoals]

    def get(self, subgoal_id: str) -> Subgoal:
        for s in self.subgoals:
            if s.id == subgoal_id:
                return s
        raise KeyError(subgoal_id)

    def to_dict(self) -> dict:
        return {
            "goal_id": self.goal_id,
            "subgoals": [s.to_dict() for s in self.subgoals],
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SubgoalSet":
        return cls(
            goal_id=data["goal_id"],
            subgoals=tuple(Subgoal.from_dict(s) for s in data["subgoals"]),
            provenance=Provenance(data.get("provenance", "manual")),
        )


@dataclass(frozen=True)
class Violation:
    """One structural problem found in a SubgoalSet."""

    code: str
    message: str
    subgoal_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "message": self.message,
            "subgoal_ids": list(self.subgoal_ids),
        }


def validate_subgoal_set(subgoal_set: SubgoalSet) -> list[Violation]:
    """Check set-level invariants; an empty list means the set is valid."""
    violations: list[Violation] = []
    if not subgoal_set.subgoals:
        violations.append(Violation("empty_set", "decomposition has no subgoals"))
        return violations

    by_id: dict[str, list[str]] = {}
    for s in subgoal_set.subgoals:
        by_id.setdefault(s.id, []).append(s.id)
    for sid, hits in by_id.items():
        if len(hits) > 1:
            violations.append(
                Violation("duplicate_id", f"subgoal id {sid!r} appears {len(hits)} times", (sid,))
            )

    by_description: dict[str, list[str]] = {}
    for s in subgoal_set.subgoals:
        by_description.setdefault(s.description, []).append(s.id)
    for description, ids in by_description.items():
        if len(ids) > 1:
            violations.append(
                Violation(
                    "duplicate_description",
                    f"subgoals {ids} share a byte-identical description",
                    tuple(ids),
                )
            )
    return violations


@dataclass(frozen=True)
class Sample:
    """One training pair; ``tags`` are bookkeeping labels only."""

    id: str
    input: str
    output: str
    tags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "tags", frozenset(self.tags))
        if not self.input:
            raise ModelError("sample input must be non-empty")
        if not self.id:
            object.__setattr__(self, "id", content_hash(self.input, self.output))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "input": self.input,
            "output": self.output,
            "tags": sorted(self.tags),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Sample":
        return cls(
            id=data.get("id", ""),
            input=data["input"],
            output=data.get("output", ""),
            tags=frozenset(data.get("tags", ())),
        )


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of samples with unique ids."""

    id: str
    samples: tuple[Sample, ...]
    source: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        seen: set[str] = set()
        for sample in self.samples:
            if sample.id in seen:
                raise ModelError(f"duplicate sample id {sample.id!r}")
            seen.add(sample.id)
        if not self.id:
            object.__setattr__(self, "id", content_hash(*(s.id for s in self.samples)))

    def __len__(self) -> int:
        return len(self.samples)

    def sample_ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "samples": [s.to_dict() for s in self.samples],
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dataset":
        return cls(
            id=data.get("id", ""),
            samples=tuple(Sample.from_dict(s) for s in data["samples"]),
            source=data.get("source", ""),
        )


class RecordStatus(str, Enum):
    OK = "ok"
    FAILED = "failed"


@dataclass(frozen=True)
class AlignmentRecord:
    """One (sample, subgoal) evaluation.

    For failed records ``score`` is absent, ``explanation`` carries the
    failure reason, and ``failure_kind`` says whether the failure was
    transport-level (retryable) or a terminal format problem.
    """

    sample_id: str
    subgoal_id: str
    score: Optional[float]
    explanation: str
    evaluator_id: str
    status: RecordStatus = RecordStatus.OK
    failure_kind: Optional[str] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "status", RecordStatus(self.status))
        if self.status is RecordStatus.OK:
            if self.score is None or self.score not in ANCHORS:
                raise ModelError(f"ok record score {self.score!r} is not an anchor")
            if not self.explanation:
                raise ModelError("ok record requires a non-empty explanation")
            if self.failure_kind is not None:
                raise ModelError("ok record must not carry a failure kind")
        else:
            if self.score is not None:
                raise ModelError("failed record must not carry a score")
            if self.failure_kind not in ("transport", "format"):
                raise ModelError(f"unknown failure kind {self.failure_kind!r}")

    @property
    def ok(self) -> bool:
        return self.status is RecordStatus.OK

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "subgoal_id": self.subgoal_id,
            "score": self.score,
            "explanation": self.explanation,
            "evaluator_id": self.evaluator_id,
            "status": self.status.value,
            "failure_kind": self.failure_kind,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AlignmentRecord":
        return cls(
            sample_id=data["sample_id"],
            subgoal_id=data["subgoal_id"],
            score=data.get("score"),
            explanation=data.get("explanation", ""),
            evaluator_id=data.get("evaluator_id", ""),
            status=RecordStatus(data.get("status", "ok")),
            failure_kind=data.get("failure_kind"),
        )


@dataclass(frozen=True)
class CoverageSummary:
    """Per-subgoal aggregate over ok records; mean is None when nothing scored."""

    subgoal_id: str
    mean_score: Optional[float]
    n_scored: int
    n_failed: int
    n_low: int

    def __post_init__(self) -> None:
        if self.n_low > self.n_scored:
            raise ModelError("n_low cannot exceed n_scored")
        if (self.mean_score is None) != (self.n_scored == 0):
            raise ModelError("mean_score must be present exactly when records were scored")

    def to_dict(self) -> dict:
        return {
            "subgoal_id": self.subgoal_id,
            "mean_score": self.mean_score,
            "n_scored": self.n_scored,
            "n_failed": self.n_failed,
            "n_low": self.n_low,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CoverageSummary":
        return cls(
            subgoal_id=data["subgoal_id"],
            mean_score=data["mean_score"],
            n_scored=data["n_scored"],
            n_failed=data["n_failed"],
            n_low=data["n_low"],
        )


@dataclass(frozen=True)
class GapFinding:
    """Recurring deficiencies distilled from low-score explanations."""

    subgoal_id: str
    issues: tuple[str, ...]
    evidence_count: int
    evidence_char_limit: int = 500

    def __post_init__(self) -> None:
        object.__setattr__(self, "issues", tuple(self.issues))
        if self.evidence_count < 1:
            raise ModelError("a finding needs at least one piece of evidence")

    def to_dict(self) -> dict:
        return {
            "subgoal_id": self.subgoal_id,
            "issues": list(self.issues),
            "evidence_count": self.evidence_count,
            "evidence_char_limit": self.evidence_char_limit,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GapFinding":
        return cls(
            subgoal_id=data["subgoal_id"],
            issues=tuple(data["issues"]),
            evidence_count=data["evidence_count"],
            evidence_char_limit=data.get("evidence_char_limit", 500),
        )


@dataclass(frozen=True)
class SynthesisPlan:
    """Structured augmentation request attached to a recommendation."""

    target_count: int
    accept_threshold: float
    max_iterations: int

    def __post_init__(self) -> None:
        if self.target_count < 1 or self.max_iterations < 1:
            raise ModelError("synthesis plan bounds must be >= 1")
        if self.accept_threshold not in ANCHORS:
            raise ModelError("accept_threshold must be an anchor value")

    def to_dict(self) -> dict:
        return {
            "target_count": self.target_count,
            "accept_threshold": self.accept_threshold,
            "max_iterations": self.max_iterations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthesisPlan":
        return cls(
            target_count=data["target_count"],
            accept_threshold=data["accept_threshold"],
            max_iterations=data["max_iterations"],
        )


@dataclass(frozen=True)
class Recommendation:
    """Remediation text plus an optional synthesis request for one subgoal."""

    subgoal_id: str
    remediation: tuple[str, ...]
    synthesis_plan: Optional[SynthesisPlan] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "remediation", tuple(self.remediation))
        if not self.remediation:
            raise ModelError("recommendation requires at least one remediation item")

    def to_dict(self) -> dict:
        return {
            "subgoal_id": self.subgoal_id,
            "remediation": list(self.remediation),
            "synthesis_plan": self.synthesis_plan.to_dict() if self.synthesis_plan else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Recommendation":
        plan = data.get("synthesis_plan")
        return cls(
            subgoal_id=data["subgoal_id"],
            remediation=tuple(data["remediation"]),
            synthesis_plan=SynthesisPlan.from_dict(plan) if plan else None,
        )


class MatchScope(str, Enum):
    INPUT = "input"
    OUTPUT = "output"
    BOTH = "both"


@dataclass(frozen=True)
class RemovalPattern:
    """Keyword pattern used to starve one subgoal of supporting samples."""

    name: str
    terms: frozenset[str]
    target_subgoal_id: str
    match_scope: MatchScope = MatchScope.BOTH

    def __post_init__(self) -> None:
        object.__setattr__(self, "match_scope", MatchScope(self.match_scope))
        normalized = frozenset(t.lower() for t in self.terms)
        if not normalized:
            raise ModelError("a removal pattern needs at least one term")
        if any(not t.strip() for t in normalized):
            raise ModelError("pattern terms must not be empty or whitespace")
        object.__setattr__(self, "terms", normalized)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "terms": sorted(self.terms),
            "target_subgoal_id": self.target_subgoal_id,
            "match_scope": self.match_scope.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RemovalPattern":
        return cls(
            name=data["name"],
            terms=frozenset(data["terms"]),
            target_subgoal_id=data["target_subgoal_id"],
            match_scope=MatchScope(data.get("match_scope", "both")),
        )


@dataclass(frozen=True)
class ExperimentRow:
    """Per-subgoal before/after entry of one corruption experiment.

    Means are None when a side has no ok records (the row is unscorable);
    delta_rel_pct is additionally None when the original mean is 0.
    """

    subgoal_id: str
    original_mean: Optional[float]
    after_mean: Optional[float]
    delta_abs: Optional[float]
    delta_rel_pct: Optional[float]
    is_target: bool

    def __post_init__(self) -> None:
        if self.original_mean is None or self.after_mean is None:
            if self.delta_abs is not None or self.delta_rel_pct is not None:
                raise ModelError("unscorable row must not carry deltas")
            return
        expected_abs = self.after_mean - self.original_mean
        if self.delta_abs is None or abs(self.delta_abs - expected_abs) > 1e-12:
            raise ModelError("delta_abs inconsistent with means")
        if self.original_mean > 0:
            expected_rel = 100.0 * (self.after_mean - self.original_mean) / self.original_mean
            if self.delta_rel_pct is None or abs(self.delta_rel_pct - expected_rel) > 1e-12:
                raise ModelError("delta_rel_pct inconsistent with means")
        elif self.delta_rel_pct is not None:
            raise ModelError("delta_rel_pct undefined when original mean is 0")

    @property
    def unscorable(self) -> bool:
        return self.original_mean is None or self.after_mean is None

    def to_dict(self) -> dict:
        return {
            "subgoal_id": self.subgoal_id,
            "original_mean": self.original_mean,
            "after_mean": self.after_mean,
            "delta_abs": self.delta_abs,
            "delta_rel_pct": self.delta_rel_pct,
            "is_target": self.is_target,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentRow":
        return cls(
            subgoal_id=data["subgoal_id"],
            original_mean=data["original_mean"],
            after_mean=data["after_mean"],
            delta_abs=data["delta_abs"],
            delta_rel_pct=data["delta_rel_pct"],
            is_target=data["is_target"],
        )


def make_experiment_row(
    subgoal_id: str,
    original_mean: Optional[float],
    after_mean: Optional[float],
    is_target: bool,
) -> ExperimentRow:
    """Build a row with the deltas derived from the means."""
    if original_mean is None or after_mean is None:
        return ExperimentRow(subgoal_id, original_mean, after_mean, None, None, is_target)
    delta_abs = after_mean - original_mean
    delta_rel = 100.0 * delta_abs / original_mean if original_mean > 0 else None
    return ExperimentRow(subgoal_id, original_mean, after_mean, delta_abs, delta_rel, is_target)


@dataclass(frozen=True)
class ExperimentReport:
    """Outcome of one targeted-removal experiment."""

    pattern_name: str
    retention_pct: float
    rows: tuple[ExperimentRow, ...]
    emptied: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        if not 0.0 <= self.retention_pct <= 100.0:
            raise ModelError("retention_pct outside [0, 100]")
        targets = [r for r in self.rows if r.is_target]
        if len(targets) != 1:
            raise ModelError(f"expected exactly one target row, found {len(targets)}")

    @property
    def target_row(self) -> ExperimentRow:
        return next(r for r in self.rows if r.is_target)

    def nontarget_rows(self) -> list[ExperimentRow]:
        return [r for r in self.rows if not r.is_target]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "experiment_report",
            "pattern_name": self.pattern_name,
            "retention_pct": self.retention_pct,
            "rows": [r.to_dict() for r in self.rows],
            "emptied": self.emptied,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(
            pattern_name=data["pattern_name"],
            retention_pct=data["retention_pct"],
            rows=tuple(ExperimentRow.from_dict(r) for r in data["rows"]),
            emptied=data.get("emptied", False),
        )


# ---------------------------------------------------------------------------
# JSONL helpers for datasets
# ---------------------------------------------------------------------------


def dataset_to_jsonl(dataset: Dataset) -> str:
    return "".join(canonical_json(s.to_dict(), indent=None) + "\n" for s in dataset.samples)


def dataset_from_jsonl(text: str, dataset_id: str = "", source: str = "") -> Dataset:
    samples = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        samples.append(Sample.from_dict(json.loads(line)))
    return Dataset(id=dataset_id, samples=tuple(samples), source=source)
