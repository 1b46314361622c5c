"""Phase 4: remediation, the generator-discriminator loop, and dataset filtering."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

from .backends.base import EvaluatorBackend
from .coverage import CoverageMatrix
from .errors import CapgapError, PartialResultError, PreconditionError
from .gaps import GapReport
from .model import (
    SCHEMA_VERSION,
    Dataset,
    GapFinding,
    Recommendation,
    Sample,
    Subgoal,
)


@dataclass(frozen=True)
class RecommendationFailure:
    """Error marker for a finding whose recommendation call failed."""

    subgoal_id: str
    reason: str

    def to_dict(self) -> dict:
        return {"subgoal_id": self.subgoal_id, "error": self.reason}


def recommend_for_gaps(
    report: GapReport, backend: EvaluatorBackend
) -> list[Union[Recommendation, RecommendationFailure]]:
    """One recommendation per finding, in report order; failures are markers."""
    results: list[Union[Recommendation, RecommendationFailure]] = []
    for finding in report.findings:
        subgoal = report.subgoal(finding.subgoal_id)
        try:
            results.append(backend.recommend(finding, subgoal))
        except CapgapError as exc:
            results.append(RecommendationFailure(finding.subgoal_id, str(exc)))
    return results


@dataclass(frozen=True)
class SynthesisConfig:
    target_count: int
    accept_threshold: float = 0.8
    max_iterations: int = 5
    batch_size: int = 8

    def __post_init__(self) -> None:
        if self.target_count < 1:
            raise PreconditionError("target_count must be >= 1")
        if self.max_iterations < 1:
            raise PreconditionError("max_iterations must be >= 1")
        if self.batch_size < 1:
            raise PreconditionError("batch_size must be >= 1")
        if not 0.0 <= self.accept_threshold <= 1.0:
            raise PreconditionError("accept_threshold must lie in [0, 1]")


@dataclass(frozen=True)
class SynthesisRun:
    """Outcome of one goal-conditioned synthesis loop."""

    subgoal_id: str
    gap: Optional[GapFinding]
    target_count: int
    accept_threshold: float
    max_iterations: int
    accepted: tuple[Sample, ...]
    rejected_count: int
    iterations_used: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "accepted", tuple(self.accepted))
        if len(self.accepted) > self.target_count:
            raise PreconditionError("accepted more samples than the target")
        if self.iterations_used > self.max_iterations:
            raise PreconditionError("iterations_used exceeds max_iterations")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "synthesis_run",
            "subgoal_id": self.subgoal_id,
            "gap": self.gap.to_dict() if self.gap else None,
            "target_count": self.target_count,
            "accept_threshold": self.accept_threshold,
            "max_iterations": self.max_iterations,
            "accepted": [s.to_dict() for s in self.accepted],
            "rejected_count": self.rejected_count,
            "iterations_used": self.iterations_used,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthesisRun":
        return cls(
            subgoal_id=data["subgoal_id"],
            gap=GapFinding.from_dict(data["gap"]) if data.get("gap") else None,
            target_count=data["target_count"],
            accept_threshold=data["accept_threshold"],
            max_iterations=data["max_iterations"],
            accepted=tuple(Sample.from_dict(s) for s in data["accepted"]),
            rejected_count=data["rejected_count"],
            iterations_used=data["iterations_used"],
        )


def synthesize(
    subgoal: Subgoal,
    gap: Optional[GapFinding],
    generator_backend: EvaluatorBackend,
    discriminator_backend: EvaluatorBackend,
    config: SynthesisConfig,
) -> SynthesisRun:
    """Generate, score, accept until target_count samples clear the threshold.

    The discriminator is the exact rubric-scoring pathway used in coverage
    assessment, so every accepted sample can be re-scored and must still meet
    the threshold. Byte-identical candidates are rejected before scoring.
    Raises PartialResultError carrying the run when nothing was accepted.
    """
    accepted: list[Sample] = []
    seen: set[tuple[str, str]] = set()
    rejected = 0
    iterations_used = 0

    for iteration in range(1, config.max_iterations + 1):
        if len(accepted) >= config.target_count:
            break
        iterations_used = iteration
        candidates = generator_backend.generate_samples(
            subgoal, gap, config.batch_size, iteration
        )
        for candidate in candidates:
            if len(accepted) >= config.target_count:
                break
            key = (candidate.input, candidate.output)
            if key in seen:
                rejected += 1
                continue
            seen.add(key)
            record = discriminator_backend.score_alignment(candidate, subgoal)
            if not record.ok or record.score < config.accept_threshold:
                rejected += 1
                continue
            tags = candidate.tags | {
                "synthetic",
                f"subgoal:{subgoal.id}",
                f"iteration:{iteration}",
                f"score:{record.score}",
                f"generator:{generator_backend.id}",
                f"discriminator:{discriminator_backend.id}",
            }
            accepted.append(replace(candidate, tags=frozenset(tags)))

    run = SynthesisRun(
        subgoal_id=subgoal.id,
        gap=gap,
        target_count=config.target_count,
        accept_threshold=config.accept_threshold,
        max_iterations=config.max_iterations,
        accepted=tuple(accepted),
        rejected_count=rejected,
        iterations_used=iterations_used,
    )
    if not accepted:
        raise PartialResultError(
            f"no candidates cleared {config.accept_threshold} after "
            f"{iterations_used} iteration(s)",
            run,
        )
    return run


# ---------------------------------------------------------------------------
# Goal-aligned dataset filtering
# ---------------------------------------------------------------------------


class FilterMode(str, Enum):
    MEAN = "mean_over_subgoals"
    MAX = "max_over_subgoals"
    ALL = "all_subgoals"


@dataclass(frozen=True)
class FilterPolicy:
    mode: FilterMode = FilterMode.MEAN
    theta: float = 0.4

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", FilterMode(self.mode))
        if not 0.0 <= self.theta <= 1.0:
            raise PreconditionError("theta must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"mode": self.mode.value, "theta": self.theta}


def filter_dataset(dataset: Dataset, matrix: CoverageMatrix, policy: FilterPolicy) -> Dataset:
    """Keep samples whose policy statistic over ok records clears theta.

    The comparison is inclusive (>= theta). Samples with any failed record
    are dropped under mean/all modes, where their statistic is undefined;
    under max mode a sample survives if any ok score clears theta.
    """
    subgoal_ids = [s.id for s in matrix.subgoals]
    for sample in dataset.samples:
        for sid in subgoal_ids:
            if (sample.id, sid) not in matrix.records:
                raise PreconditionError(
                    f"matrix does not cover sample {sample.id!r} x subgoal {sid!r}"
                )

    kept: list[Sample] = []
    for sample in dataset.samples:
        records = [matrix.records[(sample.id, sid)] for sid in subgoal_ids]
        ok_scores = [r.score for r in records if r.ok]
        has_failed = len(ok_scores) < len(records)
        if policy.mode is FilterMode.MAX:
            if ok_scores and max(ok_scores) >= policy.theta:
                kept.append(sample)
            continue
        if has_failed:
            continue
        if policy.mode is FilterMode.MEAN:
            if sum(ok_scores) / len(ok_scores) >= policy.theta:
                kept.append(sample)
        else:  # ALL
            if min(ok_scores) >= policy.theta:
                kept.append(sample)

    return Dataset(
        id="",
        samples=tuple(kept),
        source=f"filter({dataset.id}, mode={policy.mode.value}, theta={policy.theta})",
    )
