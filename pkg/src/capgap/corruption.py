"""Targeted-removal validation harness: pools, corruption, before/after reports."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .backends.base import EvaluatorBackend
from .coverage import CoverageMatrix, assess
from .errors import PreconditionError, ShortfallError
from .model import (
    Dataset,
    ExperimentReport,
    MatchScope,
    RemovalPattern,
    Sample,
    SubgoalSet,
    make_experiment_row,
)
from .storage import ScoreCache
from .textmatch import any_term_in_text

#: Maximum absolute shift tolerated on non-target subgoals in the
#: expected-direction check.
NONTARGET_EPSILON = 0.05


@dataclass(frozen=True)
class PoolConfig:
    """Strategic-sampling settings for experiment pool construction."""

    target_size: int
    pool_factor: float = 1.5
    base_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.target_size < 1:
            raise PreconditionError("target_size must be >= 1")
        if not 1.5 <= self.pool_factor <= 2.0:
            raise PreconditionError("pool_factor must lie in [1.5, 2.0]")
        if not 0.0 < self.base_fraction < 1.0:
            raise PreconditionError("base_fraction must lie strictly in (0, 1)")


def load_builtin_patterns() -> list[RemovalPattern]:
    """The shipped per-domain removal patterns."""
    raw = json.loads(
        resources.files("capgap.data").joinpath("removal_patterns.json").read_text("utf-8")
    )
    return [RemovalPattern.from_dict(p) for p in raw["patterns"]]


def load_patterns(path: str | Path) -> list[RemovalPattern]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    items = raw["patterns"] if isinstance(raw, dict) else raw
    return [RemovalPattern.from_dict(p) for p in items]


def matches(pattern: RemovalPattern, sample: Sample) -> bool:
    """True when any pattern term occurs in the fields selected by match_scope."""
    if pattern.match_scope is MatchScope.INPUT:
        text = sample.input
    elif pattern.match_scope is MatchScope.OUTPUT:
        text = sample.output
    else:
        text = sample.input + "\n" + sample.output
    return any_term_in_text(pattern.terms, text)


@dataclass(frozen=True)
class CorruptionResult:
    corrupted: Dataset
    retention_pct: float
    emptied: bool


def corrupt(dataset: Dataset, pattern: RemovalPattern) -> CorruptionResult:
    """Remove every sample the pattern matches, preserving order.

    Removing everything is not an error; the result carries an ``emptied``
    warning flag instead.
    """
    if len(dataset) < 1:
        raise PreconditionError("dataset is empty")
    survivors = tuple(s for s in dataset.samples if not matches(pattern, s))
    retention = 100.0 * len(survivors) / len(dataset)
    corrupted = Dataset(
        id=f"{dataset.id}:minus-{pattern.name}",
        samples=survivors,
        source=f"corrupt({dataset.id}, {pattern.name})",
    )
    return CorruptionResult(corrupted, retention, emptied=not survivors)


def build_pool(
    source: Dataset, patterns: Sequence[RemovalPattern], config: PoolConfig
) -> Dataset:
    """Allocate a pool so every removal strategy has adequate target content.

    A seeded uniform draw of pool_factor x target_size candidates is split
    into a pattern-free base slice (base_fraction) and even per-pattern
    slices whose members are guaranteed to match their pattern, then
    shuffled. Deterministic for a fixed seed.
    """
    if not patterns:
        raise PreconditionError("at least one removal pattern is required")
    pool_n = math.ceil(config.pool_factor * config.target_size)
    if len(source) < pool_n:
        raise PreconditionError(
            f"source has {len(source)} samples, needs {pool_n} "
            f"(target_size x pool_factor)"
        )
    rng = random.Random(config.seed)
    candidates = rng.sample(list(source.samples), pool_n)

    base_quota = round(config.base_fraction * config.target_size)
    targeted_total = config.target_size - base_quota
    per_pattern = targeted_total // len(patterns)
    leftover = targeted_total % len(patterns)
    quotas = [per_pattern + (1 if i < leftover else 0) for i in range(len(patterns))]

    used: set[str] = set()
    base_slice: list[Sample] = []
    for sample in candidates:
        if len(base_slice) >= base_quota:
            break
        if not any(matches(p, sample) for p in patterns):
            base_slice.append(sample)
            used.add(sample.id)
    if len(base_slice) < base_quota:
        raise ShortfallError("base", base_quota - len(base_slice))

    chosen: list[Sample] = list(base_slice)
    for pattern, quota in zip(patterns, quotas):
        slice_samples: list[Sample] = []
        for sample in candidates:
            if len(slice_samples) >= quota:
                break
            if sample.id in used:
                continue
            if matches(pattern, sample):
                slice_samples.append(sample)
                used.add(sample.id)
        if len(slice_samples) < quota:
            raise ShortfallError(pattern.name, quota - len(slice_samples))
        chosen.extend(slice_samples)

    rng.shuffle(chosen)
    return Dataset(
        id="",
        samples=tuple(chosen),
        source=f"pool({source.id}, seed={config.seed})",
    )


def check_expected_direction(
    report: ExperimentReport, epsilon: float = NONTARGET_EPSILON
) -> list[str]:
    """Violations of the oracle-regime expectation: the target mean must drop
    and every non-target mean must hold within ``epsilon`` absolute."""
    problems: list[str] = []
    target = report.target_row
    if target.original_mean is None or target.after_mean is None:
        problems.append(f"target row {target.subgoal_id!r} is unscorable")
    elif not target.after_mean < target.original_mean:
        problems.append(
            f"target {target.subgoal_id!r} did not degrade "
            f"({target.original_mean} -> {target.after_mean})"
        )
    for row in report.nontarget_rows():
        if row.delta_abs is None:
            problems.append(f"non-target {row.subgoal_id!r} is unscorable")
        elif abs(row.delta_abs) > epsilon:
            problems.append(
                f"non-target {row.subgoal_id!r} shifted {row.delta_abs:+.4f} "
                f"(> {epsilon} absolute)"
            )
    return problems


def run_experiment(
    dataset: Dataset,
    subgoals: SubgoalSet,
    pattern: RemovalPattern,
    backend: EvaluatorBackend,
    tau: float = 0.4,
    cache: Optional[ScoreCache] = None,
    concurrency_limit: int = 8,
    original_matrix: Optional[CoverageMatrix] = None,
) -> ExperimentReport:
    """Assess, corrupt, and recompute per-subgoal means by set membership.

    Surviving samples keep their original records untouched (corruption never
    rescores), so every delta arises purely from which samples remain.
    ``original_matrix`` lets callers share one assessment across strategies.
    """
    if pattern.target_subgoal_id not in subgoals.subgoal_ids():
        raise PreconditionError(
            f"pattern targets unknown subgoal {pattern.target_subgoal_id!r}"
        )
    if original_matrix is None:
        original_matrix = assess(
            dataset, subgoals, backend, tau=tau,
            concurrency_limit=concurrency_limit, cache=cache,
        )
    result = corrupt(dataset, pattern)
    surviving = set(result.corrupted.sample_ids())

    rows = []
    for subgoal in subgoals.subgoals:
        original_ok = original_matrix.ok_records_for(subgoal.id)
        original_mean = (
            sum(r.score for r in original_ok) / len(original_ok) if original_ok else None
        )
        after_ok = [r for r in original_ok if r.sample_id in surviving]
        after_mean = sum(r.score for r in after_ok) / len(after_ok) if after_ok else None
        rows.append(
            make_experiment_row(
                subgoal.id,
                original_mean,
                after_mean,
                is_target=subgoal.id == pattern.target_subgoal_id,
            )
        )

    return ExperimentReport(
        pattern_name=pattern.name,
        retention_pct=result.retention_pct,
        rows=tuple(rows),
        emptied=result.emptied,
    )
