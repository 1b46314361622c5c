"""Pluggable evaluator backends and the operation-level call surface."""

from __future__ import annotations

from typing import Sequence

from ..model import (
    AlignmentRecord,
    ClarifyingExchange,
    GapFinding,
    Goal,
    Recommendation,
    Sample,
    Subgoal,
    SubgoalSet,
)
from .base import EvaluatorBackend, RetryPolicy, extract_json_object, parse_rubric_response
from .oracle import (
    FixtureScripts,
    MixedFixtureGenerator,
    OracleBackend,
    OracleConfig,
    default_oracle_config,
    fixture_goal,
    fixture_subgoal_set,
)
from .prompts import ANCHOR_DEFINITIONS, RubricPrompt, TaskPrompts, load_rubric_prompt, load_task_prompts
from .remote import RemoteBackend, RemoteConfig, TokenBucket
from .replay import ReplayBackend


def score_alignment(sample: Sample, subgoal: Subgoal, backend: EvaluatorBackend) -> AlignmentRecord:
    return backend.score_alignment(sample, subgoal)


def generate_questions(
    goal: Goal, history: Sequence[ClarifyingExchange], backend: EvaluatorBackend
) -> tuple[list[str], bool]:
    return backend.generate_questions(goal, history)


def decompose_goal(
    goal: Goal, history: Sequence[ClarifyingExchange], backend: EvaluatorBackend
) -> SubgoalSet:
    return backend.decompose_goal(goal, history)


def analyze_gap(
    explanations: Sequence[str], subgoal: Subgoal, backend: EvaluatorBackend
) -> GapFinding:
    return backend.analyze_gap(explanations, subgoal)


def recommend(gap: GapFinding, subgoal: Subgoal, backend: EvaluatorBackend) -> Recommendation:
    return backend.recommend(gap, subgoal)


__all__ = [
    "ANCHOR_DEFINITIONS",
    "EvaluatorBackend",
    "FixtureScripts",
    "MixedFixtureGenerator",
    "OracleBackend",
    "OracleConfig",
    "RemoteBackend",
    "RemoteConfig",
    "ReplayBackend",
    "RetryPolicy",
    "RubricPrompt",
    "TaskPrompts",
    "TokenBucket",
    "analyze_gap",
    "decompose_goal",
    "default_oracle_config",
    "extract_json_object",
    "fixture_goal",
    "fixture_subgoal_set",
    "generate_questions",
    "load_rubric_prompt",
    "load_task_prompts",
    "parse_rubric_response",
    "recommend",
    "score_alignment",
]
