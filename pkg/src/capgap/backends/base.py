"""Evaluator backend contract, retry policy, and rubric-response parsing."""

from __future__ import annotations

import json
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from ..errors import (
    CapgapError,
    ParseError,
    PreconditionError,
    RangeError,
    SchemaError,
    TransportError,
)
from ..model import (
    AlignmentRecord,
    ClarifyingExchange,
    GapFinding,
    Goal,
    Sample,
    Subgoal,
    SubgoalSet,
    snap_to_anchor,
)


class EvaluatorBackend:
    """Common surface for the scoring, elicitation, analysis, and synthesis calls.

    Concrete backends override the ``_``-prefixed hooks they support; the
    public methods add precondition checks and evaluation counting and must
    not be overridden.
    """

    kind: str = "abstract"
    id: str = "abstract"

    def __init__(self) -> None:
        self._eval_lock = threading.Lock()
        self._evaluations = 0

    @property
    def evaluations(self) -> int:
        """Number of actual score_alignment invocations (cache hits bypass this)."""
        with self._eval_lock:
            return self._evaluations

    def score_alignment(self, sample: Sample, subgoal: Subgoal) -> AlignmentRecord:
        with self._eval_lock:
            self._evaluations += 1
        return self._score_alignment(sample, subgoal)

    def generate_questions(
        self, goal: Goal, history: Sequence[ClarifyingExchange]
    ) -> tuple[list[str], bool]:
        questions, complete = self._generate_questions(goal, list(history))
        if not complete and not 1 <= len(questions) <= 8:
            raise SchemaError(f"backend produced {len(questions)} questions, expected 1-8")
        return questions, complete

    def decompose_goal(self, goal: Goal, history: Sequence[ClarifyingExchange]) -> SubgoalSet:
        return self._decompose_goal(goal, list(history))

    def analyze_gap(self, explanations: Sequence[str], subgoal: Subgoal) -> GapFinding:
        if not explanations:
            raise PreconditionError("analyze_gap needs at least one explanation")
        finding = self._analyze_gap(list(explanations), subgoal)
        if not finding.issues:
            raise SchemaError("backend produced a finding without issues")
        return finding

    def recommend(self, gap: GapFinding, subgoal: Subgoal):
        if not gap.issues:
            raise PreconditionError("recommend needs a gap with at least one issue")
        return self._recommend(gap, subgoal)

    def generate_samples(
        self, subgoal: Subgoal, gap: Optional[GapFinding], count: int, iteration: int
    ) -> list[Sample]:
        if count < 1:
            raise PreconditionError("candidate count must be >= 1")
        return self._generate_samples(subgoal, gap, count, iteration)

    # hooks -----------------------------------------------------------------

    def _score_alignment(self, sample: Sample, subgoal: Subgoal) -> AlignmentRecord:
        raise CapgapError(f"{self.kind} backend does not score alignment")

    def _generate_questions(self, goal, history):
        raise CapgapError(f"{self.kind} backend does not generate questions")

    def _decompose_goal(self, goal, history):
        raise CapgapError(f"{self.kind} backend does not decompose goals")

    def _analyze_gap(self, explanations, subgoal):
        raise CapgapError(f"{self.kind} backend does not analyze gaps")

    def _recommend(self, gap, subgoal):
        raise CapgapError(f"{self.kind} backend does not recommend")

    def _generate_samples(self, subgoal, gap, count, iteration):
        raise CapgapError(f"{self.kind} backend does not generate samples")


@dataclass
class RetryPolicy:
    """Bounded retries with exponential backoff for transport failures only."""

    attempts: int = 3
    base_delay: float = 1.0
    factor: float = 2.0
    jitter: float = 0.25
    sleep: Callable[[float], None] = time.sleep
    rng: random.Random = field(default_factory=random.Random)

    def run(self, call: Callable[[], object]):
        last: Optional[TransportError] = None
        for attempt in range(self.attempts):
            try:
                return call()
            except TransportError as exc:
                last = exc
                if attempt + 1 >= self.attempts:
                    break
                delay = self.base_delay * (self.factor**attempt)
                delay += self.rng.uniform(0.0, self.jitter)
                self.sleep(delay)
        raise last  # type: ignore[misc]


def extract_json_object(text: str) -> dict:
    """Parse a JSON object from a response body, tolerating surrounding prose."""
    stripped = (text or "").strip()
    if not stripped:
        raise ParseError("empty response body")
    try:
        obj = json.loads(stripped)
        if isinstance(obj, dict):
            return obj
    except json.JSONDecodeError:
        pass
    start = stripped.find("{")
    end = stripped.rfind("}")
    if start != -1 and end > start:
        try:
            obj = json.loads(stripped[start : end + 1])
            if isinstance(obj, dict):
                return obj
        except json.JSONDecodeError:
            pass
    raise ParseError("response is not a JSON object")


def parse_rubric_response(raw: str) -> tuple[float, str]:
    """Extract (anchored score, explanation) from an evaluator response body.

    In-range off-anchor scores are snapped to the nearest anchor (ties up);
    out-of-range scores are a RangeError, not snapped.
    """
    body = extract_json_object(raw)
    if "score" not in body:
        raise SchemaError("response missing score field")
    if "explanation" not in body:
        raise SchemaError("response missing explanation field")
    score = body["score"]
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise SchemaError(f"score must be numeric, got {type(score).__name__}")
    if not 0.0 <= float(score) <= 1.0:
        raise RangeError(f"score {score!r} outside [0, 1]")
    explanation = body["explanation"]
    if not isinstance(explanation, str) or not explanation.strip():
        raise SchemaError("explanation must be a non-empty string")
    return snap_to_anchor(float(score)), explanation
