"""Chat-completion HTTP backend with bounded concurrency and rate limiting."""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import httpx

from ..errors import (
    DecompositionError,
    ParseError,
    ResponseFormatError,
    SchemaError,
    TransportError,
)
from ..model import (
    AlignmentRecord,
    GapFinding,
    Provenance,
    Recommendation,
    RecordStatus,
    Sample,
    Subgoal,
    SubgoalSet,
    SynthesisPlan,
    validate_subgoal_set,
)
from .base import EvaluatorBackend, RetryPolicy, extract_json_object, parse_rubric_response
from .prompts import RubricPrompt, TaskPrompts, load_rubric_prompt, load_task_prompts

_REPAIR_INSTRUCTION = (
    "Your previous reply was not valid JSON with the required fields. "
    "Re-emit it as JSON only, with exactly the fields demanded by the task. No other text."
)


class TokenBucket:
    """Classic token bucket; acquire blocks until a token is available."""

    def __init__(
        self,
        rate_per_second: float,
        burst: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.rate = rate_per_second
        self.capacity = float(burst)
        self._tokens = float(burst)
        self._updated = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


@dataclass
class RemoteConfig:
    """Connection settings; the credential comes from the environment only."""

    base_url: str
    model: str
    api_key: Optional[str] = None
    timeout: float = 60.0
    max_in_flight: int = 8
    requests_per_second: float = 4.0
    burst: int = 8
    prompt_version: str = "v1"

    @classmethod
    def from_env(cls, env: Mapping[str, str] = os.environ, **overrides) -> "RemoteConfig":
        settings = {
            "base_url": env.get("CAPGAP_API_BASE", ""),
            "model": env.get("CAPGAP_MODEL", "gpt-4o"),
            "api_key": env.get("CAPGAP_API_KEY"),
        }
        settings.update(overrides)
        if not settings["base_url"]:
            raise TransportError("no endpoint configured: set CAPGAP_API_BASE")
        return cls(**settings)


class RemoteBackend(EvaluatorBackend):
    """All five evaluator roles over one chat-completion endpoint."""

    kind = "remote"

    def __init__(
        self,
        config: RemoteConfig,
        transport: Optional[httpx.BaseTransport] = None,
        retry: Optional[RetryPolicy] = None,
        rubric: Optional[RubricPrompt] = None,
        task_prompts: Optional[TaskPrompts] = None,
    ) -> None:
        super().__init__()
        self.config = config
        self.rubric = rubric or load_rubric_prompt(config.prompt_version)
        self.prompts = task_prompts or load_task_prompts(config.prompt_version)
        self.retry = retry or RetryPolicy()
        self.id = f"remote:{config.model}:prompts@{self.rubric.version}"
        self._semaphore = threading.Semaphore(config.max_in_flight)
        self._bucket = TokenBucket(config.requests_per_second, config.burst)
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._client = httpx.Client(
            base_url=config.base_url,
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    # transport ---------------------------------------------------------------

    def _post_chat(self, messages: list[dict]) -> str:
        def attempt() -> str:
            self._bucket.acquire()
            try:
                response = self._client.post(
                    "/chat/completions",
                    json={"model": self.config.model, "messages": messages, "temperature": 0},
                )
            except httpx.HTTPError as exc:
                raise TransportError(f"request failed: {exc}") from exc
            if response.status_code != 200:
                raise TransportError(f"endpoint returned HTTP {response.status_code}")
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise ParseError(f"malformed completion envelope: {exc}") from exc

        with self._semaphore:
            return self.retry.run(attempt)

    def _chat_json(self, prompt: str, required: Sequence[str]) -> dict:
        """One call plus a single structured-repair reprompt on bad format."""
        messages = [{"role": "user", "content": prompt}]
        raw = self._post_chat(messages)
        try:
            return self._require_fields(extract_json_object(raw), required)
        except ResponseFormatError:
            repair = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": _REPAIR_INSTRUCTION},
            ]
            return self._require_fields(extract_json_object(self._post_chat(repair)), required)

    @staticmethod
    def _require_fields(body: dict, required: Sequence[str]) -> dict:
        for name in required:
            if name not in body:
                raise SchemaError(f"response missing {name} field")
        return body

    # scoring -------------------------------------------------------------------

    def _score_alignment(self, sample: Sample, subgoal: Subgoal) -> AlignmentRecord:
        prompt = self.rubric.render(subgoal, sample)
        messages = [{"role": "user", "content": prompt}]

        def failed(kind: str, reason: str) -> AlignmentRecord:
            return AlignmentRecord(
                sample_id=sample.id,
                subgoal_id=subgoal.id,
                score=None,
                explanation=reason,
                evaluator_id=self.id,
                status=RecordStatus.FAILED,
                failure_kind=kind,
            )

        try:
            raw = self._post_chat(messages)
        except TransportError as exc:
            return failed("transport", f"transport failure after retries: {exc}")
        try:
            score, explanation = parse_rubric_response(raw)
        except ResponseFormatError as first_error:
            repair = messages + [
                {"role": "assistant", "content": raw},
                {"role": "user", "content": _REPAIR_INSTRUCTION},
            ]
            try:
                score, explanation = parse_rubric_response(self._post_chat(repair))
            except TransportError as exc:
                return failed("transport", f"transport failure during repair: {exc}")
            except ResponseFormatError as exc:
                return failed("format", f"unusable response after repair: {first_error}; {exc}")
        return AlignmentRecord(
            sample_id=sample.id,
            subgoal_id=subgoal.id,
            score=score,
            explanation=explanation,
            evaluator_id=self.id,
        )

    # elicitation -----------------------------------------------------------------

    @staticmethod
    def _history_text(history) -> str:
        if not history:
            return "(none)"
        lines = []
        for exchange in history:
            for i, question in enumerate(exchange.questions):
                answer = exchange.responses[i] if i < len(exchange.responses) else "(unanswered)"
                lines.append(f"Q{exchange.round}.{i + 1}: {question}\nA: {answer}")
        return "\n".join(lines)

    def _generate_questions(self, goal, history):
        body = self._chat_json(
            self.prompts.render(
                "questions",
                goal_statement=goal.statement,
                domain_label=goal.domain_label or "(unspecified)",
                task_type=goal.task_type or "(unspecified)",
                history=self._history_text(history),
            ),
            required=("questions", "complete"),
        )
        questions = [str(q) for q in body["questions"]]
        return questions, bool(body["complete"])

    def _decompose_goal(self, goal, history):
        prompt = self.prompts.render(
            "decompose",
            goal_statement=goal.statement,
            domain_label=goal.domain_label or "(unspecified)",
            task_type=goal.task_type or "(unspecified)",
            history=self._history_text(history),
        )
        body = self._chat_json(prompt, required=("subgoals",))
        candidate, violations = self._build_set(goal.id, body["subgoals"])
        if violations:
            # one repair attempt describing exactly what was wrong
            repair_prompt = (
                prompt
                + "\n\nYour previous decomposition was rejected: "
                + "; ".join(v.message for v in violations)
                + "\nFix these problems and respond with the full JSON again."
            )
            body = self._chat_json(repair_prompt, required=("subgoals",))
            candidate, violations = self._build_set(goal.id, body["subgoals"])
        if violations or candidate is None:
            raise DecompositionError(
                "decomposition failed validation after repair: "
                + "; ".join(v.message for v in violations),
                violations,
            )
        return candidate

    @staticmethod
    def _build_set(goal_id: str, raw_subgoals) -> tuple[Optional[SubgoalSet], list]:
        from ..model import Violation

        try:
            candidate = SubgoalSet(
                goal_id=goal_id,
                subgoals=tuple(Subgoal.from_dict(s) for s in raw_subgoals),
                provenance=Provenance.ELICITED,
            )
        except (ValueError, KeyError, TypeError) as exc:
            return None, [Violation("malformed", f"unbuildable decomposition: {exc}")]
        return candidate, validate_subgoal_set(candidate)

    # analysis / recommendation / generation --------------------------------------

    def _analyze_gap(self, explanations, subgoal):
        body = self._chat_json(
            self.prompts.render(
                "analyze",
                subgoal_description=subgoal.description,
                explanations="\n".join(f"- {e}" for e in explanations),
            ),
            required=("issues",),
        )
        issues = tuple(str(i) for i in body["issues"] if str(i).strip())
        if not issues:
            raise SchemaError("analyzer returned no issues")
        return GapFinding(
            subgoal_id=subgoal.id, issues=issues, evidence_count=len(explanations)
        )

    def _recommend(self, gap, subgoal):
        body = self._chat_json(
            self.prompts.render(
                "recommend",
                subgoal_description=subgoal.description,
                issues="\n".join(f"- {i}" for i in gap.issues),
            ),
            required=("remediation",),
        )
        remediation = tuple(str(r) for r in body["remediation"] if str(r).strip())
        if not remediation:
            raise SchemaError("recommender returned no remediation items")
        plan = None
        synthesis = body.get("synthesis")
        if isinstance(synthesis, dict):
            plan = SynthesisPlan(
                target_count=int(synthesis.get("target_count", 8)),
                accept_threshold=float(synthesis.get("accept_threshold", 0.8)),
                max_iterations=int(synthesis.get("max_iterations", 5)),
            )
        return Recommendation(subgoal_id=subgoal.id, remediation=remediation, synthesis_plan=plan)

    def _generate_samples(self, subgoal, gap, count, iteration):
        issues = "\n".join(f"- {i}" for i in gap.issues) if gap else "(none known)"
        body = self._chat_json(
            self.prompts.render(
                "generate",
                count=str(count),
                subgoal_description=subgoal.description,
                issues=issues,
                iteration=str(iteration),
            ),
            required=("samples",),
        )
        samples = []
        for i, item in enumerate(body["samples"]):
            if not isinstance(item, dict) or "input" not in item:
                raise SchemaError(f"candidate {i} is missing an input field")
            samples.append(
                Sample(id="", input=str(item["input"]), output=str(item.get("output", "")))
            )
        return samples
