"""Deterministic keyword oracle: a desk-scale stand-in for the LLM evaluator.

Scores are the fraction of a subgoal's keyword terms present in the sample,
snapped to the anchor scale. The same backend also serves scripted
clarification rounds and canned decompositions so the full pipeline runs
without network access.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from typing import Mapping, Optional, Sequence

from ..errors import DecompositionError, PreconditionError
from ..model import (
    AlignmentRecord,
    GapFinding,
    Goal,
    Provenance,
    Recommendation,
    Sample,
    Subgoal,
    SubgoalSet,
    SynthesisPlan,
    content_hash,
    snap_to_anchor,
    validate_subgoal_set,
)
from ..textmatch import matched_terms, tokenize
from .base import EvaluatorBackend


@dataclass(frozen=True)
class OracleConfig:
    """Per-subgoal keyword sets driving deterministic scoring."""

    keywords: Mapping[str, frozenset[str]]

    def __post_init__(self) -> None:
        normalized = {
            sid: frozenset(t.lower() for t in terms) for sid, terms in self.keywords.items()
        }
        for sid, terms in normalized.items():
            if not terms:
                raise PreconditionError(f"oracle keyword set for {sid!r} is empty")
        object.__setattr__(self, "keywords", normalized)

    def digest(self) -> str:
        payload = json.dumps(
            {sid: sorted(terms) for sid, terms in sorted(self.keywords.items())},
            sort_keys=True,
        )
        return content_hash(payload)

    def validate_against(self, subgoal_set: SubgoalSet) -> None:
        known = set(subgoal_set.subgoal_ids())
        unknown = sorted(set(self.keywords) - known)
        if unknown:
            raise PreconditionError(f"oracle config references unknown subgoals: {unknown}")

    def to_dict(self) -> dict:
        return {sid: sorted(terms) for sid, terms in sorted(self.keywords.items())}

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[str]]) -> "OracleConfig":
        return cls({sid: frozenset(terms) for sid, terms in data.items()})


@dataclass(frozen=True)
class FixtureScripts:
    """Scripted clarification questions, decompositions, and insight text."""

    domains: dict
    insights: dict

    @classmethod
    def load_default(cls) -> "FixtureScripts":
        raw = json.loads(
            resources.files("capgap.data").joinpath("fixture_scripts.json").read_text("utf-8")
        )
        return cls(domains=raw["domains"], insights=raw["insights"])

    def domain_for(self, goal: Goal) -> Optional[dict]:
        label = (goal.domain_label or "").strip().lower()
        if label in self.domains:
            return self.domains[label]
        for name, script in self.domains.items():
            if name in label:
                return script
        return None


def default_oracle_config(domain: str) -> OracleConfig:
    """The shipped keyword sets for one of the fixture domains."""
    scripts = FixtureScripts.load_default()
    if domain not in scripts.domains:
        raise PreconditionError(f"no fixture domain named {domain!r}")
    return OracleConfig.from_dict(scripts.domains[domain]["keywords"])


def fixture_subgoal_set(domain: str, goal_id: str = "") -> SubgoalSet:
    scripts = FixtureScripts.load_default()
    if domain not in scripts.domains:
        raise PreconditionError(f"no fixture domain named {domain!r}")
    script = scripts.domains[domain]
    return SubgoalSet(
        goal_id=goal_id or f"goal-{domain}",
        subgoals=tuple(Subgoal.from_dict(s) for s in script["subgoals"]),
        provenance=Provenance.FIXTURE,
    )


def fixture_goal(domain: str) -> Goal:
    scripts = FixtureScripts.load_default()
    if domain not in scripts.domains:
        raise PreconditionError(f"no fixture domain named {domain!r}")
    return Goal(
        id=f"goal-{domain}",
        statement=scripts.domains[domain]["goal_statement"],
        domain_label=domain,
        task_type={"medical": "qa", "legal": "summarization", "code": "generation"}.get(
            domain, ""
        ),
    )


_STOPWORDS = frozenset(
    "a an and are as at be by do does for from has have in is it its no not of on or "
    "that the this to was were with".split()
)

_SYNTHESIS_VERBS = ("augment", "include", "curate", "incorporate", "enhance", "generate")

_DEFAULT_PLAN = SynthesisPlan(target_count=8, accept_threshold=0.8, max_iterations=5)


class OracleBackend(EvaluatorBackend):
    """Pure-function evaluator over keyword coverage; freely shareable."""

    kind = "keyword_oracle"

    def __init__(
        self,
        config: OracleConfig,
        scripts: Optional[FixtureScripts] = None,
        complete_after_rounds: Optional[int] = None,
        prompt_version: str = "v1",
    ) -> None:
        super().__init__()
        self.config = config
        self.scripts = scripts or FixtureScripts.load_default()
        self.complete_after_rounds = complete_after_rounds
        self.id = f"keyword_oracle:{config.digest()}:rubric@{prompt_version}"

    # scoring ---------------------------------------------------------------

    def _score_alignment(self, sample: Sample, subgoal: Subgoal) -> AlignmentRecord:
        terms = self.config.keywords.get(subgoal.id)
        if terms is None:
            raise PreconditionError(f"no oracle keywords configured for subgoal {subgoal.id!r}")
        text = sample.input + "\n" + sample.output
        hits = matched_terms(terms, text)
        score = snap_to_anchor(Fraction(len(hits), len(terms)))
        if hits:
            explanation = (
                f"matched {len(hits)} of {len(terms)} terms: {', '.join(sorted(hits))}"
            )
        else:
            explanation = f"none of the {len(terms)} subgoal terms are present"
        return AlignmentRecord(
            sample_id=sample.id,
            subgoal_id=subgoal.id,
            score=score,
            explanation=explanation,
            evaluator_id=self.id,
        )

    # clarification ---------------------------------------------------------

    def _rounds_for(self, goal: Goal) -> list[list[str]]:
        script = self.scripts.domain_for(goal)
        if script is not None:
            return [list(r) for r in script["question_rounds"]]
        return [
            [
                "What content areas must the dataset cover?",
                "Are there formats or behaviors the model must always follow?",
            ]
        ]

    def _generate_questions(self, goal, history):
        rounds = self._rounds_for(goal)
        limit = self.complete_after_rounds
        if limit is None:
            limit = len(rounds)
        done = len(history)
        if done >= limit:
            return [], True
        if done < len(rounds):
            return rounds[done], False
        return [f"Anything else to clarify before decomposition (round {done + 1})?"], False

    def _decompose_goal(self, goal, history):
        script = self.scripts.domain_for(goal)
        if script is not None:
            subgoal_dicts = script["subgoals"]
        else:
            subgoal_dicts = [
                {
                    "id": sid,
                    "label": sid.replace("_", " ").capitalize(),
                    "description": f"Cover content involving {', '.join(sorted(terms)[:4])}.",
                    "rubric_hint": "",
                }
                for sid, terms in sorted(self.config.keywords.items())
            ]
        try:
            candidate = SubgoalSet(
                goal_id=goal.id,
                subgoals=tuple(Subgoal.from_dict(s) for s in subgoal_dicts),
                provenance=Provenance.FIXTURE,
            )
        except ValueError as exc:
            raise DecompositionError(f"fixture decomposition malformed: {exc}") from exc
        violations = validate_subgoal_set(candidate)
        if violations:
            raise DecompositionError(
                "fixture decomposition failed validation: "
                + "; ".join(v.message for v in violations),
                violations,
            )
        return candidate

    # analysis and recommendation -------------------------------------------

    def _analyze_gap(self, explanations, subgoal):
        counts: dict[str, int] = {}
        for explanation in explanations:
            for token in set(tokenize(explanation)):
                if token in _STOPWORDS or token.isdigit():
                    continue
                counts[token] = counts.get(token, 0) + 1
        issues: list[str]
        if counts:
            best = max(counts.values())
            themes = sorted(t for t, c in counts.items() if c == best)[:3]
            issues = [
                f"recurring deficiency: {theme!r} appears in {best} of "
                f"{len(explanations)} low-score explanations"
                for theme in themes
            ]
        else:
            issues = ["no recurring theme identified in low-score explanations"]
        return GapFinding(
            subgoal_id=subgoal.id,
            issues=tuple(issues),
            evidence_count=len(explanations),
        )

    def _recommend(self, gap, subgoal):
        insight = self.scripts.insights.get(subgoal.id)
        if insight is not None:
            remediation = tuple(insight["fixes"])
        else:
            remediation = (
                f"curate additional samples exercising {subgoal.label.lower()}",
                f"augment training data to address: {gap.issues[0]}",
            )
        proposes_synthesis = any(
            verb in item.lower() for item in remediation for verb in _SYNTHESIS_VERBS
        )
        return Recommendation(
            subgoal_id=subgoal.id,
            remediation=remediation,
            synthesis_plan=_DEFAULT_PLAN if proposes_synthesis else None,
        )

    # synthesis -------------------------------------------------------------

    def _generate_samples(self, subgoal, gap, count, iteration):
        terms = sorted(self.config.keywords.get(subgoal.id, frozenset({subgoal.label.lower()})))
        phrase = ", ".join(terms)
        samples = []
        for i in range(count):
            samples.append(
                Sample(
                    id=f"gen-{subgoal.id}-{iteration}-{i}",
                    input=f"Exercise {subgoal.label} (batch {iteration}, item {i}): "
                    f"cover {phrase}.",
                    output=f"Worked example touching {phrase}.",
                )
            )
        return samples


class MixedFixtureGenerator(EvaluatorBackend):
    """Generator emitting a fixed viable/non-viable candidate pattern.

    Candidate ``j`` (counted across the backend's lifetime) bears the
    subgoal's keywords when ``j % period == 0``, so acceptance behavior is
    enumerable by hand.
    """

    kind = "keyword_oracle"

    def __init__(self, config: OracleConfig, period: int = 2) -> None:
        super().__init__()
        if period < 1:
            raise PreconditionError("period must be >= 1")
        self.config = config
        self.period = period
        self._counter = 0
        self.id = f"keyword_oracle:mixed-{period}:{config.digest()}"

    def _generate_samples(self, subgoal, gap, count, iteration):
        terms = sorted(self.config.keywords.get(subgoal.id, frozenset({subgoal.label.lower()})))
        phrase = ", ".join(terms)
        samples = []
        for _ in range(count):
            j = self._counter
            self._counter += 1
            if j % self.period == 0:
                text = f"Candidate {j}: demonstrates {phrase}."
            else:
                text = f"Candidate {j}: unrelated filler content."
            samples.append(
                Sample(id=f"gen-{subgoal.id}-{iteration}-{j}", input=text, output=text)
            )
        return samples
