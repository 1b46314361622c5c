"""Versioned prompt templates loaded from package data files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from ..errors import SchemaError
from ..model import Sample, Subgoal

#: The anchored scoring scale used by every rubric-scored pathway.
ANCHOR_DEFINITIONS: tuple[tuple[float, str], ...] = (
    (1.0, "perfect alignment, directly demonstrates the target capability"),
    (0.8, "strong alignment, clearly relevant with minor gaps"),
    (0.6, "good alignment, relevant content that supports the goal"),
    (0.4, "weak alignment, some relevance but not ideal"),
    (0.2, "poor alignment, minimal connection"),
    (0.0, "no alignment, irrelevant or counterproductive"),
)


def _render(template: str, **slots: str) -> str:
    # plain replacement: templates contain literal JSON braces, so str.format
    # is unusable here
    out = template
    for key, value in slots.items():
        out = out.replace("{" + key + "}", value)
    return out


@dataclass(frozen=True)
class RubricPrompt:
    """The anchored-rubric scoring prompt; its version is part of backend ids."""

    version: str
    template: str

    def __post_init__(self) -> None:
        for score, definition in ANCHOR_DEFINITIONS:
            if definition not in self.template:
                raise SchemaError(f"rubric template is missing the {score} anchor definition")
        for required in ("score", "explanation"):
            if required not in self.template:
                raise SchemaError(f"rubric template never demands a {required} field")

    def render(self, subgoal: Subgoal, sample: Sample) -> str:
        return _render(
            self.template,
            subgoal_description=subgoal.description,
            rubric_hint=subgoal.rubric_hint or "(none)",
            sample_input=sample.input,
            sample_output=sample.output or "(empty)",
        )


@dataclass(frozen=True)
class TaskPrompts:
    """Templates for question generation, decomposition, analysis, and synthesis."""

    version: str
    questions: str
    decompose: str
    analyze: str
    recommend: str
    generate: str

    def render(self, name: str, **slots: str) -> str:
        return _render(getattr(self, name), **slots)


def _read_data(name: str) -> str:
    return resources.files("capgap.data").joinpath(name).read_text(encoding="utf-8")


def load_rubric_prompt(version: str = "v1") -> RubricPrompt:
    return RubricPrompt(version=version, template=_read_data(f"rubric_prompt_{version}.txt"))


def load_task_prompts(version: str = "v1") -> TaskPrompts:
    raw = json.loads(_read_data(f"task_prompts_{version}.json"))
    return TaskPrompts(
        version=raw["version"],
        questions=raw["questions"],
        decompose=raw["decompose"],
        analyze=raw["analyze"],
        recommend=raw["recommend"],
        generate=raw["generate"],
    )
