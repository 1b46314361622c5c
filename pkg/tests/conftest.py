from __future__ import annotations

import re
from fractions import Fraction

import pytest

from capgap.backends import OracleBackend, OracleConfig
from capgap.model import Dataset, Sample, Subgoal, SubgoalSet


@pytest.fixture
def keyword_config() -> OracleConfig:
    return OracleConfig.from_dict(
        {
            "alpha": ["amber", "basalt", "cobalt", "dune"],
            "beta": ["ember", "fjord"],
            "gamma": ["granite", "harbor", "indigo", "juniper", "krill"],
        }
    )


@pytest.fixture
def subgoal_set() -> SubgoalSet:
    return SubgoalSet(
        goal_id="goal-test",
        subgoals=(
            Subgoal(id="alpha", label="Alpha coverage", description="Cover alpha material."),
            Subgoal(id="beta", label="Beta coverage", description="Cover beta material."),
            Subgoal(id="gamma", label="Gamma coverage", description="Cover gamma material."),
        ),
    )


@pytest.fixture
def oracle(keyword_config) -> OracleBackend:
    return OracleBackend(keyword_config)


def make_dataset(texts: list[str], prefix: str = "s") -> Dataset:
    samples = tuple(
        Sample(id=f"{prefix}{i}", input=text, output="") for i, text in enumerate(texts)
    )
    return Dataset(id=f"ds-{prefix}", samples=samples)


# -- independent one-pass scoring oracle --------------------------------------
# Deliberately reimplemented from scratch (different tokenizer, different snap
# loop) so engine regressions cannot hide in shared code.

_ANCHOR_FRACS = [Fraction(i, 5) for i in range(6)]


def naive_tokens(text: str) -> list[str]:
    return [t for t in re.split(r"[^a-z0-9]+", text.lower()) if t]


def naive_term_hit(term: str, text: str) -> bool:
    sub = [t for t in re.split(r"[^a-z0-9]+", term.lower()) if t]
    if not sub:
        return term.lower() in text.lower()
    tokens = naive_tokens(text)
    if len(sub) == 1:
        return sub[0] in tokens
    return any(tokens[i : i + len(sub)] == sub for i in range(len(tokens) - len(sub) + 1))


def naive_snap(fraction: Fraction) -> float:
    best = None
    for anchor in _ANCHOR_FRACS:
        dist = abs(fraction - anchor)
        if best is None or dist < best[0] or (dist == best[0] and anchor > best[1]):
            best = (dist, anchor)
    return float(best[1])


def naive_score(text: str, terms) -> float:
    hits = sum(1 for term in terms if naive_term_hit(term, text))
    return naive_snap(Fraction(hits, len(terms)))


def naive_mean(dataset: Dataset, terms) -> float:
    scores = [naive_score(s.input + "\n" + s.output, terms) for s in dataset.samples]
    return sum(scores) / len(scores)
