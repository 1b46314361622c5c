"""Fixture-pool planter: corpora with analytically known oracle means.

Each subgoal's keywords are planted all-or-none per sample, so its oracle
score is exactly 1.0 or 0.0 and the dataset-level mean equals the planted
density. Bearing flags follow an exact factorial design: within any stratum
defined by one subgoal's flag, every other subgoal keeps exactly its marginal
density, which decorrelates non-target keywords from any removal pattern.
"""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import PreconditionError
from .model import Dataset, RemovalPattern, Sample
from .textmatch import any_term_in_text, matched_terms

_FILLER = "routine baseline entry using neutral wording only"


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return Fraction(value)
    return Fraction(str(value))


def plant_pool(
    keywords: Mapping[str, Sequence[str]],
    densities: Mapping[str, object],
    n: int,
    seed: int = 0,
) -> Dataset:
    """Build ``n`` samples where each subgoal's keyword-bearing rate is exact.

    ``densities`` maps subgoal id to the fraction of samples carrying all of
    that subgoal's keywords. Every factorial cell count n * prod(p_i or
    1 - p_i) must come out integral, otherwise the construction cannot be
    exact and a PreconditionError explains which density to adjust.
    """
    if n < 1:
        raise PreconditionError("pool size must be >= 1")
    sids = sorted(keywords)
    if sorted(densities) != sids:
        raise PreconditionError("densities must cover exactly the keyword subgoals")

    term_sets = {sid: [t.lower() for t in keywords[sid]] for sid in sids}
    for sid, terms in term_sets.items():
        if not terms:
            raise PreconditionError(f"subgoal {sid!r} has no keywords")
        for other, other_terms in term_sets.items():
            if other == sid:
                continue
            bearing_text = " ".join(terms)
            clash = matched_terms(other_terms, bearing_text)
            if clash:
                raise PreconditionError(
                    f"keywords of {sid!r} collide with {other!r}: {sorted(clash)}"
                )
        if any_term_in_text(terms, _FILLER):
            raise PreconditionError(f"keywords of {sid!r} collide with the filler text")

    fractions = {sid: _as_fraction(densities[sid]) for sid in sids}
    for sid, p in fractions.items():
        if not 0 <= p <= 1:
            raise PreconditionError(f"density for {sid!r} outside [0, 1]")

    # enumerate the 2^k factorial cells and their exact counts
    cells: list[tuple[tuple[bool, ...], int]] = []
    k = len(sids)
    for mask in range(2**k):
        flags = tuple(bool(mask >> i & 1) for i in range(k))
        weight = Fraction(n)
        for i, sid in enumerate(sids):
            weight *= fractions[sid] if flags[i] else (1 - fractions[sid])
        if weight.denominator != 1:
            raise PreconditionError(
                f"cell {dict(zip(sids, flags))} has non-integral count {weight}; "
                f"choose n and densities so every product n*prod(p or 1-p) is whole"
            )
        if weight:
            cells.append((flags, int(weight)))

    bodies: list[str] = []
    for flags, count in cells:
        borne = [sid for i, sid in enumerate(sids) if flags[i]]
        fragments = [" ".join(term_sets[sid]) for sid in borne]
        body = _FILLER if not fragments else "; ".join(fragments)
        bodies.extend([body] * count)

    rng = random.Random(seed)
    rng.shuffle(bodies)
    samples = tuple(
        Sample(id=f"pool-{i:05d}", input=f"entry {i}: {body}", output=body)
        for i, body in enumerate(bodies)
    )
    return Dataset(id=f"planted-{seed}-{n}", samples=samples, source=f"planter(seed={seed})")


def pattern_for_subgoal(
    subgoal_id: str, keywords: Mapping[str, Sequence[str]], name: str = ""
) -> RemovalPattern:
    """A removal pattern whose terms are exactly the subgoal's keywords, so
    pattern matches coincide with keyword-bearing samples in a planted pool."""
    if subgoal_id not in keywords:
        raise PreconditionError(f"no keywords for subgoal {subgoal_id!r}")
    return RemovalPattern(
        name=name or f"remove-{subgoal_id}",
        terms=frozenset(keywords[subgoal_id]),
        target_subgoal_id=subgoal_id,
    )
