"""Keyword matching shared by the oracle evaluator and the corruption harness.

Matching is case-insensitive and token-boundary aware: "art" does not match
"heart". Multi-word terms match as contiguous token sequences. Terms without
any alphanumeric content ("$") are symbol terms, matched as raw substrings
before tokenization.
"""

from __future__ import annotations

import re
from typing import Iterable, Sequence

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; every other character is a boundary."""
    return _TOKEN_RE.findall(text.lower())


def term_tokens(term: str) -> list[str]:
    """Token form of a term; empty for symbol terms like "$"."""
    return _TOKEN_RE.findall(term.lower())


def _contains_sequence(tokens: Sequence[str], sequence: Sequence[str]) -> bool:
    n = len(sequence)
    if n == 0 or n > len(tokens):
        return False
    first = sequence[0]
    for i in range(len(tokens) - n + 1):
        if tokens[i] == first and list(tokens[i : i + n]) == list(sequence):
            return True
    return False


def term_in_text(term: str, text: str, tokens: Sequence[str] | None = None) -> bool:
    """True when the term occurs in the text under the matching rules above."""
    parts = term_tokens(term)
    if not parts:
        return term.lower() in text.lower()
    if tokens is None:
        tokens = tokenize(text)
    if len(parts) == 1:
        return parts[0] in tokens
    return _contains_sequence(tokens, parts)


def matched_terms(terms: Iterable[str], text: str) -> set[str]:
    """The distinct terms from ``terms`` that occur in ``text``."""
    tokens = tokenize(text)
    token_set = set(tokens)
    hits: set[str] = set()
    for term in terms:
        parts = term_tokens(term)
        if not parts:
            if term.lower() in text.lower():
                hits.add(term)
        elif len(parts) == 1:
            if parts[0] in token_set:
                hits.add(term)
        elif _contains_sequence(tokens, parts):
            hits.add(term)
    return hits


def any_term_in_text(terms: Iterable[str], text: str) -> bool:
    tokens = tokenize(text)
    token_set = set(tokens)
    lowered = text.lower()
    for term in terms:
        parts = term_tokens(term)
        if not parts:
            if term.lower() in lowered:
                return True
        elif len(parts) == 1:
            if parts[0] in token_set:
                return True
        elif _contains_sequence(tokens, parts):
            return True
    return False
