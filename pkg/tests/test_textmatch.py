from __future__ import annotations

import random
import string

from hypothesis import given, strategies as st

from capgap.textmatch import any_term_in_text, matched_terms, term_in_text, tokenize

from conftest import naive_term_hit


class TestTokenBoundaries:
    def test_substring_is_not_a_token(self):
        assert not term_in_text("art", "heart surgery")
        assert term_in_text("art", "the art of surgery")

    def test_case_insensitive(self):
        assert term_in_text("ecg", "ECG readings were normal")
        assert term_in_text("ECG", "an ecg was taken")

    def test_punctuation_is_a_boundary(self):
        assert term_in_text("mg", "dose: 5mg?")is False
        assert term_in_text("mg", "dose: 5 mg, twice daily")

    def test_numbers_tokenize(self):
        assert tokenize("HTTP/2 404s") == ["http", "2", "404s"]


class TestMultiWordTerms:
    def test_contiguous_sequence_required(self):
        assert term_in_text("machine learning", "about machine learning methods")
        assert not term_in_text("machine learning", "the machine was learning-free, learning nothing")

    def test_sequence_crosses_punctuation(self):
        # punctuation separates tokens but the sequence is still contiguous
        assert term_in_text("machine learning", "machine-learning models")


class TestSymbolTerms:
    def test_dollar_matches_pre_tokenization(self):
        assert term_in_text("$", "appropriates $4 million")
        assert not term_in_text("$", "appropriates 4 million dollars")

    def test_matched_terms_mixed(self):
        hits = matched_terms({"$", "million", "budget"}, "a $2 million line item")
        assert hits == {"$", "million"}


class TestAgainstNaiveMatcher:
    def test_randomized_equivalence(self):
        rng = random.Random(99)
        vocabulary = ["alpha", "beta", "gamma", "delta9", "machine learning", "$", "x-ray"]
        for _ in range(300):
            words = [rng.choice(vocabulary + list(string.ascii_lowercase)) for _ in range(8)]
            text = rng.choice([" ", ", ", "-", ": "]).join(words)
            for term in vocabulary:
                assert term_in_text(term, text) == naive_term_hit(term, text), (term, text)

    @given(st.text(alphabet="ab $-.x", max_size=40), st.sampled_from(["a", "ab", "a b", "$", "x"]))
    def test_property_equivalence(self, text, term):
        assert term_in_text(term, text) == naive_term_hit(term, text)


def test_any_term_short_circuits_consistently():
    terms = {"cardiac", "heart"}
    assert not any_term_in_text(terms, "myocardial infarction risk")
    assert any_term_in_text(terms, "mild cardiac event")
