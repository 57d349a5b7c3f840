"""Metric tests: ROUGE against brute-force oracles, entity heuristics."""

import itertools

import numpy as np
import pytest

from segsum.evaluation import (entity_graph, entity_precision, extract_entities,
                               rouge_l, rouge_l_tokens, rouge_n, rouge_n_tokens)


def brute_rouge_n(cand, ref, n):
    """Count overlap by explicit multiset matching."""
    cgrams = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
    rgrams = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    pool = list(rgrams)
    overlap = 0
    for g in cgrams:
        if g in pool:
            pool.remove(g)
            overlap += 1
    if not cgrams and not rgrams:
        return 1.0, 1.0, 1.0
    if not cgrams or not rgrams:
        return 0.0, 0.0, 0.0
    p = overlap / len(cgrams)
    r = overlap / len(rgrams)
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def brute_lcs(cand, ref):
    """Longest common subsequence by enumerating candidate subsequences."""
    best = 0
    for k in range(len(cand), 0, -1):
        for combo in itertools.combinations(cand, k):
            it = iter(ref)
            if all(tok in it for tok in combo):
                return k
    return best


class TestRougeN:
    def test_hand_unigram(self):
        scores = rouge_n("the cat sat", "the cat ran", 1)
        assert scores["precision"] == pytest.approx(2 / 3)
        assert scores["recall"] == pytest.approx(2 / 3)
        assert scores["f1"] == pytest.approx(2 / 3)

    def test_hand_bigram(self):
        scores = rouge_n("the cat sat", "the cat ran", 2)
        assert scores["f1"] == pytest.approx(1 / 2)

    def test_identical_strings(self):
        for n in (1, 2):
            assert rouge_n("a fine day", "a fine day", n)["f1"] == 1.0

    def test_empty_conventions(self):
        assert rouge_n("", "", 1)["f1"] == 1.0
        assert rouge_n("word", "", 1)["f1"] == 0.0
        assert rouge_n("", "word", 1)["f1"] == 0.0
        # one-token texts have no bigrams at all
        assert rouge_n("word", "term", 2)["f1"] == 1.0

    def test_matches_bruteforce_on_random_pairs(self):
        rng = np.random.default_rng(17)
        alphabet = ["a", "b", "c", "d"]
        for _ in range(500):
            cand = list(rng.choice(alphabet, size=rng.integers(0, 9)))
            ref = list(rng.choice(alphabet, size=rng.integers(0, 9)))
            for n in (1, 2):
                got = rouge_n_tokens(cand, ref, n)
                p, r, f1 = brute_rouge_n(cand, ref, n)
                assert got["precision"] == pytest.approx(p)
                assert got["recall"] == pytest.approx(r)
                assert got["f1"] == pytest.approx(f1)

    def test_swap_symmetry(self):
        a, b = "one two three four", "two four six"
        fwd = rouge_n(a, b, 1)
        rev = rouge_n(b, a, 1)
        assert fwd["precision"] == rev["recall"]
        assert fwd["recall"] == rev["precision"]
        assert fwd["f1"] == pytest.approx(rev["f1"])


class TestRougeL:
    def test_hand_example(self):
        scores = rouge_l("the cat sat", "the cat ran")
        assert scores["f1"] == pytest.approx(2 / 3)

    def test_identical(self):
        assert rouge_l("same thing here", "same thing here")["f1"] == 1.0

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(23)
        alphabet = ["a", "b", "c"]
        for _ in range(500):
            cand = list(rng.choice(alphabet, size=rng.integers(1, 9)))
            ref = list(rng.choice(alphabet, size=rng.integers(1, 9)))
            lcs = brute_lcs(cand, ref)
            got = rouge_l_tokens(cand, ref)
            assert got["precision"] == pytest.approx(lcs / len(cand))
            assert got["recall"] == pytest.approx(lcs / len(ref))


class TestEntities:
    def test_rule_walkthrough(self):
        ents = {m for m, _ in extract_entities(["GAO recommended that VA act."])}
        assert ents == {"gao", "va"}

    def test_all_lowercase_none(self):
        assert extract_entities(["nothing capitalized in sight."]) == []

    def test_initial_stopword_excluded(self):
        ents = {m for m, _ in extract_entities(["The report found problems."])}
        assert "the" not in ents
        assert ents == set()

    def test_runs_merge(self):
        ents = {m for m, _ in extract_entities(["We should visit New York City soon."])}
        assert ents == {"new york city"}

    def test_initial_capital_nonstopword_joins_run(self):
        ents = {m for m, _ in extract_entities(["Visit New York soon."])}
        assert ents == {"visit new york"}

    def test_numbers_are_entities(self):
        ents = {m for m, _ in extract_entities(["On July 12, 2019 it rained."])}
        assert ents == {"july", "12", "2019"}

    def test_entity_precision_cases(self):
        assert entity_precision(["GAO and VA agreed."], ["GAO spoke to VA."]) == 1.0
        assert entity_precision(["GAO met NASA."], ["GAO reported."]) == 0.5
        assert entity_precision(["nothing here."], ["GAO reported."]) == 1.0

    def test_duplicate_mentions_do_not_change_precision(self):
        once = entity_precision(["GAO and NASA."], ["Only GAO."])
        twice = entity_precision(["GAO and NASA.", "GAO again with NASA."], ["Only GAO."])
        assert once == twice == 0.5


class TestEntityGraph:
    def test_two_sentences_sharing_one(self):
        score = entity_graph(["GAO issued a report.", "Later GAO acted."])
        assert score == pytest.approx(0.5)

    def test_no_shared_entities(self):
        assert entity_graph(["GAO issued.", "Customers paid."]) == 0.0

    def test_three_sentences_full_chain(self):
        sents = ["GAO issued.", "Then GAO acted.", "Finally GAO closed."]
        assert entity_graph(sents) == pytest.approx(1.0)

    def test_single_sentence_zero(self):
        assert entity_graph(["GAO issued a report."]) == 0.0

    def test_two_sentence_reversal_invariance(self):
        a = ["GAO issued NASA rules.", "NASA thanked GAO."]
        assert entity_graph(a) == entity_graph(list(reversed(a)))

    def test_unweighted_variant(self):
        sents = ["GAO told NASA.", "NASA and GAO agreed."]
        assert entity_graph(sents, weighted=True) == pytest.approx(1.0)
        assert entity_graph(sents, weighted=False) == pytest.approx(0.5)
