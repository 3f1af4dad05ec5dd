"""Tests for the text-side metrics.

BLEU and the embedding match are checked against naive loop
implementations written here from the definitions; rating extraction
against a frozen case table.
"""

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from perfcoach.errors import AdapterError, InvalidInput
from perfcoach.metrics import (
    REFERENCE_TARGETS,
    HashEmbedder,
    LexiconSentimentVectorizer,
    MaeResult,
    accuracy_within,
    bleu_avg,
    check_sentiment_vector,
    embedding_f1,
    embedding_prf,
    extract_rating,
    extract_technique,
    mae,
    prediction_followed_rate,
    sentiment_similarity,
    tokenize,
)

# -- rating extraction ---------------------------------------------------------------

EXTRACTION_CASES = [
    ("8/10", None, 8),
    ("8 / 10", (1, 10), 8),
    ("I would give this 8 out of 10.", (1, 10), 8),
    ("I'd give it a 7", (1, 10), 7),
    ("rated 3.5 stars", None, None),
    ("7.5/10 overall", (1, 10), None),
    ("version 2.5, overall 4", (1, 10), 4),
    ("On a scale of 10, I would say 8.", (1, 10), 8),
    ("out of 10, maybe a 6", (1, 10), 6),
    ("I rate it 15, call it 5.", (1, 10), 5),
    ("10 out of 10", (1, 10), 10),
    ("The difficulty is 7 on a scale of 9.", (1, 9), 7),
    ("no numbers here", (1, 10), None),
    ("", (1, 10), None),
    ("Scale Of 6: the phrasing earns a 4", (1, 6), 4),
    ("the 0 is out of range but 1 is fine", (1, 10), 1),
]


@pytest.mark.parametrize("text,scale,expected", EXTRACTION_CASES)
def test_extract_rating_cases(text, scale, expected):
    assert extract_rating(text, scale) == expected


@given(k=st.integers(min_value=1, max_value=10))
def test_extract_rating_fraction_forms(k):
    assert extract_rating(f"I rate this {k} out of 10", (1, 10)) == k
    assert extract_rating(f"{k}/10", (1, 10)) == k
    assert extract_rating(f"My score: {k}.", (1, 10)) == k


@given(text=st.text(max_size=80))
def test_extract_rating_always_in_scale_or_none(text):
    value = extract_rating(text, (1, 6))
    assert value is None or (isinstance(value, int) and 1 <= value <= 6)


def test_extract_rating_without_scale_takes_first_candidate():
    assert extract_rating("first 42 then 3") == 42


# -- technique extraction --------------------------------------------------------------

TECHS = ("trills", "octaves", "scales", "arpeggios", "ornaments", "repeated notes", "double notes")


def test_extract_technique_earliest_mention():
    assert extract_technique("Mostly scales, with some trills later.", TECHS) == "scales"
    assert extract_technique("The double notes passage is hard.", TECHS) == "double notes"
    assert extract_technique("TRILLS everywhere", TECHS) == "trills"
    assert extract_technique("nothing labeled", TECHS) is None


def test_extract_technique_tie_prefers_longer_label():
    assert extract_technique("notes please", ("note", "notes")) == "notes"


# -- followed rate and numeric agreement ----------------------------------------------------

def test_prediction_followed_rate():
    assert prediction_followed_rate([1, None, 3, None]) == 0.5
    assert prediction_followed_rate([None]) == 0.0
    assert prediction_followed_rate([2, 2]) == 1.0
    with pytest.raises(InvalidInput):
        prediction_followed_rate([])


def test_mae_excludes_failed_extractions_but_counts_them():
    result = mae([3, None, 7], [3, 5, 4])
    assert result == MaeResult(value=1.5, used=2, total=3)


def test_mae_all_failed():
    assert mae([None, None], [1, 2]) == MaeResult(None, 0, 2)


def test_mae_input_checks():
    with pytest.raises(InvalidInput):
        mae([1], [1, 2])
    with pytest.raises(InvalidInput):
        mae([], [])


def test_accuracy_within():
    preds, refs = [3, None, 5], [3, 3, 7]
    assert accuracy_within(preds, refs, tolerance=0) == pytest.approx(1 / 3)
    assert accuracy_within(preds, refs, tolerance=2) == pytest.approx(2 / 3)
    with pytest.raises(InvalidInput):
        accuracy_within([], [])


# -- BLEU ----------------------------------------------------------------------------------

def naive_bleu_avg(candidate, references, max_order=4):
    """Straight-from-definition reimplementation with explicit loops."""

    def grams(tokens, n):
        return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))

    cand = candidate.lower().split()
    refs = [r.lower().split() for r in references]
    if not cand:
        return 0.0
    c = len(cand)
    r = sorted((abs(len(ref) - c), len(ref)) for ref in refs)[0][1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    terms = []
    for n in range(1, max_order + 1):
        cg = grams(cand, n)
        total = sum(cg.values())
        if total == 0:
            continue
        hit = 0
        for gram, count in cg.items():
            hit += min(count, max(grams(ref, n)[gram] for ref in refs))
        terms.append(hit / total)
    return bp * sum(terms) / len(terms)


def test_bleu_hand_worked():
    got = bleu_avg("the tempo is steady", ["the tempo is very steady"])
    expected = math.exp(-0.25) * (1 + 2 / 3 + 1 / 2 + 0) / 4
    assert got == pytest.approx(expected, abs=1e-12)


def test_bleu_identity_is_one():
    assert bleu_avg("clean tone", ["clean tone"]) == pytest.approx(1.0, abs=1e-12)
    assert bleu_avg("a", ["a"]) == pytest.approx(1.0, abs=1e-12)


def test_bleu_clipping_with_repeats():
    # "the" appears once in the best reference, so 3 copies clip to 1
    got = bleu_avg("the the the", ["the cat", "a the"])
    assert got == pytest.approx((1 / 3) / 3, abs=1e-12)


def test_bleu_disjoint_is_zero():
    assert bleu_avg("wholly different words", ["nothing shared here"]) == 0.0


def test_bleu_empty_candidate_is_zero():
    assert bleu_avg("", ["anything"]) == 0.0
    assert bleu_avg("...", ["anything"]) == 0.0


def test_bleu_requires_references():
    with pytest.raises(InvalidInput):
        bleu_avg("text", [])
    with pytest.raises(InvalidInput):
        bleu_avg("text", [None])


def test_bleu_brevity_penalty_direction():
    # shorter candidate than reference gets penalized, longer does not
    short = bleu_avg("the tempo", ["the tempo is steady"])
    assert short == pytest.approx(math.exp(1 - 4 / 2) * 1.0, abs=1e-12)
    longer = bleu_avg("the tempo is steady indeed now", ["the tempo is steady"])
    assert longer <= 1.0


_WORDS = st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=12)


@given(cand=_WORDS, refs=st.lists(_WORDS, min_size=1, max_size=3))
def test_bleu_against_naive(cand, refs):
    candidate = " ".join(cand)
    references = [" ".join(r) for r in refs]
    got = bleu_avg(candidate, references)
    assert got == pytest.approx(naive_bleu_avg(candidate, references), abs=1e-12)
    assert 0.0 <= got <= 1.0


def test_tokenize_drops_punctuation_and_case():
    assert tokenize("The tempo, alas, RUSHES!") == ["the", "tempo", "alas", "rushes"]
    assert tokenize("don't stop") == ["don't", "stop"]
    assert tokenize("' ' '") == []


# -- sentiment ------------------------------------------------------------------------------

def test_lexicon_vectorizer_cases():
    v = LexiconSentimentVectorizer()
    np.testing.assert_allclose(v("great performance"), [0, 0, 0, 1, 0])
    np.testing.assert_allclose(v("very clean and expressive playing"), [0, 0, 0, 0.5, 0.5])
    np.testing.assert_allclose(v("not good"), [0, 1, 0, 0, 0])
    np.testing.assert_allclose(v("very harsh tone"), [1, 0, 0, 0, 0])
    np.testing.assert_allclose(v("the piece has notes"), [0, 0, 1, 0, 0])
    np.testing.assert_allclose(v(""), [0, 0, 1, 0, 0])


def test_negation_window_is_local():
    v = LexiconSentimentVectorizer()
    # negator three tokens away no longer flips
    np.testing.assert_allclose(v("not at all that good"), [0, 0, 0, 1, 0])


_SENTIMENT_WORDS = st.lists(
    st.sampled_from(
        ["good", "bad", "very", "not", "tone", "harsh", "clean", "the", "never", "quite"]
    ),
    min_size=0,
    max_size=15,
)


@given(words=_SENTIMENT_WORDS)
def test_vectorizer_output_is_valid_distribution(words):
    v = LexiconSentimentVectorizer()(" ".join(words))
    check_sentiment_vector(v)


def test_sentiment_similarity_cases():
    v = LexiconSentimentVectorizer()
    assert sentiment_similarity(v("lovely singing tone"), v("lovely singing tone")) == 1.0
    assert sentiment_similarity([1, 0, 0, 0, 0], [0, 0, 0, 0, 1]) == 0.0
    # cosine: dot 0.25 over norms 0.5*sqrt(2) * 0.5*sqrt(2)
    assert sentiment_similarity([0.5, 0, 0.5, 0, 0], [0, 0.5, 0.5, 0, 0]) == pytest.approx(0.5)
    # dot 0.32 over norm 0.68 (vectors share the same norm)
    assert sentiment_similarity([0.8, 0.2, 0, 0, 0], [0.2, 0.8, 0, 0, 0]) == pytest.approx(0.32 / 0.68)


@given(
    st.lists(st.floats(0.05, 1.0), min_size=5, max_size=5),
    st.lists(st.floats(0.05, 1.0), min_size=5, max_size=5),
)
def test_sentiment_similarity_matches_cosine_oracle(raw_a, raw_b):
    a = np.asarray(raw_a) / np.sum(raw_a)
    b = np.asarray(raw_b) / np.sum(raw_b)
    naive = float(sum(x * y for x, y in zip(a, b))) / (
        math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in b)))
    assert sentiment_similarity(a, b) == pytest.approx(naive, abs=1e-12)
    assert 0.0 < sentiment_similarity(a, b) <= 1.0 + 1e-12


@pytest.mark.parametrize(
    "bad",
    [
        [0.25, 0.25, 0.25, 0.25],  # wrong length
        [0.5, 0.5, 0.5, -0.5, 0.0],  # negative entry
        [0.5, 0.5, 0.5, 0.0, 0.0],  # sums to 1.5
        [float("nan"), 0, 0, 0, 1],
    ],
)
def test_sentiment_vector_validation(bad):
    with pytest.raises(AdapterError):
        check_sentiment_vector(bad)
    with pytest.raises(AdapterError):
        sentiment_similarity(bad, [0.2, 0.2, 0.2, 0.2, 0.2])


# -- embedding match ---------------------------------------------------------------------------

def naive_prf(candidate, reference, embedder):
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0, 0.0, 0.0

    def cos(a, b):
        return sum(x * y for x, y in zip(embedder(a), embedder(b)))

    p = sum(max(cos(c, r) for r in ref) for c in cand) / len(cand)
    r = sum(max(cos(c, rr) for c in cand) for rr in ref) / len(ref)
    f = 0.0 if p + r <= 0 else 2 * p * r / (p + r)
    return p, r, f


def test_embedder_is_deterministic_across_instances():
    a, b = HashEmbedder(), HashEmbedder()
    np.testing.assert_array_equal(a("legato"), b("legato"))
    assert np.linalg.norm(a("legato")) == pytest.approx(1.0, abs=1e-12)
    assert not np.array_equal(a("legato"), a("staccato"))


def test_embedding_identity_is_one():
    assert embedding_f1("warm legato phrasing", ["warm legato phrasing"]) == pytest.approx(
        1.0, abs=1e-9
    )


def test_embedding_disjoint_is_low():
    assert embedding_f1("alpha beta gamma", ["delta epsilon zeta"]) < 0.6


def test_embedding_subset_has_full_precision():
    p, r, f = embedding_prf("clean tone", "a very clean tone indeed")
    assert p == pytest.approx(1.0, abs=1e-9)
    assert r < 1.0
    assert f == pytest.approx(2 * p * r / (p + r), abs=1e-12)


def test_embedding_empty_sides():
    assert embedding_prf("", "words") == (0.0, 0.0, 0.0)
    assert embedding_prf("words", "!!!") == (0.0, 0.0, 0.0)
    with pytest.raises(InvalidInput):
        embedding_f1("words", [])


@given(
    cand=st.lists(st.sampled_from(["pedal", "tone", "tempo", "rushed"]), min_size=1, max_size=6),
    ref=st.lists(st.sampled_from(["pedal", "tone", "balance", "soft"]), min_size=1, max_size=6),
)
def test_embedding_against_naive(cand, ref):
    embedder = HashEmbedder()
    got = embedding_prf(" ".join(cand), " ".join(ref), embedder)
    expected = naive_prf(" ".join(cand), " ".join(ref), embedder)
    assert got == pytest.approx(expected, abs=1e-9)


def test_embedding_f1_takes_best_reference():
    refs = ["utterly unrelated words", "warm legato phrasing"]
    assert embedding_f1("warm legato phrasing", refs) == pytest.approx(1.0, abs=1e-9)


# -- reference results table -----------------------------------------------------------------

def test_reference_targets_are_pinned():
    assert REFERENCE_TARGETS == {
        "prediction_followed_rate": 0.99,
        "rating_mae": 0.97,
        "sentiment_similarity": 0.52,
        "bleu_avg": 0.09,
        "embedding_f1": 0.88,
        "difficulty_accuracy_exact": 0.21,
        "difficulty_accuracy_within_one": 0.55,
        "technique_accuracy_exact": 0.37,
    }
