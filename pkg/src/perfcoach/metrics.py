"""Text-side evaluation metrics.

Everything here is deterministic and dependency-light on purpose: rating
extraction is a small left-to-right grammar, BLEU is the clipped
modified-precision form averaged over orders, sentiment comes from a
rule lexicon mapped to a five-bin distribution, and the embedding match
score uses hash-seeded unit vectors so scores are stable across runs and
machines.

Free-text answers from a language model rarely contain a bare number,
so extraction consumes the common decorations (denominators, "scale of
N" echoes, decimals) before it accepts a candidate.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .errors import AdapterError, InvalidInput

# -- tokenization -------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def tokenize(text: str) -> list[str]:
    """Lowercase words; punctuation acts as a separator."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if t.strip("'")]


# -- rating extraction ---------------------------------------------------------------------

_NUMBER_GRAMMAR = re.compile(
    r"""
    (?P<decimal>\d+\.\d+)
    | (?P<slash_num>\d+)\s*/\s*(?P<slash_den>\d+)
    | (?P<outof_num>\d+)\s+out\s+of\s+(?P<outof_den>\d+)
    | scale\s+of\s+(?P<scale_echo>\d+)
    | out\s+of\s+(?P<bare_den>\d+)
    | /\s*(?P<orphan_den>\d+)
    | (?P<bare>\d+)
    """,
    re.VERBOSE | re.IGNORECASE,
)


def extract_rating(text: str, scale: tuple[int, int] | None = None) -> int | None:
    """First integer in the text that looks like the rating itself.

    Non-candidates are consumed left to right: decimals, "scale of N"
    question echoes, and denominators of "k/N" or "k out of N" (the
    numerator k stays a candidate). The first candidate inside the scale
    wins; without a scale the first candidate wins. None when nothing
    qualifies.
    """
    for match in _NUMBER_GRAMMAR.finditer(text):
        if any(
            match.group(g)
            for g in ("decimal", "scale_echo", "bare_den", "orphan_den")
        ):
            continue
        for group in ("slash_num", "outof_num", "bare"):
            if match.group(group):
                value = int(match.group(group))
                if scale is None or scale[0] <= value <= scale[1]:
                    return value
    return None


def extract_technique(text: str, labels: tuple[str, ...]) -> str | None:
    """Earliest label mentioned in the text; ties go to the longer label."""
    lowered = text.lower()
    best = None
    for label in labels:
        pos = lowered.find(label.lower())
        if pos < 0:
            continue
        if best is None or (pos, -len(label)) < (best[0], -len(best[1])):
            best = (pos, label)
    return best[1] if best else None


def prediction_followed_rate(values) -> float:
    """Fraction of responses from which a value could be extracted."""
    values = list(values)
    if not values:
        raise InvalidInput("no values")
    return sum(v is not None for v in values) / len(values)


# -- numeric agreement ------------------------------------------------------------------------

@dataclass(frozen=True)
class MaeResult:
    value: float | None
    used: int
    total: int


def mae(predictions, references) -> MaeResult:
    """Mean absolute error over pairs whose prediction extracted.

    Pairs with a None prediction are excluded from the mean but counted,
    so callers can report the error and the extraction shortfall apart.
    """
    predictions, references = list(predictions), list(references)
    if len(predictions) != len(references):
        raise InvalidInput("prediction/reference length mismatch")
    if not predictions:
        raise InvalidInput("no pairs")
    errors = [
        abs(float(p) - float(r))
        for p, r in zip(predictions, references)
        if p is not None
    ]
    if not errors:
        return MaeResult(None, 0, len(predictions))
    return MaeResult(float(np.mean(errors)), len(errors), len(predictions))


def accuracy_within(predictions, references, tolerance: int = 0) -> float:
    """Fraction of pairs within tolerance; failed extractions count as misses."""
    predictions, references = list(predictions), list(references)
    if len(predictions) != len(references):
        raise InvalidInput("prediction/reference length mismatch")
    if not predictions:
        raise InvalidInput("no pairs")
    hits = sum(
        p is not None and abs(float(p) - float(r)) <= tolerance
        for p, r in zip(predictions, references)
    )
    return hits / len(predictions)


# -- n-gram overlap --------------------------------------------------------------------------

def _ngram_counts(tokens: list[str], n: int) -> dict[tuple, int]:
    counts: dict[tuple, int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def bleu_avg(candidate: str, references, max_order: int = 4) -> float:
    """Average of clipped-precision BLEU over orders 1..max_order.

    Candidate counts are clipped by the per-gram maximum across
    references; the brevity penalty uses the reference length closest to
    the candidate (ties to the shorter). Orders where the candidate has
    no n-grams at all are left out of the average, so a short text
    scored against itself still reaches 1.0.
    """
    references = [r for r in references if r is not None]
    if not references:
        raise InvalidInput("no references")
    cand = tokenize(candidate)
    refs = [tokenize(r) for r in references]
    if not cand:
        return 0.0
    c = len(cand)
    r = min((len(ref) for ref in refs), key=lambda n: (abs(n - c), n))
    brevity = 1.0 if c > r else float(np.exp(1.0 - r / c))
    precisions = []
    for n in range(1, max_order + 1):
        cand_counts = _ngram_counts(cand, n)
        if not cand_counts:
            continue
        clipped = 0
        for gram, count in cand_counts.items():
            best = max(_ngram_counts(ref, n).get(gram, 0) for ref in refs)
            clipped += min(count, best)
        precisions.append(clipped / sum(cand_counts.values()))
    return brevity * float(np.mean(precisions))


# -- sentiment -------------------------------------------------------------------------------

_POSITIVE = frozenset(
    """beautiful lovely excellent great good clean clear expressive singing warm
    crisp fluent accurate steady confident musical sensitive polished controlled
    even nuanced convincing secure elegant effortless""".split()
)
_NEGATIVE = frozenset(
    """bad poor harsh muddy blurry uneven rushed sloppy stiff flat dull weak
    wrong inaccurate unstable heavy forced tense messy mechanical laboured
    labored shaky careless""".split()
)
_NEGATORS = frozenset("not no never hardly without lacks lacking isn't wasn't aren't don't doesn't didn't".split())
_INTENSIFIERS = frozenset("very extremely really quite remarkably exceptionally".split())

SENTIMENT_BINS = 5


def check_sentiment_vector(vector) -> np.ndarray:
    """Validate a five-bin sentiment distribution from any vectorizer."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (SENTIMENT_BINS,):
        raise AdapterError(f"sentiment vector must have shape ({SENTIMENT_BINS},), got {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise AdapterError("sentiment vector must be finite and non-negative")
    if abs(float(v.sum()) - 1.0) > 1e-6:
        raise AdapterError(f"sentiment vector must sum to 1, got {v.sum()}")
    return v


class LexiconSentimentVectorizer:
    """Rule lexicon over performance-feedback vocabulary.

    Each sentiment word scores +-1, doubled by a nearby intensifier and
    flipped by a nearby negator, then lands in one of five bins from
    strongly negative to strongly positive. Text without sentiment words
    is all-neutral.
    """

    def __call__(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        counts = np.zeros(SENTIMENT_BINS, dtype=np.float64)
        for i, tok in enumerate(tokens):
            if tok in _POSITIVE:
                score = 1
            elif tok in _NEGATIVE:
                score = -1
            else:
                continue
            window = tokens[max(0, i - 2) : i]
            if any(w in _NEGATORS for w in window):
                score = -score
            if any(w in _INTENSIFIERS for w in window):
                score *= 2
            counts[2 + score] += 1
        if counts.sum() == 0:
            counts[2] = 1.0
        return counts / counts.sum()


def sentiment_similarity(vector_a, vector_b) -> float:
    """Cosine between two 5-class sentiment probability vectors."""
    a = check_sentiment_vector(vector_a)
    b = check_sentiment_vector(vector_b)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


# -- embedding match --------------------------------------------------------------------------

class HashEmbedder:
    """Deterministic per-token unit vectors seeded from sha256.

    Identical tokens get identical vectors on every run and machine;
    distinct tokens get near-orthogonal ones at reasonable dimension.
    """

    def __init__(self, dim: int = 32):
        if dim < 2:
            raise InvalidInput("dim must be at least 2")
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, token: str) -> np.ndarray:
        cached = self._cache.get(token)
        if cached is not None:
            return cached
        seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "little")
        v = np.random.default_rng(seed).standard_normal(self.dim)
        v /= np.linalg.norm(v)
        self._cache[token] = v
        return v


def embedding_prf(candidate: str, reference: str, embedder=None) -> tuple[float, float, float]:
    """Greedy max-cosine precision, recall, and F1 between token sets."""
    embedder = embedder or HashEmbedder()
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    c_mat = np.stack([embedder(t) for t in cand])
    r_mat = np.stack([embedder(t) for t in ref])
    sims = c_mat @ r_mat.T
    precision = float(sims.max(axis=1).mean())
    recall = float(sims.max(axis=0).mean())
    if precision + recall <= 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def embedding_f1(candidate: str, references, embedder=None) -> float:
    """Best F1 against any reference."""
    references = [r for r in references if r is not None]
    if not references:
        raise InvalidInput("no references")
    embedder = embedder or HashEmbedder()
    return max(embedding_prf(candidate, r, embedder)[2] for r in references)


# -- published reference results ------------------------------------------------------------------

# Full-scale system results used to label report columns. Desk-scale
# models trained in this repository are not expected to reproduce them.
REFERENCE_TARGETS = {
    "prediction_followed_rate": 0.99,
    "rating_mae": 0.97,
    "sentiment_similarity": 0.52,
    "bleu_avg": 0.09,
    "embedding_f1": 0.88,
    "difficulty_accuracy_exact": 0.21,
    "difficulty_accuracy_within_one": 0.55,
    "technique_accuracy_exact": 0.37,
}
