"""Objective evaluation harness.

An inference adapter is anything that can answer (question, audio_ref)
pairs. Value-seeking questions (ratings, difficulty, technique labels)
are retried up to the adapter's attempt budget until an answer parses;
instruction-tuned models get one attempt, looser baselines several.
The suite runs the whole corpus a few times with different seeds and
reports each metric as mean and spread, next to the published
full-scale reference value for that column.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from . import dsp
from .compiler import TECHNIQUES, CorpusExample, canonical_order
from .errors import AdapterError, EmptyEvaluation, InvalidInput
from .metrics import (
    REFERENCE_TARGETS,
    HashEmbedder,
    LexiconSentimentVectorizer,
    accuracy_within,
    bleu_avg,
    embedding_f1,
    extract_rating,
    extract_technique,
    mae,
    prediction_followed_rate,
    sentiment_similarity,
)

TUNED_ATTEMPTS = 1
BASELINE_ATTEMPTS = 5
DEFAULT_ITERATIONS = 3

_RATING_TASKS = ("assessment_rating", "rating_only")
_FREE_TASKS = ("assessment_open", "attribute", "contextual")


@runtime_checkable
class InferenceAdapter(Protocol):
    model_id: str
    max_attempts: int

    def respond(self, question: str, audio_ref: str, seed: int) -> str: ...


@dataclass(frozen=True)
class ModelResponse:
    text: str
    attempt_index: int  # 1-based
    params: dict


@dataclass(frozen=True)
class AskResult:
    text: str
    value: object  # parsed rating or technique label, None when nothing parsed
    attempts: tuple[ModelResponse, ...]


def ask_with_retries(adapter, question: str, audio_ref: str, seed: int = 0,
                     scale: tuple[int, int] | None = None,
                     technique_labels: tuple[str, ...] | None = None) -> AskResult:
    """Ask until the answer parses or the attempt budget runs out.

    Free-text questions take exactly one attempt. Attempt seeds are
    base seed times the budget plus the attempt offset, so retries never
    reuse a seed across suite iterations.
    """
    if scale is not None and technique_labels is not None:
        raise InvalidInput("ask for a rating or a label, not both")
    budget = max(1, int(adapter.max_attempts))
    wants_value = scale is not None or technique_labels is not None
    attempts: list[ModelResponse] = []
    value = None
    for attempt in range(1, budget + 1):
        attempt_seed = seed * budget + (attempt - 1)
        try:
            text = adapter.respond(question, audio_ref, seed=attempt_seed)
        except AdapterError as exc:
            raise AdapterError(
                f"adapter {adapter.model_id!r} failed on attempt {attempt}: {exc}",
                attempts=attempts,
            )
        attempts.append(ModelResponse(text=text, attempt_index=attempt,
                                      params={"seed": attempt_seed}))
        if not wants_value:
            break
        if scale is not None:
            value = extract_rating(text, scale)
        else:
            value = extract_technique(text, technique_labels)
        if value is not None:
            break
    return AskResult(text=attempts[-1].text, value=value, attempts=tuple(attempts))


# -- adapters -------------------------------------------------------------------------------

class MappingClipLoader:
    """Filterbanks served from an in-memory mapping."""

    def __init__(self, clips: dict):
        self._clips = dict(clips)

    def __call__(self, audio_ref: str) -> np.ndarray:
        if audio_ref not in self._clips:
            raise AdapterError(f"no clip loaded for {audio_ref!r}")
        return self._clips[audio_ref]


class DirectoryClipLoader:
    """Filterbanks computed from audio files (or read from matrix files)
    under a root directory, keyed by the corpus audio_ref."""

    def __init__(self, root):
        self.root = Path(root)
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, audio_ref: str) -> np.ndarray:
        if audio_ref in self._cache:
            return self._cache[audio_ref]
        path = self.root / audio_ref
        candidates = [path, path.with_suffix(".fbank")]
        found = next((p for p in candidates if p.is_file()), None)
        if found is None:
            raise AdapterError(f"no file for {audio_ref!r} under {self.root}")
        if found.suffix == ".fbank":
            fbank, _ = dsp.read_matrix(found)
        else:
            clip = dsp.resample(dsp.load_clip(found))
            fbank = dsp.compute_filterbank(clip)
        self._cache[audio_ref] = fbank
        return fbank


class LocalModelAdapter:
    """Runs questions through an in-process coach model."""

    def __init__(self, model, clip_loader, model_id: str = "local",
                 max_attempts: int = TUNED_ATTEMPTS, max_tokens: int = 48,
                 greedy: bool = True):
        self.model = model
        self.clip_loader = clip_loader
        self.model_id = model_id
        self.max_attempts = max_attempts
        self.max_tokens = max_tokens
        self.greedy = greedy

    def respond(self, question: str, audio_ref: str, seed: int) -> str:
        fbank = self.clip_loader(audio_ref)
        return self.model.generate_answer(
            fbank, question, max_tokens=self.max_tokens,
            seed=None if self.greedy else seed,
        )


class MockAdapter:
    """Deterministic synthetic responder for harness and service tests.

    ``follow_rate`` is the probability of actually answering a numeric
    question with a number; the rest of the time it rambles, which is
    what the retry budget exists for. All randomness is hashed from
    (salt, question, audio_ref, seed), so identical calls give identical
    text on any machine.
    """

    def __init__(self, model_id: str = "mock", max_attempts: int = TUNED_ATTEMPTS,
                 follow_rate: float = 1.0, salt: int = 0):
        if not 0.0 <= follow_rate <= 1.0:
            raise InvalidInput("follow_rate must be in [0, 1]")
        self.model_id = model_id
        self.max_attempts = max_attempts
        self.follow_rate = follow_rate
        self.salt = salt

    def _rng(self, question: str, audio_ref: str, seed: int) -> np.random.Generator:
        key = f"{self.salt}|{seed}|{audio_ref}|{question}".encode("utf-8")
        digest = hashlib.sha256(key).digest()
        return np.random.default_rng(int.from_bytes(digest[:8], "little"))

    def respond(self, question: str, audio_ref: str, seed: int) -> str:
        rng = self._rng(question, audio_ref, seed)
        if "Choose from" in question:
            label = TECHNIQUES[int(rng.integers(len(TECHNIQUES)))]
            return f"The most salient technique is {label}."
        hi = None
        for token in question.replace("?", " ").split():
            if token.isdigit():
                hi = int(token)
        if hi is not None:
            if rng.random() >= self.follow_rate:
                return "Hard to say without hearing the piece again."
            value = int(rng.integers(1, hi + 1))
            return f"I would say {value} out of {hi}."
        openers = (
            "The tempo is steady and the tone is warm.",
            "Phrasing is expressive but the pedal is blurry.",
            "Clean and confident playing with even scales.",
        )
        return openers[int(rng.integers(len(openers)))]


# -- the suite ------------------------------------------------------------------------------

def _aggregate(values: list) -> dict:
    usable = [float(v) for v in values if v is not None]
    if not usable:
        return {"mean": None, "std": None, "values": list(values)}
    std = float(np.std(usable, ddof=1)) if len(usable) >= 2 else None
    return {"mean": float(np.mean(usable)), "std": std, "values": list(values)}


def _iteration_metrics(adapter, examples, base_seed, vectorizer, embedder):
    """One pass over the corpus; returns (metric values, transcript rows)."""
    rows = []
    rating_preds, rating_refs = [], []
    difficulty_preds, difficulty_refs = [], []
    technique_preds, technique_refs = [], []
    free_scores = {"bleu_avg": [], "sentiment_similarity": [], "embedding_f1": []}

    free_refs: dict[tuple, list[str]] = {}
    for ex in examples:
        if ex.task in _FREE_TASKS:
            free_refs.setdefault((ex.audio_ref, ex.question), []).append(ex.answer)

    seen_free = set()
    for ex in examples:
        if ex.task in _RATING_TASKS:
            result = ask_with_retries(adapter, ex.question, ex.audio_ref,
                                      seed=base_seed, scale=ex.scale or (1, 10))
            rating_preds.append(result.value)
            rating_refs.append(float(ex.answer))
            references = [ex.answer]
        elif ex.task == "difficulty":
            result = ask_with_retries(adapter, ex.question, ex.audio_ref,
                                      seed=base_seed, scale=ex.scale or (1, 9))
            difficulty_preds.append(result.value)
            difficulty_refs.append(float(ex.answer))
            references = [ex.answer]
        elif ex.task == "technique":
            result = ask_with_retries(adapter, ex.question, ex.audio_ref,
                                      seed=base_seed, technique_labels=TECHNIQUES)
            technique_preds.append(result.value)
            technique_refs.append(ex.answer)
            references = [ex.answer]
        else:
            key = (ex.audio_ref, ex.question)
            if key in seen_free:
                continue
            seen_free.add(key)
            result = ask_with_retries(adapter, ex.question, ex.audio_ref, seed=base_seed)
            references = free_refs[key]
            candidate = result.text
            free_scores["bleu_avg"].append(bleu_avg(candidate, references))
            free_scores["sentiment_similarity"].append(
                max(
                    sentiment_similarity(vectorizer(candidate), vectorizer(r))
                    for r in references
                )
            )
            free_scores["embedding_f1"].append(embedding_f1(candidate, references, embedder))
        rows.append(
            {
                "task": ex.task,
                "audio_ref": ex.audio_ref,
                "question": ex.question,
                "references": references,
                "response": result.text,
                "value": result.value,
                "attempts": [
                    {"attempt_index": a.attempt_index, "seed": a.params["seed"], "text": a.text}
                    for a in result.attempts
                ],
            }
        )

    metrics: dict[str, float | None] = {}
    if rating_preds:
        metrics["prediction_followed_rate"] = prediction_followed_rate(rating_preds)
        metrics["rating_mae"] = mae(rating_preds, rating_refs).value
    if difficulty_preds:
        metrics["difficulty_accuracy_exact"] = accuracy_within(
            difficulty_preds, difficulty_refs, tolerance=0
        )
        metrics["difficulty_accuracy_within_one"] = accuracy_within(
            difficulty_preds, difficulty_refs, tolerance=1
        )
    if technique_preds:
        metrics["technique_accuracy_exact"] = float(
            np.mean([p == r for p, r in zip(technique_preds, technique_refs)])
        )
    for name, scores in free_scores.items():
        if scores:
            metrics[name] = float(np.mean(scores))
    return metrics, rows


def run_objective_suite(adapter, examples, iterations: int = DEFAULT_ITERATIONS,
                        seed: int = 0, out_dir=None,
                        vectorizer=None, embedder=None) -> dict:
    """Run the corpus ``iterations`` times and aggregate per metric.

    Writes one transcript file per iteration plus a report.json when
    out_dir is given; identical inputs produce identical bytes.
    """
    examples = list(examples)
    for ex in examples:
        if not isinstance(ex, CorpusExample):
            raise InvalidInput("examples must be corpus records")
    examples = canonical_order(examples)
    if not examples:
        raise EmptyEvaluation("no examples to evaluate")
    if iterations < 1:
        raise InvalidInput("iterations must be at least 1")
    vectorizer = vectorizer or LexiconSentimentVectorizer()
    embedder = embedder or HashEmbedder()

    per_iteration: list[dict] = []
    transcripts: list[list[dict]] = []
    for i in range(iterations):
        metrics, rows = _iteration_metrics(adapter, examples, seed + i, vectorizer, embedder)
        per_iteration.append(metrics)
        transcripts.append(rows)

    names = sorted({name for metrics in per_iteration for name in metrics})
    by_task: dict[str, int] = {}
    for ex in examples:
        by_task[ex.task] = by_task.get(ex.task, 0) + 1
    report = {
        "model_id": adapter.model_id,
        "iterations": iterations,
        "seed": seed,
        "counts": {"examples": len(examples), "by_task": by_task},
        "metrics": {
            name: dict(
                _aggregate([metrics.get(name) for metrics in per_iteration]),
                reference=REFERENCE_TARGETS.get(name),
            )
            for name in names
        },
    }

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, rows in enumerate(transcripts):
            path = out_dir / f"transcripts_iter{i}.jsonl"
            with open(path, "w", encoding="utf-8") as fh:
                for row in rows:
                    fh.write(json.dumps(dict(row, iteration=i), sort_keys=True,
                                        separators=(",", ":"), ensure_ascii=False) + "\n")
        with open(out_dir / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, sort_keys=True, indent=2, ensure_ascii=False)
            fh.write("\n")
    return report


def binomial_band(p: float, n: int, z: float = 2.5758293035489004) -> tuple[float, float]:
    """Two-sided normal-approximation band around a follow probability."""
    if not 0.0 <= p <= 1.0 or n < 1:
        raise InvalidInput("need p in [0, 1] and n >= 1")
    half = z * (p * (1.0 - p) / n) ** 0.5
    return max(0.0, p - half), min(1.0, p + half)
