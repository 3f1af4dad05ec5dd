"""Instruction-corpus compiler.

Dataset manifests come in six record shapes and all compile down to the
same flat example: (dataset, audio_ref, performer, task, question,
answer, scale). Free-text feedback expands into three to five
question-answer pairs, either through a pluggable generator or a
deterministic keyword fallback over the scoring rubric. Structured
records (rubric scores, overall ratings, difficulty levels, technique
labels, piece metadata) compile mechanically with fixed question texts.

Compilation is deterministic: the same manifest and seed produce a
byte-identical corpus file.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import asdict, dataclass
from importlib import resources
from statistics import median

import numpy as np

from .errors import AdapterError, InvalidInput, SchemaError

TASKS = (
    "assessment_open",
    "assessment_rating",
    "attribute",
    "rating_only",
    "difficulty",
    "technique",
    "contextual",
)

ARCHETYPES = ("feedback", "rubric", "rating", "difficulty", "technique", "contextual")

TECHNIQUES = (
    "trills",
    "octaves",
    "scales",
    "arpeggios",
    "ornaments",
    "repeated notes",
    "double notes",
)

OVERALL_RATING_QUESTION = "How would you rate the overall performance, in a scale of 10?"
DIFFICULTY_QUESTION = "How would you rate the difficulty of the piece on a scale of 9?"
TECHNIQUE_QUESTION = (
    "What's the most salient technique used in this recording? Choose from "
    "trills, octaves, scales, arpeggios, ornaments, repeated notes, double notes."
)
CONTEXT_QUESTION = "What is the composer and stylistic period of this piece?"
OVERALL_OPEN_QUESTION = "Give an overall assessment of this performance."

_GENERIC_QUESTIONS = (
    "What stands out when listening to this performance?",
    "What should the performer focus on when practicing?",
)

MIN_PAIRS, MAX_PAIRS = 3, 5


@dataclass(frozen=True)
class CorpusExample:
    dataset: str
    audio_ref: str
    performer: str
    task: str
    question: str
    answer: str
    scale: tuple[int, int] | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise SchemaError(f"unknown task {self.task!r}")
        if not self.question.strip() or not self.answer.strip():
            raise SchemaError("question and answer must be non-empty")

    def to_json(self) -> str:
        d = asdict(self)
        d["scale"] = list(self.scale) if self.scale else None
        return json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusExample":
        scale = tuple(d["scale"]) if d.get("scale") else None
        return cls(
            dataset=d["dataset"],
            audio_ref=d["audio_ref"],
            performer=d["performer"],
            task=d["task"],
            question=d["question"],
            answer=d["answer"],
            scale=scale,
        )


def load_rubric() -> dict:
    with resources.files("perfcoach.data").joinpath("neuropiano_rubric.json").open() as fh:
        return json.load(fh)


def _performer_of(record: dict) -> str:
    if record.get("performer"):
        return str(record["performer"])
    parts = str(record.get("audio_ref", "")).split("/")
    if len(parts) >= 3:
        return parts[-2]
    raise SchemaError(
        f"record {record.get('audio_ref')!r} has no performer and no "
        "dataset/performer/clip path to parse one from"
    )


def _sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p.strip() for p in parts if p.strip()]


# -- free-text feedback -----------------------------------------------------------

def fallback_feedback_pairs(feedback: str, rating=None, rubric: dict | None = None) -> list[dict]:
    """Deterministic expansion of free-text feedback into 3..5 pairs.

    Order: overall rating (when present), then rubric dimensions whose
    keywords appear (at most three, rubric order), then a closing
    overall-assessment pair, then generic padding up to the minimum.
    """
    if not feedback.strip():
        raise InvalidInput("empty feedback text")
    rubric = rubric or load_rubric()
    lowered = feedback.lower()
    sentences = _sentences(feedback)

    pairs: list[dict] = []
    if rating is not None:
        pairs.append(
            {
                "question": OVERALL_RATING_QUESTION,
                "answer": str(rating),
                "task": "assessment_rating",
                "scale": (1, 10),
            }
        )
    for dim in rubric["dimensions"]:
        if len([p for p in pairs if p["task"] == "attribute"]) >= 3:
            break
        hits = [kw for kw in dim["keywords"] if kw in lowered]
        if not hits:
            continue
        answer_bits = [s for s in sentences if any(kw in s.lower() for kw in hits)]
        pairs.append(
            {
                "question": dim["open_question"],
                "answer": " ".join(answer_bits) or feedback.strip(),
                "task": "attribute",
                "scale": None,
            }
        )
    pairs.append(
        {
            "question": OVERALL_OPEN_QUESTION,
            "answer": feedback.strip(),
            "task": "assessment_open",
            "scale": None,
        }
    )
    for generic in _GENERIC_QUESTIONS:
        if len(pairs) >= MIN_PAIRS:
            break
        pairs.append(
            {"question": generic, "answer": feedback.strip(), "task": "assessment_open", "scale": None}
        )
    return pairs[:MAX_PAIRS]


def compile_feedback(feedback: str, rating=None, generator=None, seed: int = 0,
                     rubric: dict | None = None) -> list[dict]:
    """Expand one feedback text into pairs, preferring the generator.

    A generator is any callable (feedback, seed) -> list of
    {question, answer} dicts. Output outside the 3..5 window or with
    empty fields is treated as a failed attempt and falls back to the
    keyword expansion.
    """
    if generator is not None:
        try:
            raw = generator(feedback, seed)
            pairs = [
                {
                    "question": str(p["question"]),
                    "answer": str(p["answer"]),
                    "task": str(p.get("task", "assessment_open")),
                    "scale": tuple(p["scale"]) if p.get("scale") else None,
                }
                for p in raw
            ]
            if not MIN_PAIRS <= len(pairs) <= MAX_PAIRS:
                raise AdapterError(f"generator produced {len(pairs)} pairs")
            if any(not p["question"].strip() or not p["answer"].strip() for p in pairs):
                raise AdapterError("generator produced an empty field")
            if any(p["task"] not in TASKS for p in pairs):
                raise AdapterError("generator produced an unknown task")
            return pairs
        except (AdapterError, KeyError, TypeError):
            pass
    return fallback_feedback_pairs(feedback, rating=rating, rubric=rubric)


# -- structured records ----------------------------------------------------------------

def _score_value(score, judge_policy: str):
    if isinstance(score, (list, tuple)):
        if not score:
            raise SchemaError("empty judge score list")
        if judge_policy == "median":
            return [int(round(median(score)))]
        if judge_policy == "expand":
            return [int(s) for s in score]
        raise SchemaError(f"unknown judge policy {judge_policy!r}")
    return [int(score)]


def _compile_record(dataset: str, archetype: str, record: dict, rubric: dict,
                    generator, seed: int, judge_policy: str) -> list[CorpusExample]:
    audio_ref = record.get("audio_ref")
    if not audio_ref:
        raise SchemaError("record missing audio_ref")
    performer = _performer_of(record)

    def make(task, question, answer, scale=None):
        return CorpusExample(
            dataset=dataset,
            audio_ref=audio_ref,
            performer=performer,
            task=task,
            question=question,
            answer=str(answer),
            scale=scale,
        )

    if archetype == "feedback":
        pairs = compile_feedback(
            record.get("feedback", ""),
            rating=record.get("rating"),
            generator=generator,
            seed=seed,
            rubric=rubric,
        )
        return [make(p["task"], p["question"], p["answer"], p["scale"]) for p in pairs]

    if archetype == "rubric":
        dims = record.get("dimensions")
        if not isinstance(dims, dict) or not dims:
            raise SchemaError(f"{audio_ref}: rubric record needs a dimensions map")
        by_name = {d["name"]: d for d in rubric["dimensions"]}
        lo, hi = rubric["scale"]
        out = []
        for name in sorted(dims):
            if name not in by_name:
                raise SchemaError(f"{audio_ref}: unknown rubric dimension {name!r}")
            entry = dims[name]
            comment = str(entry.get("comment", "")).strip()
            if comment:
                out.append(make("attribute", by_name[name]["open_question"], comment))
            if "score" in entry:
                for value in _score_value(entry["score"], judge_policy):
                    if not lo <= value <= hi:
                        raise SchemaError(
                            f"{audio_ref}: {name} score {value} outside {lo}..{hi}"
                        )
                    out.append(
                        make(
                            "assessment_rating",
                            by_name[name]["rating_question"],
                            value,
                            scale=(lo, hi),
                        )
                    )
        if not out:
            raise SchemaError(f"{audio_ref}: rubric record compiled to nothing")
        return out

    if archetype == "rating":
        rating = record.get("rating")
        if rating is None or not 1 <= float(rating) <= 10:
            raise SchemaError(f"{audio_ref}: rating must be in 1..10")
        return [make("rating_only", OVERALL_RATING_QUESTION, rating, scale=(1, 10))]

    if archetype == "difficulty":
        level = record.get("level")
        if level is None or not 1 <= int(level) <= 9:
            raise SchemaError(f"{audio_ref}: difficulty level must be in 1..9")
        return [make("difficulty", DIFFICULTY_QUESTION, int(level), scale=(1, 9))]

    if archetype == "technique":
        tech = record.get("technique")
        if tech not in TECHNIQUES:
            raise SchemaError(f"{audio_ref}: technique {tech!r} not one of {TECHNIQUES}")
        return [make("technique", TECHNIQUE_QUESTION, tech)]

    if archetype == "contextual":
        composer = str(record.get("composer", "")).strip()
        period = str(record.get("period", "")).strip()
        if not composer or not period:
            raise SchemaError(f"{audio_ref}: contextual record needs composer and period")
        return [make("contextual", CONTEXT_QUESTION, f"{composer}, {period}")]

    raise SchemaError(f"unknown archetype {archetype!r}")


# -- manifests -----------------------------------------------------------------------------

def compile_manifest(manifest: dict, generator=None, seed: int = 0,
                     judge_policy: str = "median") -> list[CorpusExample]:
    if not isinstance(manifest, dict):
        raise SchemaError("manifest must be an object")
    dataset = manifest.get("dataset")
    archetype = manifest.get("archetype")
    records = manifest.get("records")
    if not dataset or archetype not in ARCHETYPES or not isinstance(records, list):
        raise SchemaError("manifest needs dataset, a known archetype, and records")
    rubric = load_rubric()
    out: list[CorpusExample] = []
    for i, record in enumerate(records):
        out.extend(
            _compile_record(dataset, archetype, record, rubric, generator,
                            seed=seed + i, judge_policy=judge_policy)
        )
    return canonical_order(out)


def compile_manifests(manifests, generator=None, seed: int = 0,
                      judge_policy: str = "median") -> list[CorpusExample]:
    out: list[CorpusExample] = []
    for m in manifests:
        out.extend(compile_manifest(m, generator=generator, seed=seed,
                                    judge_policy=judge_policy))
    return canonical_order(out)


def canonical_order(examples) -> list[CorpusExample]:
    return sorted(examples, key=lambda e: (e.dataset, e.audio_ref, e.question, e.answer))


# -- corpus files ---------------------------------------------------------------------------

def write_corpus(path, examples) -> None:
    ordered = canonical_order(examples)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in ordered:
            fh.write(ex.to_json() + "\n")


def read_corpus(path) -> list[CorpusExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(CorpusExample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError, SchemaError) as exc:
                raise SchemaError(f"{path}:{line_no}: bad corpus line ({exc})")
    return out


# -- validation and splitting --------------------------------------------------------------------

def validate_corpus(examples) -> dict:
    """Structural check. Returns counts, per-task histogram, duplicate
    (audio_ref, question, answer) triples, and violations."""
    by_task: dict[str, int] = {}
    violations: list[str] = []
    seen: dict[tuple, int] = {}
    duplicates: list[tuple] = []
    for ex in examples:
        by_task[ex.task] = by_task.get(ex.task, 0) + 1
        key = (ex.audio_ref, ex.question, ex.answer)
        seen[key] = seen.get(key, 0) + 1
        if seen[key] == 2:
            duplicates.append(key)
        if ex.scale is not None:
            lo, hi = ex.scale
            try:
                value = float(ex.answer)
            except ValueError:
                violations.append(f"{ex.audio_ref}: scaled answer {ex.answer!r} is not a number")
                continue
            if not lo <= value <= hi:
                violations.append(
                    f"{ex.audio_ref}: answer {value} outside scale {lo}..{hi}"
                )
        if ex.task == "technique" and ex.answer not in TECHNIQUES:
            violations.append(f"{ex.audio_ref}: technique answer {ex.answer!r} unknown")
    return {
        "count": len(list(examples)),
        "by_task": by_task,
        "duplicates": duplicates,
        "violations": violations,
    }


def split_corpus(examples, train_fraction: float = 0.5, seed: int = 0):
    """Performer-disjoint split: every performer's examples land wholly
    in one side. Greedy assignment of shuffled performers toward the
    train_fraction target by example count."""
    if not 0.0 < train_fraction < 1.0:
        raise InvalidInput("train_fraction must be in (0, 1)")
    examples = canonical_order(examples)
    if not examples:
        raise InvalidInput("empty corpus")
    groups: dict[str, list[CorpusExample]] = {}
    for ex in examples:
        groups.setdefault(ex.performer, []).append(ex)
    performers = sorted(groups)
    if len(performers) == 1:
        warnings.warn(
            "corpus has a single performer; everything goes to train because "
            "a disjoint eval split is unachievable",
            stacklevel=2,
        )
        return list(examples), []
    order = np.random.default_rng(seed).permutation(len(performers))
    target_train = train_fraction * len(examples)
    train: list[CorpusExample] = []
    evaluation: list[CorpusExample] = []
    for idx in order:
        group = groups[performers[idx]]
        if len(train) < target_train:
            train.extend(group)
        else:
            evaluation.extend(group)
    if not evaluation:
        # fraction rounded everything into train; move the last-assigned group over
        last = groups[performers[order[-1]]]
        train = [ex for ex in train if ex.performer != last[0].performer]
        evaluation = last
    return canonical_order(train), canonical_order(evaluation)
