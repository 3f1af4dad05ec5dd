"""Deterministic synthetic fixtures: clips, filterbanks, captions, and
question-answer items sized for one CPU core.

The eight-item tuning set deliberately reuses each question across two
acoustically different clips (pure tone vs noise), so a model can only
memorize it by actually listening.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import audio_io, dsp
from .compiler import TECHNIQUES, load_rubric
from .errors import InvalidInput
from .model import CoachModel, desk_config
from .tokenizers import BpeTokenizer, WordTokenizer

RATE = dsp.TARGET_RATE


def synth_samples(kind: str, seconds: float = 0.6, rate: int = RATE, seed: int = 0,
                  freq: float = 440.0) -> np.ndarray:
    n = int(round(seconds * rate))
    t = np.arange(n) / rate
    rng = np.random.default_rng(seed)
    if kind == "sine":
        x = 0.5 * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    elif kind == "noise":
        x = 0.3 * rng.standard_normal(n)
    elif kind == "chirp":
        f1 = freq * 4
        phase = 2 * np.pi * (freq * t + (f1 - freq) * t * t / (2 * seconds))
        x = 0.5 * np.sin(phase)
    elif kind == "am":
        x = 0.5 * np.sin(2 * np.pi * freq * t) * (0.5 + 0.5 * np.sin(2 * np.pi * 3.0 * t))
    else:
        raise InvalidInput(f"unknown clip kind {kind!r}")
    return np.clip(x, -1.0, 1.0)


def write_toy_clip(path, kind: str, seconds: float = 0.6, seed: int = 0,
                   freq: float = 440.0, rate: int = RATE) -> None:
    x = synth_samples(kind, seconds, rate, seed, freq)
    if str(path).endswith(".flac"):
        audio_io.write_flac(path, x, rate)
    else:
        audio_io.write_wav(path, x, rate)


@lru_cache(maxsize=64)
def toy_fbank(kind: str, seed: int = 0, seconds: float = 0.6, freq: float = 440.0) -> np.ndarray:
    clip = dsp.AudioClip(synth_samples(kind, seconds, RATE, seed, freq), RATE)
    fb = dsp.compute_filterbank(clip)
    fb.flags.writeable = False
    return fb


# -- stage 1: audio-caption pairs ------------------------------------------------

_CAPTIONS = [
    ("sine", 440.0, "a pure steady tone at a moderate pitch"),
    ("sine", 880.0, "a pure steady tone at a high pitch"),
    ("noise", 440.0, "a broadband noisy texture with no clear pitch"),
    ("chirp", 110.0, "a sweep rising from low to high"),
    ("am", 440.0, "a pulsing tone with a slow tremolo"),
    ("sine", 220.0, "a pure steady tone at a low pitch"),
]


def caption_items() -> list[tuple[np.ndarray, str]]:
    return [
        (toy_fbank(kind, seed=i, freq=freq), caption)
        for i, (kind, freq, caption) in enumerate(_CAPTIONS)
    ]


# -- stages 2 and 3: question-answer items ------------------------------------------

_QA_TEMPLATES = [
    ("Is the playing using legato or staccato articulation?", "legato", "staccato"),
    ("How would you rate the overall performance, in a scale of 10?", "8", "4"),
    ("How would you rate the difficulty of the piece on a scale of 9?", "3", "7"),
    ("Is the tempo steady or rushed?", "steady", "rushed"),
]


def overfit_items() -> list[tuple[np.ndarray, str, str]]:
    """Eight (filterbank, question, answer) tuples; each question appears
    with both a tonal clip and a noise clip mapping to different answers."""
    items = []
    for i, (question, tone_answer, noise_answer) in enumerate(_QA_TEMPLATES):
        items.append((toy_fbank("sine", seed=10 + i, freq=330.0 * (i + 1)), question, tone_answer))
        items.append((toy_fbank("noise", seed=20 + i), question, noise_answer))
    return items


def multitask_items() -> list[tuple[np.ndarray, str, str]]:
    """Small mixed set standing in for the broad instruction mixture."""
    extra = [
        (toy_fbank("chirp", seed=31, freq=110.0), "What is happening to the pitch?",
         "the pitch rises through the clip"),
        (toy_fbank("am", seed=32), "Describe the loudness of this clip.",
         "the loudness pulses with a slow tremolo"),
        (toy_fbank("sine", seed=33, freq=660.0), "Does the clip contain a clear pitch?",
         "yes a single clear pitch"),
        (toy_fbank("noise", seed=34), "Does the clip contain a clear pitch?",
         "no the clip is noisy"),
    ]
    return overfit_items() + extra


def all_toy_texts() -> list[str]:
    texts = [c for _, c in caption_items()]
    for _, q, a in multitask_items():
        texts.extend([q, a])
    # rating answers over the full scales keep digits in the vocab
    texts.extend(str(k) for k in range(1, 11))
    return texts


def build_toy_model(seed: int = 0) -> CoachModel:
    texts = all_toy_texts()
    lm_tok = BpeTokenizer.train(texts, num_merges=120)
    aligner_tok = WordTokenizer.train(texts)
    config = desk_config(lm_tok.vocab_size, aligner_tok.vocab_size, seed=seed)
    return CoachModel(config, lm_tok, aligner_tok)


# -- manifest fixtures ---------------------------------------------------------------

_FEEDBACK_TEXTS = [
    "The tempo rushes in the outer sections. Pitch accuracy is good overall. "
    "Work on softer dynamics in the middle.",
    "Lovely legato touch and singing tone. The pedal is a little blurry in "
    "fast passages. Balance the melody over the accompaniment.",
    "Rhythm is unstable near the coda and the timing drifts. The phrasing "
    "feels short-breathed. More expressive shaping would help.",
    "Strong technical fluency, though a few stumbles remain. The dynamics "
    "are flat. Try a wider crescendo into the climax.",
    "Intonation of the inner voices suffers and there are wrong notes in "
    "bar twelve. The staccato articulation is crisp.",
    "A warm timbre with good colour changes. Tempo is steady. The left "
    "hand overpowers the melody at times.",
]


def feedback_manifest(seed: int = 0) -> dict:
    """Free-text feedback records with ratings on every other record."""
    rng = np.random.default_rng(seed)
    records = []
    for i, text in enumerate(_FEEDBACK_TEXTS):
        rec = {
            "audio_ref": f"conservatory/student{i % 3:02d}/take{i:03d}.wav",
            "feedback": text,
        }
        if i % 2 == 0:
            rec["rating"] = int(rng.integers(1, 11))
        records.append(rec)
    return {"dataset": "conservatory", "archetype": "feedback", "records": records}


def rubric_manifest(n_recordings: int = 104, n_performers: int = 8, seed: int = 0) -> dict:
    """Rubric-scored recordings in the shape of a graded exam corpus:
    each record scores a few dimensions on the shared 1..6 scale and
    comments on one of them."""
    rubric = load_rubric()
    names = [d["name"] for d in rubric["dimensions"]]
    lo, hi = rubric["scale"]
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_recordings):
        performer = f"p{i % n_performers:02d}"
        picked = [names[(i + k) % len(names)] for k in range(3)]
        dims = {}
        for k, name in enumerate(picked):
            entry = {"score": int(rng.integers(lo, hi + 1))}
            if k == 0:
                entry["comment"] = f"The {name} slips in the development section."
            dims[name] = entry
        records.append(
            {
                "audio_ref": f"neuropiano/{performer}/clip{i:03d}.wav",
                "dimensions": dims,
            }
        )
    return {"dataset": "neuropiano", "archetype": "rubric", "records": records}


def assorted_manifests(seed: int = 0) -> list[dict]:
    """One small manifest per archetype, suitable for corpus round trips."""
    rng = np.random.default_rng(seed)
    composers = [("Bach", "baroque"), ("Mozart", "classical"), ("Chopin", "romantic")]
    rating_records = [
        {"audio_ref": f"jury/cand{i:02d}/final.wav", "rating": int(rng.integers(1, 11))}
        for i in range(4)
    ]
    difficulty_records = [
        {"audio_ref": f"syllabus/book{i:02d}/piece.wav", "level": int(rng.integers(1, 10))}
        for i in range(4)
    ]
    technique_records = [
        {"audio_ref": f"etudes/set{i:02d}/etude.wav", "technique": TECHNIQUES[i % len(TECHNIQUES)]}
        for i in range(4)
    ]
    contextual_records = [
        {"audio_ref": f"repertoire/disc{i:02d}/track.wav", "composer": c, "period": p}
        for i, (c, p) in enumerate(composers)
    ]
    return [
        feedback_manifest(seed=seed),
        rubric_manifest(n_recordings=12, n_performers=4, seed=seed + 1),
        {"dataset": "jury", "archetype": "rating", "records": rating_records},
        {"dataset": "syllabus", "archetype": "difficulty", "records": difficulty_records},
        {"dataset": "etudes", "archetype": "technique", "records": technique_records},
        {"dataset": "repertoire", "archetype": "contextual", "records": contextual_records},
    ]


def toy_study_config(items_per_participant: int = 10, seed: int = 0,
                     categories: tuple = ("helpfulness", "specificity")):
    """Blinded-study fixture: three dataset groups weighted 50/30/20 with
    pools just big enough for a ten-item slate, two responders per item."""
    from .service import ServiceConfig, StudyItem

    specs = [("conservatory", 6), ("neuropiano", 4), ("etudes", 3)]
    items = []
    for group, count in specs:
        for i in range(count):
            items.append(
                StudyItem(
                    item_id=f"{group}-{i:02d}",
                    audio_ref=f"{group}/p{i % 3:02d}/clip{i:03d}.wav",
                    dataset_group=group,
                    responses={
                        "coach": f"The phrasing in take {i} breathes well and the tempo holds.",
                        "base": f"Recording {i} sounds fine overall.",
                    },
                )
            )
    return ServiceConfig(
        study_items=items,
        study_seed=seed,
        items_per_participant=items_per_participant,
        group_weights={"conservatory": 0.5, "neuropiano": 0.3, "etudes": 0.2},
        categories=categories,
    )
