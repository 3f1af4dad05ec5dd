"""HTTP coaching service.

POST /v1/ask answers a question about an uploaded clip (multipart) or a
preloaded one (JSON with clip_id), attaches any rating it can parse out
of the answer, and logs a transcript. The study endpoints run a blinded
listening study: each participant gets a fixed, seed-derived slate of
items with model names hidden behind shuffled labels, submits ratings
on a four-point scale, and the export unblinds server-side only.

Transcript ids are content-addressed, so two identical asks produce
identical responses apart from latency.
"""

from __future__ import annotations

import email
import hashlib
import json
import math
import re
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import dsp
from .compiler import load_rubric
from .errors import (
    AdapterError,
    ConflictError,
    InvalidAudio,
    InvalidConfig,
    InvalidInput,
    ValidationError,
)
from .metrics import extract_rating
from .stats import summarize_subjective
from .store import SessionStore, default_data_dir

RATING_SCALE = (1, 4)
_LABELS = ("A", "B", "C", "D", "E", "F")


# -- study configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class StudyItem:
    item_id: str
    audio_ref: str
    dataset_group: str
    responses: dict  # model name -> feedback text

    def __post_init__(self):
        if not self.item_id or not self.audio_ref or not self.dataset_group:
            raise InvalidConfig("study item needs item_id, audio_ref, dataset_group")
        if not self.responses:
            raise InvalidConfig(f"{self.item_id}: no model responses")
        if len(self.responses) > len(_LABELS):
            raise InvalidConfig(f"{self.item_id}: more responses than labels")

    def labels(self) -> tuple[str, ...]:
        return _LABELS[: len(self.responses)]


@dataclass
class ServiceConfig:
    study_items: list = field(default_factory=list)
    study_seed: int = 0
    items_per_participant: int = 10
    group_weights: dict | None = None
    categories: tuple = ("helpfulness",)
    max_audio_seconds: float = 60.0
    cors_origins: tuple = ("*",)  # the browser frontend may live on another origin

    def __post_init__(self):
        if self.items_per_participant < 1:
            raise InvalidConfig("items_per_participant must be positive")
        if self.max_audio_seconds <= 0:
            raise InvalidConfig("max_audio_seconds must be positive")
        if not self.categories:
            raise InvalidConfig("at least one rating category")
        ids = [item.item_id for item in self.study_items]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("duplicate study item ids")

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceConfig":
        items = [StudyItem(**item) for item in d.get("study_items", [])]
        return cls(
            study_items=items,
            study_seed=int(d.get("study_seed", 0)),
            items_per_participant=int(d.get("items_per_participant", 10)),
            group_weights=d.get("group_weights"),
            categories=tuple(d.get("categories", ("helpfulness",))),
            max_audio_seconds=float(d.get("max_audio_seconds", 60.0)),
            cors_origins=tuple(d.get("cors_origins", ("*",))),
        )


def _hash_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def largest_remainder_quotas(weights: dict, total: int) -> dict:
    """Integer quotas that sum to total, apportioned by weight with the
    leftover going to the largest fractional remainders (ties by name)."""
    if total < 0:
        raise InvalidInput("total must be non-negative")
    names = sorted(weights)
    wsum = float(sum(weights[g] for g in names))
    if not names or wsum <= 0:
        raise InvalidInput("weights must be positive")
    shares = {g: total * weights[g] / wsum for g in names}
    quotas = {g: math.floor(shares[g]) for g in names}
    leftover = total - sum(quotas.values())
    by_remainder = sorted(names, key=lambda g: (-(shares[g] - quotas[g]), g))
    for g in by_remainder[:leftover]:
        quotas[g] += 1
    return quotas


def participant_assignment(config: ServiceConfig, participant: str) -> list[StudyItem]:
    """The participant's item slate: per-group draws without replacement,
    then a final presentation shuffle. Purely a function of the study
    seed and the participant name."""
    by_group: dict[str, list[StudyItem]] = {}
    for item in config.study_items:
        by_group.setdefault(item.dataset_group, []).append(item)
    for group in by_group:
        by_group[group].sort(key=lambda it: it.item_id)
    weights = config.group_weights or {g: 1.0 for g in by_group}
    quotas = largest_remainder_quotas(weights, config.items_per_participant)
    chosen: list[StudyItem] = []
    for group in sorted(quotas):
        pool = by_group.get(group, [])
        if quotas[group] > len(pool):
            raise InvalidConfig(
                f"group {group!r} has {len(pool)} items but needs {quotas[group]}"
            )
        perm = _hash_rng(config.study_seed, participant, group, "pool").permutation(len(pool))
        chosen.extend(pool[i] for i in perm[: quotas[group]])
    order = _hash_rng(config.study_seed, participant, "order").permutation(len(chosen))
    return [chosen[i] for i in order]


def blinding(config: ServiceConfig, participant: str, item: StudyItem) -> dict:
    """label -> model, fixed per (seed, participant, item)."""
    models = sorted(item.responses)
    perm = _hash_rng(config.study_seed, participant, item.item_id, "blind").permutation(
        len(models)
    )
    return {label: models[perm[i]] for i, label in enumerate(item.labels())}


# -- model backends ----------------------------------------------------------------------

class CoachModelBackend:
    """Answers through an in-process coach model, greedy decoding."""

    def __init__(self, model, model_id: str = "coach-local", max_tokens: int = 48):
        self.model = model
        self.model_id = model_id
        self.max_tokens = max_tokens

    def answer(self, fbank: np.ndarray, question: str) -> str:
        return self.model.generate_answer(fbank, question, max_tokens=self.max_tokens)


class CannedBackend:
    """Fixed text per question; for demos and service tests."""

    def __init__(self, mapping: dict | None = None,
                 default: str = "The tempo is steady. I would say 7 out of 10.",
                 model_id: str = "canned"):
        self.mapping = dict(mapping or {})
        self.default = default
        self.model_id = model_id

    def answer(self, fbank: np.ndarray, question: str) -> str:
        return self.mapping.get(question, self.default)


# -- request decoding ----------------------------------------------------------------------

def parse_multipart(content_type: str, body: bytes) -> dict:
    """name -> (filename, bytes) via the stdlib email machinery."""
    header = f"Content-Type: {content_type}\r\nMIME-Version: 1.0\r\n\r\n".encode("latin-1")
    message = email.message_from_bytes(header + body)
    if not message.is_multipart():
        raise InvalidInput("body is not multipart")
    fields: dict[str, tuple] = {}
    for part in message.walk():
        if part.get_content_maintype() == "multipart":
            continue
        name = part.get_param("name", header="content-disposition")
        if not name:
            continue
        payload = part.get_payload(decode=True)
        if payload is None:
            payload = part.get_payload().encode("utf-8")
        fields[str(name)] = (part.get_filename(), payload)
    if not fields:
        raise InvalidInput("multipart body has no named fields")
    return fields


def _question_scale(question: str) -> tuple[int, int] | None:
    found = None
    for match in re.finditer(r"scale\s+of\s+(\d+)", question, flags=re.IGNORECASE):
        found = int(match.group(1))
    return (1, found) if found else None


# -- the app ------------------------------------------------------------------------------

def create_app(config: ServiceConfig, backend, store: SessionStore | None = None,
               clip_loader=None) -> FastAPI:
    if store is None:
        store = SessionStore(default_data_dir() / "sessions.jsonl")
    if config.study_items:
        participant_assignment(config, "preflight")  # fail fast on infeasible quotas
    rubric = load_rubric()
    rubric_questions = {
        d["name"]: (d["rating_question"], tuple(rubric["scale"])) for d in rubric["dimensions"]
    }

    app = FastAPI()
    app.state.store = store
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
            expose_headers=["X-Audio-Truncated"],
        )

    def error(status: int, message: str, **extra):
        return JSONResponse(status_code=status, content={"error": message, **extra})

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "model_id": backend.model_id, "records": store.last_seq}

    # -- asking ------------------------------------------------------------------

    def _fbank_from_upload(data: bytes):
        if not data:
            raise InvalidAudio("empty audio upload")
        with tempfile.NamedTemporaryFile(suffix=".audio") as tmp:
            tmp.write(data)
            tmp.flush()
            clip = dsp.load_clip(tmp.name)
        truncated = False
        limit = int(config.max_audio_seconds * clip.rate)
        if clip.samples.size > limit:
            clip = dsp.AudioClip(clip.samples[:limit].copy(), clip.rate)
            truncated = True
        clip = dsp.resample(clip)
        return dsp.compute_filterbank(clip), truncated

    @app.post("/v1/ask")
    async def ask(request: Request):
        content_type = request.headers.get("content-type", "")
        body = await request.body()
        question = ""
        question_id = None
        audio_bytes = None
        clip_id = None
        try:
            if content_type.startswith("multipart/form-data"):
                fields = parse_multipart(content_type, body)
                if "question" in fields:
                    question = fields["question"][1].decode("utf-8")
                if "question_id" in fields:
                    question_id = fields["question_id"][1].decode("utf-8")
                if "clip_id" in fields:
                    clip_id = fields["clip_id"][1].decode("utf-8")
                if "audio" in fields:
                    audio_bytes = fields["audio"][1]
            elif content_type.startswith("application/json"):
                try:
                    payload = json.loads(body)
                except json.JSONDecodeError as exc:
                    return error(400, f"unreadable JSON body: {exc}")
                if not isinstance(payload, dict):
                    return error(400, "JSON body must be an object")
                question = str(payload.get("question", ""))
                question_id = payload.get("question_id")
                clip_id = payload.get("clip_id")
            else:
                return error(400, f"unsupported content type {content_type!r}")
        except (InvalidInput, UnicodeDecodeError) as exc:
            return error(400, f"undecodable request: {exc}")

        if (audio_bytes is None) == (clip_id is None):
            return error(400, "provide exactly one of an audio upload or a clip_id")

        scale = None
        if question_id is not None:
            if question_id not in rubric_questions:
                return error(400, f"unknown question_id {question_id!r}")
            question, scale = rubric_questions[question_id]
        elif question.strip():
            scale = _question_scale(question)
        if not question.strip():
            return error(400, "question must be non-empty")

        truncated = False
        try:
            if audio_bytes is not None:
                fbank, truncated = _fbank_from_upload(audio_bytes)
                audio_digest = hashlib.sha256(audio_bytes).hexdigest()[:12]
            else:
                if clip_loader is None:
                    return error(404, "no clip store configured")
                fbank = clip_loader(str(clip_id))
                audio_digest = str(clip_id)
        except InvalidAudio as exc:
            return error(400, f"invalid audio: {exc}")
        except AdapterError as exc:
            return error(404, str(exc))

        started = time.perf_counter()
        try:
            response_text = backend.answer(fbank, question)
        except Exception as exc:
            failure = {
                "question": question,
                "audio": audio_digest,
                "model_id": backend.model_id,
                "error": str(exc),
            }
            transcript_id = "ask-" + _content_id(failure)
            store.append("ask_error", dict(failure, transcript_id=transcript_id))
            return error(500, "model backend failed", transcript_id=transcript_id)
        latency_ms = (time.perf_counter() - started) * 1000.0

        value = extract_rating(response_text, scale) if scale else None
        result = {
            "question": question,
            "audio": audio_digest,
            "response": response_text,
            "value": value,
            "scale": list(scale) if scale else None,
            "truncated": truncated,
            "model_id": backend.model_id,
        }
        transcript_id = "ask-" + _content_id(result)
        store.append("ask", dict(result, transcript_id=transcript_id))
        headers = {"X-Audio-Truncated": "true"} if truncated else {}
        return JSONResponse(
            content=dict(result, transcript_id=transcript_id, latency_ms=latency_ms),
            headers=headers,
        )

    # -- the study ----------------------------------------------------------------

    def _rated_keys() -> set:
        return {
            (
                r["payload"]["participant"],
                r["payload"]["item_id"],
                r["payload"]["label"],
                r["payload"]["category"],
            )
            for r in store.records("study_rating")
        }

    def _item_complete(participant, item, rated) -> bool:
        return all(
            (participant, item.item_id, label, category) in rated
            for label in item.labels()
            for category in config.categories
        )

    @app.get("/v1/study/next")
    def study_next(participant: str = ""):
        if not participant.strip():
            return error(400, "participant is required")
        if not config.study_items:
            return error(400, "no study configured")
        slate = participant_assignment(config, participant)
        rated = _rated_keys()
        completed = sum(_item_complete(participant, item, rated) for item in slate)
        progress = {"completed": completed, "total": len(slate)}
        for item in slate:
            if _item_complete(participant, item, rated):
                continue
            labels = blinding(config, participant, item)
            return {
                "participant": participant,
                "item_id": item.item_id,
                "audio_ref": item.audio_ref,
                "dataset_group": item.dataset_group,
                "categories": list(config.categories),
                "responses": [
                    {"label": label, "text": item.responses[model]}
                    for label, model in sorted(labels.items())
                ],
                "progress": progress,
            }
        return {"participant": participant, "complete": True, "progress": progress}

    def _validate_rating(payload: dict) -> dict:
        for key in ("participant", "item_id", "label", "category", "rating"):
            if key not in payload:
                raise ValidationError(f"missing {key!r}")
        participant = str(payload["participant"]).strip()
        if not participant:
            raise ValidationError("participant must be non-empty")
        items = {item.item_id: item for item in config.study_items}
        item = items.get(payload["item_id"])
        if item is None:
            raise ValidationError(f"unknown item {payload['item_id']!r}")
        slate_ids = {it.item_id for it in participant_assignment(config, participant)}
        if item.item_id not in slate_ids:
            raise ValidationError(f"item {item.item_id!r} is not assigned to {participant!r}")
        label = payload["label"]
        if label not in item.labels():
            raise ValidationError(f"label {label!r} not offered for this item")
        category = payload["category"]
        if category not in config.categories:
            raise ValidationError(f"unknown category {category!r}")
        rating = payload["rating"]
        if not isinstance(rating, int) or isinstance(rating, bool) \
                or not RATING_SCALE[0] <= rating <= RATING_SCALE[1]:
            raise ValidationError(
                f"rating must be an integer in {RATING_SCALE[0]}..{RATING_SCALE[1]}"
            )
        if (participant, item.item_id, label, category) in _rated_keys():
            raise ConflictError("this label was already rated in this category")
        model = blinding(config, participant, item)[label]
        return {
            "participant": participant,
            "item_id": item.item_id,
            "label": label,
            "model": model,
            "category": category,
            "dataset_group": item.dataset_group,
            "rating": rating,
        }

    @app.post("/v1/study/rating")
    async def study_rating(request: Request):
        try:
            payload = json.loads(await request.body())
        except json.JSONDecodeError as exc:
            return error(400, f"unreadable JSON body: {exc}")
        if not isinstance(payload, dict):
            return error(400, "JSON body must be an object")
        try:
            record = _validate_rating(payload)
        except ValidationError as exc:
            return error(400, str(exc))
        except ConflictError as exc:
            return error(409, str(exc))
        stored = store.append("study_rating", record)
        return {"status": "recorded", "seq": stored["seq"]}

    @app.get("/v1/study/export")
    def study_export(format: str = "raw"):
        ratings = [r["payload"] for r in store.records("study_rating")]
        if format == "raw":
            return {"ratings": ratings}
        if format == "summary":
            if not ratings:
                return {"cells": [], "comparisons": []}
            return summarize_subjective(ratings, scale=RATING_SCALE)
        return error(400, f"unknown export format {format!r}")

    return app


def _content_id(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
