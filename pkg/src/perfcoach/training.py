"""Three-stage training orchestration.

Stage 1 trains the encoder and aligner on audio-caption pairs with the
unweighted sum of contrastive, matching, and captioning losses while
the language model stays untouched. Stage 2 instruction-tunes on a
synthetic multitask set, and stage 3 on the compiled coaching corpus;
both freeze the LM backend and optimize encoder, aligner, and the audio
marker with the response-only NLL.

Learning rate follows a linear warmup into cosine annealing. Data order
is a stateless function of (seed, epoch), so resuming from a checkpoint
replays the exact same stream. Optimizer moments ride along in the
checkpoint, which makes resumed curves match uninterrupted ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InvalidConfig, InvalidInput, StageOrderError
from .model import CoachModel, ModelConfig
from .tokenizers import BpeTokenizer, WordTokenizer


def lr_at(step: int, base_lr: float, warmup_steps: int, max_steps: int,
          lr_min: float = 0.0) -> float:
    """Learning rate at a 1-indexed step: linear 0 -> base_lr across the
    warmup, cosine base_lr -> lr_min afterwards. Exactly base_lr at the
    warmup boundary and exactly lr_min at max_steps."""
    if step < 1:
        raise InvalidInput("step is 1-indexed")
    if warmup_steps < 0 or max_steps <= warmup_steps:
        raise InvalidConfig("need 0 <= warmup_steps < max_steps")
    if step <= warmup_steps:
        return base_lr * step / warmup_steps
    if step >= max_steps:
        return lr_min
    progress = (step - warmup_steps) / (max_steps - warmup_steps)
    return lr_min + (base_lr - lr_min) * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass(frozen=True)
class StageConfig:
    stage: int
    max_steps: int
    base_lr: float = 5e-5  # full-scale recipe default; desk runs override
    warmup_steps: int = 2000
    lr_min: float = 0.0
    batch_size: int = 4
    seed: int = 0
    allow_fresh_init: bool = False
    tune_backend: bool = False
    log_every: int = 1
    checkpoint_every: int | None = None

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise InvalidConfig(f"unknown stage {self.stage}")
        if self.tune_backend and self.stage == 1:
            raise InvalidConfig("stage 1 loss never reaches the language backend")
        if self.max_steps < 1:
            raise InvalidConfig("max_steps must be >= 1")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.stage == 1 and self.batch_size < 2:
            raise InvalidConfig("stage 1 needs batches of >= 2 for the contrastive term")


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics: list[dict] = field(default_factory=list)
    final_loss: float = float("nan")


# -- checkpoint payloads -------------------------------------------------------

def model_payload(model: CoachModel, completed_stages, stage=None, step=0,
                  optimizer: torch.optim.Optimizer | None = None) -> dict:
    return {
        "model_config": model.config.to_dict(),
        "lm_tokenizer": model.lm_tokenizer.to_dict(),
        "aligner_tokenizer": model.aligner_tokenizer.to_dict(),
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "completed_stages": sorted(set(completed_stages)),
        "stage": stage,
        "step": step,
    }


def save_model(path, model: CoachModel, completed_stages, stage=None, step=0,
               optimizer=None) -> None:
    save_checkpoint(path, model_payload(model, completed_stages, stage, step, optimizer))


def load_model(path) -> tuple[CoachModel, dict]:
    payload = load_checkpoint(path)
    config = ModelConfig.from_dict(payload["model_config"])
    model = CoachModel(
        config,
        BpeTokenizer.from_dict(payload["lm_tokenizer"]),
        WordTokenizer.from_dict(payload["aligner_tokenizer"]),
    )
    model.load_state_dict(payload["model_state"])
    return model, payload


# -- data order -----------------------------------------------------------------

def batch_indices(step: int, n_items: int, batch_size: int, seed: int) -> list[int]:
    """Deterministic, stateless batch composition for a 1-indexed step.

    Items are drawn from a per-epoch permutation keyed by (seed, epoch),
    wrapping around when the tail of an epoch is shorter than a batch.
    """
    if n_items < 1:
        raise InvalidInput("no items")
    batches_per_epoch = max(1, math.ceil(n_items / batch_size))
    epoch = (step - 1) // batches_per_epoch
    slot = (step - 1) % batches_per_epoch
    order = np.random.default_rng((seed, epoch)).permutation(n_items)
    return [int(order[(slot * batch_size + j) % n_items]) for j in range(batch_size)]


# -- stage losses ------------------------------------------------------------------

def _stage_loss(model: CoachModel, stage: int, batch) -> torch.Tensor:
    if stage == 1:
        fbanks = [item[0] for item in batch]
        captions = [item[1] for item in batch]
        return model.alignment_losses(fbanks, captions)["total"]
    losses = [model.answer_nll(fb, q, a) for fb, q, a in batch]
    return torch.stack(losses).mean()


def _check_items(stage: int, items) -> None:
    if not items:
        raise InvalidInput(f"stage {stage} received no training items")
    width = 2 if stage == 1 else 3
    for item in items:
        if len(item) != width:
            raise InvalidInput(
                f"stage {stage} items must have {width} fields, got {len(item)}"
            )


# -- orchestration --------------------------------------------------------------------

def _apply_freeze(model: CoachModel, cfg: StageConfig) -> None:
    model.set_stage_freeze(cfg.stage)
    if cfg.tune_backend:
        # the full-scale recipe freezes a pretrained backend; the builtin
        # backend starts random, so desk runs may opt it into training
        for p in model.bridge.backend.parameters():
            p.requires_grad_(True)


def train_stage(model: CoachModel, cfg: StageConfig, items, out_dir,
                completed_stages=(), resume_from=None) -> TrainResult:
    """Run one stage to max_steps and write a checkpoint plus a metrics
    stream (JSONL of step, loss, lr) into out_dir.

    Stage order is enforced from completed_stages unless the config
    explicitly allows a fresh start. resume_from must be a checkpoint
    written mid-way through the same stage.
    """
    _check_items(cfg.stage, items)
    completed = sorted(set(completed_stages))
    required = {2: 1, 3: 2}.get(cfg.stage)
    if required is not None and required not in completed and not cfg.allow_fresh_init:
        raise StageOrderError(
            f"stage {cfg.stage} needs a stage {required} checkpoint "
            f"(completed: {completed or 'none'}); set allow_fresh_init to override"
        )

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / f"stage{cfg.stage}.ckpt"
    metrics_path = out_dir / f"stage{cfg.stage}_metrics.jsonl"

    _apply_freeze(model, cfg)
    optimizer = torch.optim.Adam(model.trainable_parameters(), lr=cfg.base_lr)

    start_step = 0
    if resume_from is not None:
        payload = load_checkpoint(resume_from)
        if payload.get("stage") != cfg.stage:
            raise StageOrderError(
                f"resume checkpoint is for stage {payload.get('stage')}, not {cfg.stage}"
            )
        model.load_state_dict(payload["model_state"])
        _apply_freeze(model, cfg)
        if payload.get("optimizer_state") is not None:
            optimizer.load_state_dict(payload["optimizer_state"])
        start_step = int(payload["step"])
        completed = sorted(set(payload.get("completed_stages", completed)))

    metrics: list[dict] = []
    mode = "a" if start_step else "w"
    last_loss = float("nan")
    with open(metrics_path, mode) as log:
        for step in range(start_step + 1, cfg.max_steps + 1):
            lr = lr_at(step, cfg.base_lr, cfg.warmup_steps, cfg.max_steps, cfg.lr_min)
            for group in optimizer.param_groups:
                group["lr"] = lr
            batch = [items[i] for i in batch_indices(step, len(items), cfg.batch_size, cfg.seed)]
            loss = _stage_loss(model, cfg.stage, batch)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            last_loss = float(loss.item())
            if step % cfg.log_every == 0 or step == cfg.max_steps:
                row = {"step": step, "loss": last_loss, "lr": lr}
                metrics.append(row)
                log.write(json.dumps(row) + "\n")
            if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step < cfg.max_steps:
                save_model(
                    out_dir / f"stage{cfg.stage}_step{step}.ckpt",
                    model, completed, stage=cfg.stage, step=step, optimizer=optimizer,
                )

    done = sorted(set(completed) | {cfg.stage})
    save_model(ckpt_path, model, done, stage=cfg.stage, step=cfg.max_steps,
               optimizer=optimizer)
    return TrainResult(checkpoint_path=ckpt_path, metrics=metrics, final_loss=last_loss)


def save_partial(path, model: CoachModel, cfg: StageConfig, step: int,
                 optimizer, completed_stages=()) -> None:
    """Checkpoint mid-stage for later resumption."""
    save_model(path, model, completed_stages, stage=cfg.stage, step=step,
               optimizer=optimizer)


def pretrain_encoder(model: CoachModel, fbanks, steps: int, lr: float = 1e-3,
                     mask_ratio: float = 0.8, seed: int = 0) -> list[float]:
    """Optional masked-reconstruction warmup for the encoder alone."""
    if not fbanks:
        raise InvalidInput("no filterbanks")
    opt = torch.optim.Adam(model.encoder.parameters(), lr=lr)
    losses = []
    for step in range(1, steps + 1):
        idx = batch_indices(step, len(fbanks), 1, seed)[0]
        loss = model.reconstruction_loss(fbanks[idx], mask_ratio, seed=seed + step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.item()))
    return losses
