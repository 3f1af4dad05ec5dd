"""End-to-end coach model: filterbank -> patches -> encoder features ->
32 aligned query vectors -> language model.

Two tokenizers are deliberate: the language model uses subword units
while the aligner's text tower uses a small word-level vocabulary, so
each half can be trained and tested in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import dsp
from .aligner import AlignerConfig, QueryAligner, contrastive_loss, matching_loss
from .encoder import AudioEncoder, EncoderConfig, PatchSequence
from .errors import InvalidConfig, InvalidInput
from .lm import LmBridge, LmConfig, TinyCausalLM
from .tokenizers import BpeTokenizer, WordTokenizer


@dataclass(frozen=True)
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    aligner: AlignerConfig = field(default_factory=AlignerConfig)
    lm: LmConfig = field(default_factory=lambda: LmConfig(vocab_size=512))
    target_frames: int = dsp.DEFAULT_TARGET_FRAMES
    num_mels: int = dsp.NUM_MELS
    marker_seed: int = 0

    def __post_init__(self):
        if self.aligner.d_audio != self.encoder.d_model:
            raise InvalidConfig(
                f"aligner d_audio {self.aligner.d_audio} != encoder d_model {self.encoder.d_model}"
            )
        if self.aligner.d_lm != self.lm.d_model:
            raise InvalidConfig(
                f"aligner d_lm {self.aligner.d_lm} != lm d_model {self.lm.d_model}"
            )
        if self.target_frames % self.encoder.patch_frames:
            raise InvalidConfig("target_frames must tile into patch_frames")
        if self.num_mels % self.encoder.patch_mels:
            raise InvalidConfig("num_mels must tile into patch_mels")
        n_patches = (self.target_frames // self.encoder.patch_frames) * (
            self.num_mels // self.encoder.patch_mels
        )
        if n_patches > self.encoder.max_patches:
            raise InvalidConfig(
                f"grid of {n_patches} patches exceeds encoder max_patches {self.encoder.max_patches}"
            )

    def to_dict(self) -> dict:
        return {
            "encoder": dict(self.encoder.__dict__),
            "aligner": dict(self.aligner.__dict__),
            "lm": dict(self.lm.__dict__),
            "target_frames": self.target_frames,
            "num_mels": self.num_mels,
            "marker_seed": self.marker_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            encoder=EncoderConfig(**d["encoder"]),
            aligner=AlignerConfig(**d["aligner"]),
            lm=LmConfig(**d["lm"]),
            target_frames=d["target_frames"],
            num_mels=d["num_mels"],
            marker_seed=d["marker_seed"],
        )


def desk_config(lm_vocab_size: int, aligner_vocab_size: int, seed: int = 0) -> ModelConfig:
    """Small geometry that trains in seconds on one CPU core."""
    return ModelConfig(
        encoder=EncoderConfig(
            patch_frames=16,
            patch_mels=16,
            d_model=32,
            depth=2,
            n_heads=2,
            mlp_ratio=2.0,
            decoder_d_model=16,
            decoder_n_heads=2,
            max_patches=256,
            seed=seed,
        ),
        aligner=AlignerConfig(
            d_model=32,
            n_heads=2,
            n_blocks=4,
            d_audio=32,
            d_lm=64,
            d_embed=16,
            vocab_size=aligner_vocab_size,
            max_text_len=64,
            seed=seed + 1,
        ),
        lm=LmConfig(
            vocab_size=lm_vocab_size,
            d_model=64,
            n_heads=2,
            n_blocks=2,
            max_len=256,
            seed=seed + 2,
        ),
        target_frames=256,
        marker_seed=seed + 3,
    )


class CoachModel(nn.Module):
    def __init__(self, config: ModelConfig, lm_tokenizer: BpeTokenizer,
                 aligner_tokenizer: WordTokenizer):
        super().__init__()
        if lm_tokenizer.vocab_size != config.lm.vocab_size:
            raise InvalidConfig(
                f"lm vocab {config.lm.vocab_size} != tokenizer vocab {lm_tokenizer.vocab_size}"
            )
        if aligner_tokenizer.vocab_size != config.aligner.vocab_size:
            raise InvalidConfig(
                f"aligner vocab {config.aligner.vocab_size} != tokenizer vocab "
                f"{aligner_tokenizer.vocab_size}"
            )
        self.config = config
        self.lm_tokenizer = lm_tokenizer
        self.aligner_tokenizer = aligner_tokenizer
        self.encoder = AudioEncoder(config.encoder)
        self.aligner = QueryAligner(config.aligner)
        self.bridge = LmBridge(TinyCausalLM(config.lm), marker_seed=config.marker_seed)

    # -- shared feature paths ---------------------------------------------------
    def _patch_sequence(self, fbank: np.ndarray) -> PatchSequence:
        fb = np.asarray(fbank, dtype=np.float64)
        if fb.ndim != 2 or fb.shape[1] != self.config.num_mels:
            raise InvalidInput(
                f"filterbank must be (frames, {self.config.num_mels}), got {fb.shape}"
            )
        fixed, _ = dsp.fix_length(fb, self.config.target_frames)
        return PatchSequence.from_filterbank(fixed, self.config.encoder)

    def feature_map(self, fbank: np.ndarray) -> torch.Tensor:
        return self.encoder.encode(self._patch_sequence(fbank))

    def acoustic(self, fbank: np.ndarray) -> torch.Tensor:
        """(32, d_lm) acoustic block for the language model."""
        return self.aligner.align(self.feature_map(fbank))

    # -- pretraining objectives ---------------------------------------------------
    def reconstruction_loss(self, fbank: np.ndarray, mask_ratio: float, seed: int):
        return self.encoder.reconstruct(self._patch_sequence(fbank), mask_ratio, seed).loss

    def alignment_losses(self, fbanks, captions) -> dict:
        """Contrastive + matching + captioning over a batch, unweighted sum.

        Matching negatives pair each clip with the next caption in the
        batch (cyclic), so a batch of n yields n positives and n negatives.
        """
        if len(fbanks) != len(captions) or len(fbanks) < 2:
            raise InvalidInput("need matched lists of at least 2 clips")
        tok = self.aligner_tokenizer
        id_lists = [tok.encode(c) for c in captions]
        if any(not ids for ids in id_lists):
            raise InvalidInput("empty caption")
        fmaps = [self.feature_map(fb) for fb in fbanks]

        audio_embeds = torch.stack([self.aligner.encode_audio(f) for f in fmaps])
        text_embeds = torch.stack([self.aligner.encode_text(ids) for ids in id_lists])
        contrastive = contrastive_loss(audio_embeds, text_embeds, self.aligner.temperature)

        match_terms = []
        n = len(fmaps)
        for i in range(n):
            pos = self.aligner.match_probability(fmaps[i], id_lists[i])
            neg = self.aligner.match_probability(fmaps[i], id_lists[(i + 1) % n])
            match_terms.append(matching_loss(pos, 1.0))
            match_terms.append(matching_loss(neg, 0.0))
        matching = torch.stack(match_terms).mean()

        caption = torch.stack(
            [
                self.aligner.caption_nll(f, ids, bos_id=tok.bos_id, eos_id=tok.eos_id)
                for f, ids in zip(fmaps, id_lists)
            ]
        ).mean()

        total = contrastive + matching + caption
        return {
            "contrastive": contrastive,
            "matching": matching,
            "caption": caption,
            "total": total,
        }

    # -- instruction tuning ---------------------------------------------------------
    def answer_nll(self, fbank: np.ndarray, question: str, answer: str) -> torch.Tensor:
        prompt = self.lm_tokenizer.encode(question)
        if not prompt:
            raise InvalidInput("empty question")
        response = self.lm_tokenizer.encode(answer) + [self.lm_tokenizer.eos_id]
        return self.bridge.response_nll(self.acoustic(fbank), prompt, response)

    @torch.no_grad()
    def generate_answer(self, fbank: np.ndarray, question: str, max_tokens: int = 48,
                        seed: int | None = None) -> str:
        prompt = self.lm_tokenizer.encode(question)
        if not prompt:
            raise InvalidInput("empty question")
        ids = self.bridge.generate(
            self.acoustic(fbank),
            prompt,
            eos_id=self.lm_tokenizer.eos_id,
            max_tokens=max_tokens,
            seed=seed,
        )
        return self.lm_tokenizer.decode(ids)

    # -- freeze policy ------------------------------------------------------------
    def set_stage_freeze(self, stage: int) -> None:
        """Stage 1 trains encoder+aligner; stages 2 and 3 freeze the LM
        backend and train encoder, aligner, marker."""
        if stage not in (1, 2, 3):
            raise InvalidConfig(f"unknown stage {stage}")
        for p in self.parameters():
            p.requires_grad_(True)
        if stage == 1:
            for p in self.bridge.parameters():
                p.requires_grad_(False)
        else:
            self.bridge.freeze_backend()

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]
