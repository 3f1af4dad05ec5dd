"""Query transformer bridging the audio encoder and the language model.

A fixed set of 32 learned query embeddings passes through blocks that
mix self-attention over [queries; text], cross-attention from queries
into the encoder's feature map, and a feed-forward layer. Training
objectives: audio-text contrastive alignment (per-query max cosine),
audio-text matching (binary head), and caption modeling under a
prefix-causal mask where queries never peek at text.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import InvalidConfig, InvalidInput
from .nets import FeedForward, MultiHeadAttention, init_parameters, sinusoidal_positions

NUM_QUERIES = 32


@dataclass(frozen=True)
class AlignerConfig:
    d_model: int = 64
    n_heads: int = 4
    n_blocks: int = 4
    d_audio: int = 192
    d_lm: int = 128
    d_embed: int = 64
    vocab_size: int = 1000
    max_text_len: int = 128
    cross_attention_every: int = 1
    mlp_ratio: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.n_blocks < 1:
            raise InvalidConfig("need at least one block")
        if self.d_model % self.n_heads:
            raise InvalidConfig("d_model must divide into heads")
        if self.cross_attention_every < 1:
            raise InvalidConfig("cross_attention_every must be >= 1")
        if self.vocab_size < 5:
            raise InvalidConfig("vocab too small")


@dataclass
class AlignerOutput:
    query_states: torch.Tensor  # (NUM_QUERIES, d_model)
    text_states: torch.Tensor  # (T, d_model)


class AlignerBlock(nn.Module):
    def __init__(self, cfg: AlignerConfig, has_cross: bool):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.has_cross = has_cross
        if has_cross:
            self.norm_cross = nn.LayerNorm(cfg.d_model)
            self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, d_kv=cfg.d_audio)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.mlp = FeedForward(cfg.d_model, int(cfg.d_model * cfg.mlp_ratio))

    def forward(self, x, n_queries, audio=None, mask=None):
        x = x + self.self_attn(self.norm1(x), mask=mask)
        if self.has_cross and audio is not None and n_queries > 0:
            xq = x[:n_queries]
            xq = xq + self.cross_attn(self.norm_cross(xq), kv=audio)
            x = torch.cat([xq, x[n_queries:]], dim=0)
        return x + self.mlp(self.norm2(x))


class QueryAligner(nn.Module):
    def __init__(self, config: AlignerConfig):
        super().__init__()
        self.config = config
        c = config
        self.query_tokens = nn.Parameter(torch.zeros(NUM_QUERIES, c.d_model))
        self.text_embed = nn.Embedding(c.vocab_size, c.d_model)
        self.blocks = nn.ModuleList(
            AlignerBlock(c, has_cross=(i % c.cross_attention_every == 0))
            for i in range(c.n_blocks)
        )
        self.norm = nn.LayerNorm(c.d_model)
        self.out_proj = nn.Linear(c.d_model, c.d_lm)
        self.audio_proj = nn.Linear(c.d_model, c.d_embed)
        self.text_proj = nn.Linear(c.d_model, c.d_embed)
        self.match_head = nn.Linear(c.d_model, 1)
        self.caption_head = nn.Linear(c.d_model, c.vocab_size)
        self.log_temperature = nn.Parameter(torch.tensor(math.log(0.07)))
        self.register_buffer(
            "pos_table", sinusoidal_positions(c.max_text_len, c.d_model), persistent=False
        )
        init_parameters(self, c.seed)
        with torch.no_grad():
            self.log_temperature.fill_(math.log(0.07))

    @property
    def temperature(self) -> torch.Tensor:
        return self.log_temperature.exp().clamp(min=1e-3)

    # -- core pass -----------------------------------------------------------
    def _check_audio(self, audio):
        if audio is None:
            return None
        if audio.ndim != 2 or audio.shape[1] != self.config.d_audio:
            raise InvalidInput(
                f"audio feature map must be (n, {self.config.d_audio}), got {tuple(audio.shape)}"
            )
        return audio

    def _text_tensor(self, text_ids) -> torch.Tensor:
        ids = torch.as_tensor(list(text_ids), dtype=torch.long)
        if ids.numel() > self.config.max_text_len:
            raise InvalidInput(f"text longer than {self.config.max_text_len} tokens")
        if ids.numel() and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise InvalidInput("text id outside vocab")
        return ids

    def run(self, audio=None, text_ids=(), causal_text=False) -> AlignerOutput:
        audio = self._check_audio(audio)
        ids = self._text_tensor(text_ids)
        use_queries = audio is not None
        n_q = NUM_QUERIES if use_queries else 0
        dtype = self.query_tokens.dtype

        parts = []
        if use_queries:
            parts.append(self.query_tokens)
        if ids.numel():
            parts.append(self.text_embed(ids) + self.pos_table[: ids.numel()].to(dtype))
        if not parts:
            raise InvalidInput("need audio features or text")
        x = torch.cat(parts, dim=0)

        mask = None
        if causal_text:
            total = x.shape[0]
            mask = torch.zeros(total, total, dtype=torch.bool)
            mask[:n_q, :n_q] = True  # queries see only queries
            t = total - n_q
            if t:
                mask[n_q:, :n_q] = True  # text sees queries
                mask[n_q:, n_q:] = torch.ones(t, t, dtype=torch.bool).tril()

        for block in self.blocks:
            x = block(x, n_q, audio=audio if use_queries else None, mask=mask)
        x = self.norm(x)
        return AlignerOutput(query_states=x[:n_q], text_states=x[n_q:])

    # -- interfaces ------------------------------------------------------------
    def align(self, audio: torch.Tensor) -> torch.Tensor:
        """Map an encoder feature map to exactly NUM_QUERIES vectors in
        the language model's embedding width."""
        out = self.run(audio=audio)
        return self.out_proj(out.query_states)

    def encode_audio(self, audio: torch.Tensor) -> torch.Tensor:
        """(NUM_QUERIES, d_embed) per-query embeddings for contrastive use."""
        out = self.run(audio=audio)
        return self.audio_proj(out.query_states)

    def encode_text(self, text_ids) -> torch.Tensor:
        """(d_embed,) pooled text embedding (first token state)."""
        ids = list(text_ids)
        if not ids:
            raise InvalidInput("empty text")
        out = self.run(text_ids=ids)
        return self.text_proj(out.text_states[0])

    def match_probability(self, audio: torch.Tensor, text_ids) -> torch.Tensor:
        ids = list(text_ids)
        if not ids:
            raise InvalidInput("empty text")
        out = self.run(audio=audio, text_ids=ids)
        pooled = out.query_states.mean(dim=0)
        return torch.sigmoid(self.match_head(pooled)).squeeze(-1)

    def caption_nll(self, audio: torch.Tensor, text_ids, bos_id: int, eos_id: int,
                    per_token: bool = False):
        """Mean negative log-likelihood of the caption given the audio
        queries, under a prefix-causal mask."""
        ids = list(text_ids)
        if not ids:
            raise InvalidInput("empty caption")
        inputs = [bos_id] + ids
        targets = ids + [eos_id]
        out = self.run(audio=audio, text_ids=inputs, causal_text=True)
        logits = self.caption_head(out.text_states)
        logp = torch.log_softmax(logits, dim=-1)
        tgt = torch.as_tensor(targets, dtype=torch.long)
        token_nll = -logp.gather(1, tgt[:, None]).squeeze(1)
        return token_nll if per_token else token_nll.mean()


def contrastive_loss(audio_embeds: torch.Tensor, text_embeds: torch.Tensor,
                     temperature) -> torch.Tensor:
    """Symmetric InfoNCE over per-query max cosine similarity.

    audio_embeds: (B, NUM_QUERIES, d); text_embeds: (B, d). Diagonal
    pairs are positives.
    """
    if audio_embeds.ndim != 3 or text_embeds.ndim != 2:
        raise InvalidInput("expected (B, Q, d) audio and (B, d) text")
    if audio_embeds.shape[0] != text_embeds.shape[0]:
        raise InvalidInput("batch sizes disagree")
    if audio_embeds.shape[0] < 2:
        raise InvalidInput("contrastive loss needs a batch of at least 2")
    a = torch.nn.functional.normalize(audio_embeds, dim=-1)
    t = torch.nn.functional.normalize(text_embeds, dim=-1)
    sims = torch.einsum("aqd,bd->abq", a, t).max(dim=-1).values  # (B, B)
    logits = sims / temperature
    labels = torch.arange(sims.shape[0])
    loss_a = torch.nn.functional.cross_entropy(logits, labels)
    loss_t = torch.nn.functional.cross_entropy(logits.T, labels)
    return (loss_a + loss_t) / 2


def matching_loss(prob: torch.Tensor, label: float) -> torch.Tensor:
    """Binary cross-entropy on a matching probability."""
    if not 0.0 <= label <= 1.0:
        raise InvalidInput("label must be in [0, 1]")
    eps = torch.finfo(prob.dtype).eps
    p = prob.clamp(eps, 1 - eps)
    y = torch.as_tensor(label, dtype=p.dtype)
    return -(y * p.log() + (1 - y) * (1 - p).log())
