"""Language-model bridge: splices acoustic query vectors into the token
embedding stream of a causal LM.

The assembled sequence is [marker; 32 acoustic vectors; prompt tokens],
optionally followed by response tokens during training. The marker is a
learnable embedding row, not a vocabulary token; the backend LM stays
frozen during instruction tuning while the marker and the upstream
aligner learn to speak its embedding language.

Training loss is the mean negative log-likelihood of response tokens
only; prompt and acoustic positions never contribute.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import torch
from torch import nn

from .errors import InvalidConfig, InvalidInput
from .nets import TransformerBlock, causal_mask, init_parameters, sinusoidal_positions


@runtime_checkable
class LmBackend(Protocol):
    """Anything that can embed tokens and score embedding sequences."""

    def d_model(self) -> int: ...

    def vocab_size(self) -> int: ...

    def embed(self, ids) -> torch.Tensor: ...

    def forward_embeddings(self, embeds: torch.Tensor) -> torch.Tensor: ...

    def descriptor(self) -> dict: ...


@dataclass(frozen=True)
class LmConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 2
    n_blocks: int = 2
    mlp_ratio: float = 2.0
    max_len: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.vocab_size < 5:
            raise InvalidConfig("vocab too small")
        if self.d_model % self.n_heads:
            raise InvalidConfig("d_model must divide into heads")
        if self.n_blocks < 1:
            raise InvalidConfig("need at least one block")


class TinyCausalLM(nn.Module):
    """Small causal transformer used as the desk-scale backend."""

    def __init__(self, config: LmConfig):
        super().__init__()
        self.config = config
        c = config
        self.token_embed = nn.Embedding(c.vocab_size, c.d_model)
        self.blocks = nn.ModuleList(
            TransformerBlock(c.d_model, c.n_heads, c.mlp_ratio) for _ in range(c.n_blocks)
        )
        self.norm = nn.LayerNorm(c.d_model)
        self.head = nn.Linear(c.d_model, c.vocab_size)
        self.register_buffer(
            "pos_table", sinusoidal_positions(c.max_len, c.d_model), persistent=False
        )
        init_parameters(self, c.seed)

    def d_model(self) -> int:
        return self.config.d_model

    def vocab_size(self) -> int:
        return self.config.vocab_size

    def embed(self, ids) -> torch.Tensor:
        t = torch.as_tensor(list(ids), dtype=torch.long)
        if t.numel() and (t.min() < 0 or t.max() >= self.config.vocab_size):
            raise InvalidInput("token id outside vocab")
        return self.token_embed(t)

    def forward_embeddings(self, embeds: torch.Tensor) -> torch.Tensor:
        if embeds.ndim != 2 or embeds.shape[1] != self.config.d_model:
            raise InvalidInput(f"expected (L, {self.config.d_model}) embeddings")
        n = embeds.shape[0]
        if n > self.config.max_len:
            raise InvalidInput(f"sequence of {n} exceeds max_len {self.config.max_len}")
        x = embeds + self.pos_table[:n].to(embeds.dtype)
        mask = causal_mask(n)
        for block in self.blocks:
            x = block(x, mask=mask)
        return self.head(self.norm(x))

    def descriptor(self) -> dict:
        return {
            "name": "tiny-causal",
            "d_model": self.config.d_model,
            "n_blocks": self.config.n_blocks,
            "vocab_size": self.config.vocab_size,
        }


NUM_ACOUSTIC = 32  # matches the aligner's query count


class LmBridge(nn.Module):
    def __init__(self, backend: LmBackend, marker_seed: int = 0):
        super().__init__()
        if not isinstance(backend, LmBackend):
            raise InvalidConfig("backend does not satisfy the LM protocol")
        self.backend = backend
        self.audio_marker = nn.Parameter(torch.empty(backend.d_model()))
        gen = torch.Generator().manual_seed(marker_seed)
        with torch.no_grad():
            self.audio_marker.normal_(0.0, 0.02, generator=gen)

    def freeze_backend(self) -> None:
        if isinstance(self.backend, nn.Module):
            for p in self.backend.parameters():
                p.requires_grad_(False)

    # -- sequence assembly ----------------------------------------------------
    def _check_acoustic(self, acoustic: torch.Tensor) -> torch.Tensor:
        d = self.backend.d_model()
        if acoustic.ndim != 2 or acoustic.shape != (NUM_ACOUSTIC, d):
            raise InvalidInput(
                f"acoustic block must be ({NUM_ACOUSTIC}, {d}), got {tuple(acoustic.shape)}"
            )
        return acoustic

    def interleave(self, acoustic: torch.Tensor, text_ids) -> torch.Tensor:
        """[marker; acoustic; text] embedding sequence. Text must be
        non-empty: a bare clip with no instruction is a caller bug."""
        ids = list(text_ids)
        if not ids:
            raise InvalidInput("no instruction text to interleave")
        acoustic = self._check_acoustic(acoustic)
        marker = self.audio_marker.to(acoustic.dtype)[None, :]
        return torch.cat([marker, acoustic, self.backend.embed(ids)], dim=0)

    def interleave_multi(self, acoustic_blocks, text_ids) -> torch.Tensor:
        ids = list(text_ids)
        if not ids:
            raise InvalidInput("no instruction text to interleave")
        if not acoustic_blocks:
            raise InvalidInput("no acoustic blocks")
        parts = []
        for block in acoustic_blocks:
            block = self._check_acoustic(block)
            parts.append(self.audio_marker.to(block.dtype)[None, :])
            parts.append(block)
        parts.append(self.backend.embed(ids))
        return torch.cat(parts, dim=0)

    # -- training loss ----------------------------------------------------------
    def response_nll(self, acoustic: torch.Tensor, prompt_ids, response_ids,
                     per_token: bool = False):
        """Mean NLL of response tokens given [marker; acoustic; prompt]."""
        resp = list(response_ids)
        if not resp:
            raise InvalidInput("empty response")
        prefix = self.interleave(acoustic, prompt_ids)
        L = prefix.shape[0]
        full = torch.cat([prefix, self.backend.embed(resp)], dim=0)
        logits = self.backend.forward_embeddings(full)
        # logits at position i predict the token at i + 1
        pred = logits[L - 1 : L + len(resp) - 1]
        logp = torch.log_softmax(pred, dim=-1)
        tgt = torch.as_tensor(resp, dtype=torch.long)
        token_nll = -logp.gather(1, tgt[:, None]).squeeze(1)
        return token_nll if per_token else token_nll.mean()

    # -- inference ---------------------------------------------------------------
    @torch.no_grad()
    def generate(self, acoustic: torch.Tensor, prompt_ids, eos_id: int,
                 max_tokens: int = 64, seed: int | None = None,
                 temperature: float = 1.0) -> list[int]:
        """Generate response ids. Greedy when seed is None, otherwise
        temperature sampling with an explicit generator."""
        if max_tokens < 1:
            raise InvalidInput("max_tokens must be >= 1")
        seq = self.interleave(acoustic, prompt_ids)
        gen = None if seed is None else torch.Generator().manual_seed(seed)
        out: list[int] = []
        for _ in range(max_tokens):
            logits = self.backend.forward_embeddings(seq)[-1]
            if gen is None:
                next_id = int(logits.argmax())
            else:
                probs = torch.softmax(logits.double() / temperature, dim=-1)
                next_id = int(torch.multinomial(probs, 1, generator=gen))
            if next_id == eos_id:
                break
            out.append(next_id)
            seq = torch.cat([seq, self.backend.embed([next_id])], dim=0)
        return out
