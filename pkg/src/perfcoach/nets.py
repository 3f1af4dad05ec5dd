"""Shared transformer building blocks.

All modules here are plain pre-norm transformers built from explicit
linear projections so attention masks, cross-attention widths, and
deterministic initialization stay under our control. Initialization is
seeded and walks parameters in name order, so two modules with the same
architecture and seed are bit-identical regardless of construction
order.
"""

from __future__ import annotations

import math

import torch
from torch import nn


def sinusoidal_positions(n: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    """Fixed sin/cos position table, shape (n, dim)."""
    pos = torch.arange(n, dtype=torch.float64)[:, None]
    idx = torch.arange((dim + 1) // 2, dtype=torch.float64)[None, :]
    angles = pos / torch.pow(10000.0, 2.0 * idx / dim)
    table = torch.zeros(n, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(angles)
    table[:, 1::2] = torch.cos(angles[:, : dim // 2])
    return table.to(dtype)


class MultiHeadAttention(nn.Module):
    """Attention over (L, d) sequences; cross-attention when kv is given.

    mask is bool (Lq, Lk), True where attention is allowed.
    """

    def __init__(self, d_model: int, n_heads: int, d_kv: int | None = None):
        super().__init__()
        if d_model % n_heads:
            raise ValueError(f"d_model {d_model} not divisible by heads {n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_kv if d_kv is not None else d_model, d_model)
        self.v_proj = nn.Linear(d_kv if d_kv is not None else d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, x: torch.Tensor, kv: torch.Tensor | None = None,
                mask: torch.Tensor | None = None) -> torch.Tensor:
        source = x if kv is None else kv
        lq, lk = x.shape[0], source.shape[0]
        q = self.q_proj(x).view(lq, self.n_heads, self.d_head).transpose(0, 1)
        k = self.k_proj(source).view(lk, self.n_heads, self.d_head).transpose(0, 1)
        v = self.v_proj(source).view(lk, self.n_heads, self.d_head).transpose(0, 1)
        scores = q @ k.transpose(1, 2) / math.sqrt(self.d_head)
        if mask is not None:
            scores = scores.masked_fill(~mask[None, :, :], torch.finfo(scores.dtype).min)
        attn = torch.softmax(scores, dim=-1)
        out = (attn @ v).transpose(0, 1).reshape(lq, -1)
        return self.out_proj(out)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(d_model, hidden)
        self.fc2 = nn.Linear(hidden, d_model)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.act(self.fc1(x)))


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, d_model: int, n_heads: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.mlp = FeedForward(d_model, int(d_model * mlp_ratio))

    def forward(self, x: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), mask=mask)
        return x + self.mlp(self.norm2(x))


def causal_mask(n: int) -> torch.Tensor:
    return torch.ones(n, n, dtype=torch.bool).tril()


def init_parameters(module: nn.Module, seed: int) -> None:
    """Seeded deterministic init, independent of attribute order.

    Weights draw from N(0, 0.02) in parameter-name order from one
    generator; biases zero; LayerNorm affine stays at identity.
    """
    gen = torch.Generator().manual_seed(seed)
    owners = {}
    for mod_name, mod in module.named_modules():
        for pname, _ in mod.named_parameters(recurse=False):
            owners[f"{mod_name}.{pname}" if mod_name else pname] = mod
    for name, param in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        owner = owners[name]
        with torch.no_grad():
            if isinstance(owner, nn.LayerNorm):
                if name.endswith("weight"):
                    param.fill_(1.0)
                else:
                    param.zero_()
            elif name.endswith("bias"):
                param.zero_()
            else:
                param.normal_(0.0, 0.02, generator=gen)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
