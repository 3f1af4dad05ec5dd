"""Masked-patch audio encoder over log-mel filterbank patches.

The encoder embeds spectrogram patches, adds fixed sinusoidal positions,
and runs a stack of transformer blocks. Pretraining masks a fraction of
patches, encodes only the visible ones, and scores a small decoder's
reconstruction on the masked positions alone. Downstream feature maps
are taken from the penultimate block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import dsp
from .errors import InvalidConfig, InvalidInput
from .nets import TransformerBlock, init_parameters, sinusoidal_positions

DEFAULT_MASK_RATIO = 0.8


@dataclass(frozen=True)
class EncoderConfig:
    patch_frames: int = 16
    patch_mels: int = 16
    d_model: int = 192
    depth: int = 4
    n_heads: int = 4
    mlp_ratio: float = 4.0
    decoder_d_model: int = 96
    decoder_n_heads: int = 4
    use_positional: bool = True
    max_patches: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.depth < 2:
            raise InvalidConfig("encoder needs depth >= 2 (features come from the penultimate block)")
        if self.d_model % self.n_heads or self.decoder_d_model % self.decoder_n_heads:
            raise InvalidConfig("model width must divide evenly into heads")
        if self.patch_frames <= 0 or self.patch_mels <= 0:
            raise InvalidConfig("patch dims must be positive")

    @property
    def patch_dim(self) -> int:
        return self.patch_frames * self.patch_mels


@dataclass(frozen=True)
class PatchSequence:
    """Patches plus their positions in the (time, mel) grid.

    A full sequence tiles the grid exactly; subsets produced by masking
    keep their original position indices.
    """

    patches: np.ndarray  # (n, patch_dim) float64
    grid: tuple[int, int]  # (patch rows along time, patch cols along mel)
    positions: np.ndarray  # (n,) int64, row-major grid index

    def __post_init__(self):
        p = np.asarray(self.patches, dtype=np.float64)
        pos = np.asarray(self.positions, dtype=np.int64)
        if p.ndim != 2 or pos.ndim != 1 or p.shape[0] != pos.shape[0]:
            raise InvalidInput("patches and positions disagree")
        total = self.grid[0] * self.grid[1]
        if np.any(pos < 0) or np.any(pos >= total):
            raise InvalidInput("position index outside the grid")
        if len(np.unique(pos)) != len(pos):
            raise InvalidInput("duplicate patch positions")
        object.__setattr__(self, "patches", p)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_filterbank(cls, fbank: np.ndarray, config: EncoderConfig) -> "PatchSequence":
        fb = np.asarray(fbank)
        patches = dsp.patchify(fb, config.patch_frames, config.patch_mels)
        grid = (fb.shape[0] // config.patch_frames, fb.shape[1] // config.patch_mels)
        return cls(patches, grid, np.arange(patches.shape[0]))

    @property
    def is_full(self) -> bool:
        return self.patches.shape[0] == self.grid[0] * self.grid[1]

    def subset(self, indices: np.ndarray) -> "PatchSequence":
        idx = np.asarray(indices, dtype=np.int64)
        keep = np.isin(self.positions, idx)
        return PatchSequence(self.patches[keep], self.grid, self.positions[keep])


def mask_patches(seq: PatchSequence, mask_ratio: float, seed: int):
    """Split a full sequence into (visible subset, masked position array).

    Exactly round(mask_ratio * n) positions are masked, chosen by a
    seeded permutation. Visible and masked positions partition the grid.
    """
    if not seq.is_full:
        raise InvalidInput("can only mask a full patch sequence")
    if not 0.0 <= mask_ratio < 1.0:
        raise InvalidConfig("mask_ratio must be in [0, 1)")
    n = seq.patches.shape[0]
    k = int(round(mask_ratio * n))
    if k >= n:
        k = n - 1  # keep at least one visible patch
    perm = np.random.default_rng(seed).permutation(n)
    masked = np.sort(perm[:k])
    visible = np.sort(perm[k:])
    return seq.subset(visible), masked


@dataclass
class ReconstructionOutput:
    loss: torch.Tensor
    pred: torch.Tensor  # (n_patches, patch_dim) over the full grid
    masked: np.ndarray


def masked_mse(pred: torch.Tensor, target: torch.Tensor, masked: np.ndarray) -> torch.Tensor:
    """Mean squared error restricted to masked rows."""
    if len(masked) == 0:
        raise InvalidInput("no masked positions to score")
    idx = torch.as_tensor(np.asarray(masked, dtype=np.int64))
    diff = pred.index_select(0, idx) - target.index_select(0, idx)
    return (diff * diff).mean()


class AudioEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        c = config
        self.patch_embed = nn.Linear(c.patch_dim, c.d_model)
        self.blocks = nn.ModuleList(
            TransformerBlock(c.d_model, c.n_heads, c.mlp_ratio) for _ in range(c.depth)
        )
        self.norm = nn.LayerNorm(c.d_model)
        self.decoder_embed = nn.Linear(c.d_model, c.decoder_d_model)
        self.mask_token = nn.Parameter(torch.zeros(c.decoder_d_model))
        self.decoder_block = TransformerBlock(c.decoder_d_model, c.decoder_n_heads, c.mlp_ratio)
        self.decoder_norm = nn.LayerNorm(c.decoder_d_model)
        self.decoder_head = nn.Linear(c.decoder_d_model, c.patch_dim)
        self.register_buffer(
            "pos_table", sinusoidal_positions(c.max_patches, c.d_model), persistent=False
        )
        self.register_buffer(
            "dec_pos_table",
            sinusoidal_positions(c.max_patches, c.decoder_d_model),
            persistent=False,
        )
        init_parameters(self, c.seed)

    def _embed(self, seq: PatchSequence) -> torch.Tensor:
        dtype = self.patch_embed.weight.dtype
        x = torch.as_tensor(seq.patches, dtype=dtype)
        pos = torch.as_tensor(seq.positions)
        x = self.patch_embed(x)
        if self.config.use_positional:
            x = x + self.pos_table.to(dtype).index_select(0, pos)
        return x

    def encode(self, seq: PatchSequence) -> torch.Tensor:
        """Feature map (n, d_model) from the penultimate block."""
        x = self._embed(seq)
        for block in self.blocks[: self.config.depth - 1]:
            x = block(x)
        return x

    def encode_full(self, seq: PatchSequence) -> torch.Tensor:
        """All blocks plus the final norm; used by the reconstruction head."""
        x = self._embed(seq)
        for block in self.blocks:
            x = block(x)
        return self.norm(x)

    def reconstruct(self, seq: PatchSequence, mask_ratio: float, seed: int,
                    targets: np.ndarray | None = None) -> ReconstructionOutput:
        """Mask, encode visible patches, decode the full grid, and score
        reconstruction on masked positions only.

        Targets default to the input patches; rows at visible positions
        never enter the loss.
        """
        visible, masked = mask_patches(seq, mask_ratio, seed)
        enc = self.encode_full(visible)
        dec_in = self.decoder_embed(enc)
        dtype = dec_in.dtype

        n = seq.grid[0] * seq.grid[1]
        full = self.mask_token.to(dtype).expand(n, -1).clone()
        full[torch.as_tensor(visible.positions)] = dec_in
        full = full + self.dec_pos_table[:n].to(dtype)
        dec = self.decoder_norm(self.decoder_block(full))
        pred = self.decoder_head(dec)

        target = torch.as_tensor(
            seq.patches if targets is None else np.asarray(targets, dtype=np.float64),
            dtype=dtype,
        )
        if target.shape != pred.shape:
            raise InvalidInput(f"target shape {tuple(target.shape)} != {tuple(pred.shape)}")
        loss = masked_mse(pred, target, masked)
        return ReconstructionOutput(loss=loss, pred=pred, masked=masked)
