import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from perfcoach import nets
from perfcoach.encoder import (
    AudioEncoder,
    EncoderConfig,
    PatchSequence,
    mask_patches,
    masked_mse,
)
from perfcoach.errors import InvalidConfig, InvalidInput

TINY = EncoderConfig(
    patch_frames=4,
    patch_mels=4,
    d_model=16,
    depth=3,
    n_heads=2,
    mlp_ratio=2.0,
    decoder_d_model=8,
    decoder_n_heads=2,
    max_patches=64,
    seed=7,
)


def full_seq(rng, grid=(4, 2), patch_dim=16):
    n = grid[0] * grid[1]
    return PatchSequence(rng.standard_normal((n, patch_dim)), grid, np.arange(n))


class TestNetsOracles:
    def test_sinusoidal_against_naive(self):
        got = nets.sinusoidal_positions(20, 8, dtype=torch.float64).numpy()
        want = np.zeros((20, 8))
        for pos in range(20):
            for i in range(4):
                angle = pos / (10000 ** (2 * i / 8))
                want[pos, 2 * i] = math.sin(angle)
                want[pos, 2 * i + 1] = math.cos(angle)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_attention_against_naive(self):
        torch.manual_seed(0)
        d, heads, lq, lk = 8, 2, 5, 7
        mha = nets.MultiHeadAttention(d, heads).double()
        nets.init_parameters(mha, seed=3)
        x = torch.randn(lq, d, dtype=torch.float64)
        kv = torch.randn(lk, d, dtype=torch.float64)
        got = mha(x, kv=kv).detach().numpy()

        W = {n: p.detach().numpy() for n, p in mha.named_parameters()}
        dh = d // heads
        q = x.numpy() @ W["q_proj.weight"].T + W["q_proj.bias"]
        k = kv.numpy() @ W["k_proj.weight"].T + W["k_proj.bias"]
        v = kv.numpy() @ W["v_proj.weight"].T + W["v_proj.bias"]
        out = np.zeros((lq, d))
        for h in range(heads):
            qs, ks, vs = (m[:, h * dh : (h + 1) * dh] for m in (q, k, v))
            for i in range(lq):
                scores = np.array([qs[i] @ ks[j] / math.sqrt(dh) for j in range(lk)])
                e = np.exp(scores - scores.max())
                w = e / e.sum()
                out[i, h * dh : (h + 1) * dh] = sum(w[j] * vs[j] for j in range(lk))
        want = out @ W["out_proj.weight"].T + W["out_proj.bias"]
        assert np.max(np.abs(got - want)) < 1e-9

    def test_attention_mask_blocks_positions(self):
        d = 8
        mha = nets.MultiHeadAttention(d, 2).double()
        nets.init_parameters(mha, seed=1)
        x = torch.randn(4, d, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
        mask = nets.causal_mask(4)
        out_causal = mha(x, mask=mask)
        # future positions cannot influence earlier outputs
        x2 = x.clone()
        x2[3] += 10.0
        out_causal2 = mha(x2, mask=mask)
        assert torch.allclose(out_causal[:3], out_causal2[:3])
        assert not torch.allclose(out_causal[3], out_causal2[3])

    def test_init_deterministic(self):
        a = AudioEncoder(TINY)
        b = AudioEncoder(TINY)
        for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_init_seed_sensitivity(self):
        a = AudioEncoder(TINY)
        b = AudioEncoder(EncoderConfig(**{**TINY.__dict__, "seed": 8}))
        diffs = [
            not torch.equal(pa, pb)
            for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters())
            if pa.ndim >= 2
        ]
        assert any(diffs)


class TestConfig:
    def test_depth_floor(self):
        with pytest.raises(InvalidConfig):
            EncoderConfig(depth=1)

    def test_head_divisibility(self):
        with pytest.raises(InvalidConfig):
            EncoderConfig(d_model=30, n_heads=4)


class TestPatchSequence:
    def test_from_filterbank(self):
        fb = np.arange(32.0).reshape(8, 4)
        cfg = EncoderConfig(patch_frames=2, patch_mels=2, d_model=16, depth=2,
                            n_heads=2, decoder_d_model=8, decoder_n_heads=2)
        seq = PatchSequence.from_filterbank(fb, cfg)
        assert seq.grid == (4, 2)
        assert seq.is_full
        assert seq.positions.tolist() == list(range(8))

    def test_rejects_duplicate_positions(self):
        with pytest.raises(InvalidInput):
            PatchSequence(np.zeros((2, 4)), (2, 1), np.array([0, 0]))

    def test_rejects_out_of_grid(self):
        with pytest.raises(InvalidInput):
            PatchSequence(np.zeros((2, 4)), (2, 1), np.array([0, 5]))

    def test_subset_keeps_positions(self, rng):
        seq = full_seq(rng)
        sub = seq.subset(np.array([1, 3, 5]))
        assert sub.positions.tolist() == [1, 3, 5]
        assert not sub.is_full
        assert np.array_equal(sub.patches, seq.patches[[1, 3, 5]])


class TestMasking:
    @given(
        n_rows=st.integers(2, 8),
        n_cols=st.integers(1, 8),
        ratio=st.floats(0.0, 0.99),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=60)
    def test_partition_property(self, n_rows, n_cols, ratio, seed):
        n = n_rows * n_cols
        seq = PatchSequence(np.zeros((n, 4)), (n_rows, n_cols), np.arange(n))
        visible, masked = mask_patches(seq, ratio, seed)
        expected_k = min(int(round(ratio * n)), n - 1)
        assert len(masked) == expected_k
        union = np.union1d(visible.positions, masked)
        assert np.array_equal(union, np.arange(n))
        assert len(np.intersect1d(visible.positions, masked)) == 0

    def test_seed_determinism(self, rng):
        seq = full_seq(rng, grid=(8, 8), patch_dim=16)
        v1, m1 = mask_patches(seq, 0.8, seed=5)
        v2, m2 = mask_patches(seq, 0.8, seed=5)
        assert np.array_equal(m1, m2)
        assert np.array_equal(v1.positions, v2.positions)
        _, m3 = mask_patches(seq, 0.8, seed=6)
        assert not np.array_equal(m1, m3)

    def test_rejects_subset(self, rng):
        seq = full_seq(rng).subset(np.array([0, 1]))
        with pytest.raises(InvalidInput):
            mask_patches(seq, 0.5, 0)

    def test_rejects_bad_ratio(self, rng):
        with pytest.raises(InvalidConfig):
            mask_patches(full_seq(rng), 1.0, 0)


class TestEncoder:
    def test_encode_shape(self, rng):
        model = AudioEncoder(TINY)
        out = model.encode(full_seq(rng))
        assert out.shape == (8, TINY.d_model)

    def test_penultimate_features_skip_last_block(self, rng):
        model = AudioEncoder(TINY)
        seq = full_seq(rng)
        pen = model.encode(seq)
        x = model._embed(seq)
        for block in model.blocks[:-1]:
            x = block(x)
        assert torch.equal(pen, x)
        full = model.encode_full(seq)
        assert not torch.allclose(pen, full)

    def test_permutation_equivariance_without_positions(self, rng):
        cfg = EncoderConfig(**{**TINY.__dict__, "use_positional": False})
        model = AudioEncoder(cfg).double()
        patches = rng.standard_normal((8, 16))
        perm = rng.permutation(8)
        out1 = model.encode(PatchSequence(patches, (4, 2), np.arange(8)))
        out2 = model.encode(PatchSequence(patches[perm], (4, 2), np.arange(8)))
        assert torch.allclose(out1[perm], out2, atol=1e-9)

    def test_positions_break_equivariance(self, rng):
        model = AudioEncoder(TINY).double()
        patches = rng.standard_normal((8, 16))
        perm = np.array([1, 0, 2, 3, 4, 5, 6, 7])
        out1 = model.encode(PatchSequence(patches, (4, 2), np.arange(8)))
        out2 = model.encode(PatchSequence(patches[perm], (4, 2), np.arange(8)))
        assert not torch.allclose(out1[perm], out2, atol=1e-6)


class TestReconstruction:
    def test_masked_mse_against_naive(self, rng):
        pred = torch.tensor(rng.standard_normal((6, 4)))
        target = torch.tensor(rng.standard_normal((6, 4)))
        masked = np.array([1, 4])
        got = masked_mse(pred, target, masked).item()
        acc = []
        for i in masked:
            for j in range(4):
                acc.append((pred[i, j].item() - target[i, j].item()) ** 2)
        assert abs(got - sum(acc) / len(acc)) < 1e-12

    def test_loss_scalar_and_pred_full(self, rng):
        model = AudioEncoder(TINY)
        out = model.reconstruct(full_seq(rng), 0.5, seed=3)
        assert out.loss.ndim == 0
        assert out.loss.item() >= 0
        assert out.pred.shape == (8, 16)
        assert len(out.masked) == 4

    def test_visible_targets_never_scored(self, rng):
        model = AudioEncoder(TINY).double()
        seq = full_seq(rng)
        base = model.reconstruct(seq, 0.5, seed=11)
        targets = seq.patches.copy()
        visible = np.setdiff1d(np.arange(8), base.masked)
        targets[visible] += 100.0
        bumped = model.reconstruct(seq, 0.5, seed=11, targets=targets)
        assert bumped.loss.item() == base.loss.item()  # bit-identical

    def test_masked_targets_are_scored(self, rng):
        model = AudioEncoder(TINY).double()
        seq = full_seq(rng)
        base = model.reconstruct(seq, 0.5, seed=11)
        targets = seq.patches.copy()
        targets[base.masked[0]] += 100.0
        bumped = model.reconstruct(seq, 0.5, seed=11, targets=targets)
        assert bumped.loss.item() != base.loss.item()

    def test_same_seed_same_loss(self, rng):
        model = AudioEncoder(TINY)
        seq = full_seq(rng)
        a = model.reconstruct(seq, 0.75, seed=2).loss.item()
        b = model.reconstruct(seq, 0.75, seed=2).loss.item()
        assert a == b

    def test_gradients_match_finite_differences(self, rng):
        model = AudioEncoder(TINY).double()
        seq = full_seq(rng)
        loss = model.reconstruct(seq, 0.5, seed=4).loss
        model.zero_grad()
        loss.backward()

        param = dict(model.named_parameters())["blocks.0.attn.q_proj.weight"]
        probe = [(0, 0), (3, 7), (10, 2)]
        h = 1e-5
        for i, j in probe:
            analytic = param.grad[i, j].item()
            with torch.no_grad():
                orig = param[i, j].item()
                param[i, j] = orig + h
                up = AudioEncoder.reconstruct(model, seq, 0.5, seed=4).loss.item()
                param[i, j] = orig - h
                down = AudioEncoder.reconstruct(model, seq, 0.5, seed=4).loss.item()
                param[i, j] = orig
            fd = (up - down) / (2 * h)
            assert math.isclose(analytic, fd, rel_tol=1e-5, abs_tol=1e-7)
