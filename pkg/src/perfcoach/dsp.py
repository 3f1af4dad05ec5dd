"""Audio ingest and log-mel filterbank frontend.

Pipeline: load file -> mono clip in [-1, 1] -> resample to 32 kHz ->
128-band log-mel filterbank at 10 ms hop -> pad or truncate to a fixed
frame count -> cut into rectangular patches for the encoder.

Filterbank conventions: 25 ms Hann window, snip-edges framing (no
padding, frames = (n - window) // shift + 1), 1024-point FFT, power
spectrum, HTK-style mel triangles spanning 0..16 kHz with unit peak,
natural log with an absolute floor. No dither, preemphasis, or DC
removal.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import resample_poly

from . import audio_io
from .errors import InvalidAudio, InvalidConfig

TARGET_RATE = 32000
NUM_MELS = 128
DEFAULT_TARGET_FRAMES = 4096

MATRIX_MAGIC = b"PCFB"


@dataclass(frozen=True)
class FbankConfig:
    sample_rate: int = TARGET_RATE
    num_mels: int = NUM_MELS
    window_samples: int = 800  # 25 ms at 32 kHz
    shift_samples: int = 320  # 10 ms at 32 kHz
    n_fft: int = 1024
    fmin: float = 0.0
    fmax: float = 16000.0
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.sample_rate <= 0 or self.num_mels <= 0:
            raise InvalidConfig("sample_rate and num_mels must be positive")
        if self.shift_samples <= 0 or self.window_samples <= 0:
            raise InvalidConfig("window and shift must be positive")
        if self.n_fft < self.window_samples:
            raise InvalidConfig("n_fft must cover the window")
        if not 0 <= self.fmin < self.fmax <= self.sample_rate / 2:
            raise InvalidConfig("need 0 <= fmin < fmax <= nyquist")
        if self.log_floor <= 0:
            raise InvalidConfig("log_floor must be positive")

    @property
    def shift_ms(self) -> int:
        return round(1000 * self.shift_samples / self.sample_rate)


@dataclass(frozen=True)
class AudioClip:
    """Immutable mono waveform. Samples are float64 in [-1, 1]."""

    samples: np.ndarray
    rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise InvalidAudio("clip samples must be 1-D mono")
        if x.size == 0:
            raise InvalidAudio("clip has no samples")
        if self.rate <= 0:
            raise InvalidAudio(f"bad sample rate {self.rate}")
        x = x.copy()
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate


def load_clip(path) -> AudioClip:
    """Read WAV or FLAC, mix down to mono, bound the peak to 1."""
    x, rate = audio_io.read_audio(path)
    mono = x.mean(axis=1)
    peak = float(np.max(np.abs(mono))) if mono.size else 0.0
    if peak > 1.0:
        mono = mono / peak
    return AudioClip(mono, rate)


def resample(clip: AudioClip, target_rate: int = TARGET_RATE) -> AudioClip:
    if target_rate <= 0:
        raise InvalidAudio(f"bad target rate {target_rate}")
    if clip.rate == target_rate:
        return clip
    g = math.gcd(clip.rate, target_rate)
    y = resample_poly(clip.samples, target_rate // g, clip.rate // g)
    if y.size == 0:
        raise InvalidAudio("clip too short to resample")
    # polyphase ringing can overshoot slightly on sharp transients
    y = np.clip(y, -1.0, 1.0)
    return AudioClip(y, target_rate)


@lru_cache(maxsize=8)
def _mel_matrix(num_mels, n_fft, rate, fmin, fmax) -> np.ndarray:
    """(num_mels, n_fft//2 + 1) triangular weights, unit peak."""

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)

    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), num_mels + 2))
    bins = np.arange(n_fft // 2 + 1, dtype=np.float64) * rate / n_fft
    weights = np.zeros((num_mels, bins.size), dtype=np.float64)
    for m in range(num_mels):
        lo, center, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (bins - lo) / (center - lo)
        down = (hi - bins) / (hi - center)
        weights[m] = np.maximum(0.0, np.minimum(up, down))
    return weights


def frame_count(n_samples: int, config: FbankConfig) -> int:
    if n_samples < config.window_samples:
        return 0
    return (n_samples - config.window_samples) // config.shift_samples + 1


def compute_filterbank(clip: AudioClip, config: FbankConfig | None = None) -> np.ndarray:
    """Log-mel filterbank, shape (frames, num_mels), float64."""
    cfg = config or FbankConfig()
    if clip.rate != cfg.sample_rate:
        raise InvalidAudio(
            f"clip rate {clip.rate} != filterbank rate {cfg.sample_rate}; resample first"
        )
    n_frames = frame_count(clip.samples.size, cfg)
    if n_frames == 0:
        raise InvalidAudio(
            f"clip shorter than one window ({clip.samples.size} < {cfg.window_samples})"
        )

    idx = np.arange(cfg.window_samples)[None, :] + (
        cfg.shift_samples * np.arange(n_frames)[:, None]
    )
    frames = clip.samples[idx]
    window = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(cfg.window_samples) / (cfg.window_samples - 1)))
    spectrum = np.fft.rfft(frames * window, n=cfg.n_fft, axis=1)
    power = np.abs(spectrum) ** 2
    mel = power @ _mel_matrix(cfg.num_mels, cfg.n_fft, cfg.sample_rate, cfg.fmin, cfg.fmax).T
    return np.log(np.maximum(mel, cfg.log_floor))


def fix_length(fbank: np.ndarray, target_frames: int = DEFAULT_TARGET_FRAMES):
    """Truncate or zero-pad along time to exactly target_frames.

    Returns (fixed, valid_mask) where valid_mask is False on padded rows.
    Applying fix_length twice with the same target is a no-op.
    """
    if target_frames <= 0:
        raise InvalidConfig("target_frames must be positive")
    fb = np.asarray(fbank, dtype=np.float64)
    if fb.ndim != 2:
        raise InvalidConfig("filterbank must be 2-D (frames, mels)")
    n = fb.shape[0]
    mask = np.zeros(target_frames, dtype=bool)
    if n >= target_frames:
        mask[:] = True
        return fb[:target_frames].copy(), mask
    out = np.zeros((target_frames, fb.shape[1]), dtype=np.float64)
    out[:n] = fb
    mask[:n] = True
    return out, mask


def patchify(fbank: np.ndarray, patch_frames: int, patch_mels: int) -> np.ndarray:
    """Cut (frames, mels) into non-overlapping patches, row-major over the
    (time, mel) grid. Result is (n_patches, patch_frames * patch_mels)."""
    fb = np.asarray(fbank, dtype=np.float64)
    if fb.ndim != 2:
        raise InvalidConfig("filterbank must be 2-D")
    frames, mels = fb.shape
    if patch_frames <= 0 or patch_mels <= 0:
        raise InvalidConfig("patch dims must be positive")
    if frames % patch_frames or mels % patch_mels:
        raise InvalidConfig(
            f"patch grid {patch_frames}x{patch_mels} does not tile {frames}x{mels}"
        )
    gf, gm = frames // patch_frames, mels // patch_mels
    tiles = fb.reshape(gf, patch_frames, gm, patch_mels).transpose(0, 2, 1, 3)
    return tiles.reshape(gf * gm, patch_frames * patch_mels).copy()


def unpatchify(patches: np.ndarray, frames: int, mels: int, patch_frames: int, patch_mels: int) -> np.ndarray:
    p = np.asarray(patches, dtype=np.float64)
    gf, gm = frames // patch_frames, mels // patch_mels
    if frames % patch_frames or mels % patch_mels or p.shape != (gf * gm, patch_frames * patch_mels):
        raise InvalidConfig("patch array does not match the stated grid")
    tiles = p.reshape(gf, gm, patch_frames, patch_mels).transpose(0, 2, 1, 3)
    return tiles.reshape(frames, mels).copy()


def write_matrix(path, fbank: np.ndarray, shift_ms: int = 10) -> None:
    """Binary filterbank container: magic, frames, mels, hop in ms, then
    row-major float32 little-endian data."""
    fb = np.asarray(fbank)
    if fb.ndim != 2:
        raise InvalidConfig("filterbank must be 2-D")
    frames, mels = fb.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<III", frames, mels, shift_ms))
        fh.write(np.ascontiguousarray(fb, dtype="<f4").tobytes())


def read_matrix(path):
    """Inverse of write_matrix. Returns (fbank float32 (frames, mels), shift_ms)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16 or data[:4] != MATRIX_MAGIC:
        raise InvalidAudio(f"{path}: not a filterbank matrix file")
    frames, mels, shift_ms = struct.unpack("<III", data[4:16])
    expected = 16 + 4 * frames * mels
    if len(data) != expected:
        raise InvalidAudio(f"{path}: size mismatch ({len(data)} != {expected})")
    fb = np.frombuffer(data, dtype="<f4", offset=16).reshape(frames, mels)
    return fb.copy(), shift_ms
