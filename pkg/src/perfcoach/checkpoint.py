"""Checksummed checkpoint container.

Layout: 4-byte magic, little-endian uint64 payload length, 32-byte
sha256 of the payload, then the payload itself (a torch-serialized
dict of primitives and tensors). Truncated, oversized, or corrupted
files fail loudly with ChecksumError instead of deserializing garbage.
"""

from __future__ import annotations

import hashlib
import io
import struct

import torch

from .errors import ChecksumError

MAGIC = b"PCKP"
_HEADER = len(MAGIC) + 8 + 32


def save_checkpoint(path, payload: dict) -> None:
    buf = io.BytesIO()
    torch.save(payload, buf)
    data = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(data)))
        fh.write(hashlib.sha256(data).digest())
        fh.write(data)


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER or blob[:4] != MAGIC:
        raise ChecksumError(f"{path}: not a checkpoint file")
    (length,) = struct.unpack("<Q", blob[4:12])
    digest = blob[12:44]
    data = blob[44:]
    if len(data) != length:
        raise ChecksumError(f"{path}: payload length {len(data)} != header {length}")
    if hashlib.sha256(data).digest() != digest:
        raise ChecksumError(f"{path}: payload digest mismatch")
    return torch.load(io.BytesIO(data), weights_only=True)
