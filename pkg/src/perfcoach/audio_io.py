"""WAV and FLAC file readers plus small writers for fixtures and tools.

Readers return ``(samples, sample_rate)`` where ``samples`` is a float64
array of shape ``(n_samples, n_channels)`` scaled to [-1, 1]. No external
audio library is used: WAV chunks are parsed directly and FLAC is decoded
by a self-contained subset decoder (constant / verbatim / fixed / LPC
subframes with partitioned Rice residuals, all stereo decorrelation
modes). Frame CRCs are not verified on read; the writers emit correct
CRCs so produced files are standard.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import InvalidAudio

# ---------------------------------------------------------------------------
# WAV

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a RIFF/WAVE file (16/24/32-bit PCM or 32/64-bit float)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise InvalidAudio(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body = data[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned

    if fmt is None or payload is None:
        raise InvalidAudio(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise InvalidAudio(f"{path}: malformed fmt chunk")

    audio_format, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if audio_format == _WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 40:
        # sub-format GUID starts with the effective format code
        (audio_format,) = struct.unpack("<H", fmt[24:26])
    if channels < 1:
        raise InvalidAudio(f"{path}: zero channels")

    if audio_format == _WAVE_FORMAT_PCM:
        if bits == 16:
            x = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
        elif bits == 24:
            raw = np.frombuffer(payload, dtype=np.uint8)
            raw = raw[: (len(raw) // 3) * 3].reshape(-1, 3)
            vals = (
                raw[:, 0].astype(np.int32)
                | (raw[:, 1].astype(np.int32) << 8)
                | (raw[:, 2].astype(np.int32) << 16)
            )
            vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
            x = vals.astype(np.float64) / float(1 << 23)
        elif bits == 32:
            x = np.frombuffer(payload, dtype="<i4").astype(np.float64) / float(1 << 31)
        else:
            raise InvalidAudio(f"{path}: unsupported PCM bit depth {bits}")
    elif audio_format == _WAVE_FORMAT_IEEE_FLOAT:
        if bits == 32:
            x = np.frombuffer(payload, dtype="<f4").astype(np.float64)
        elif bits == 64:
            x = np.frombuffer(payload, dtype="<f8").astype(np.float64)
        else:
            raise InvalidAudio(f"{path}: unsupported float bit depth {bits}")
    else:
        raise InvalidAudio(f"{path}: unsupported WAVE format code {audio_format:#x}")

    x = x[: (len(x) // channels) * channels].reshape(-1, channels)
    if x.size == 0:
        raise InvalidAudio(f"{path}: empty data chunk")
    return x, rate


def write_wav(path, samples: np.ndarray, rate: int, bits=16) -> None:
    """Write samples (1-D mono or (n, ch)) as PCM 16/24 or float32 WAV."""
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    channels = x.shape[1]

    if bits == 16:
        fmt_code, block = _WAVE_FORMAT_PCM, 2 * channels
        ints = np.clip(np.rint(x * 32767.0), -32768, 32767).astype("<i2")
        payload = ints.tobytes()
    elif bits == 24:
        fmt_code, block = _WAVE_FORMAT_PCM, 3 * channels
        vals = np.clip(np.rint(x * float((1 << 23) - 1)), -(1 << 23), (1 << 23) - 1)
        vals = vals.astype(np.int32).reshape(-1)
        out = np.empty((len(vals), 3), dtype=np.uint8)
        out[:, 0] = vals & 0xFF
        out[:, 1] = (vals >> 8) & 0xFF
        out[:, 2] = (vals >> 16) & 0xFF
        payload = out.tobytes()
    elif bits == "float" or bits == 32:
        fmt_code, block = _WAVE_FORMAT_IEEE_FLOAT, 4 * channels
        payload = x.astype("<f4").tobytes()
    else:
        raise ValueError(f"unsupported bits: {bits!r}")

    bps = {2 * channels: 16, 3 * channels: 24, 4 * channels: 32}[block]
    fmt = struct.pack("<HHIIHH", fmt_code, channels, rate, rate * block, block, bps)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


# ---------------------------------------------------------------------------
# FLAC bit-level helpers

_CRC8_POLY = 0x07
_CRC16_POLY = 0x8005


def _crc8(data: bytes) -> int:
    crc = 0
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = ((crc << 1) ^ _CRC8_POLY) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
    return crc


def _crc16(data: bytes) -> int:
    crc = 0
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            if crc & 0x8000:
                crc = ((crc << 1) ^ _CRC16_POLY) & 0xFFFF
            else:
                crc = (crc << 1) & 0xFFFF
    return crc


class _BitReader:
    """MSB-first bit reader over a bytes object."""

    def __init__(self, data: bytes, byte_pos: int = 0):
        self.data = data
        self.byte = byte_pos
        self.bit = 0

    def eof(self) -> bool:
        return self.byte >= len(self.data)

    def read_uint(self, n: int) -> int:
        out = 0
        for _ in range(n):
            if self.byte >= len(self.data):
                raise InvalidAudio("flac: truncated stream")
            out = (out << 1) | ((self.data[self.byte] >> (7 - self.bit)) & 1)
            self.bit += 1
            if self.bit == 8:
                self.bit = 0
                self.byte += 1
        return out

    def read_int(self, n: int) -> int:
        v = self.read_uint(n)
        if v >= 1 << (n - 1):
            v -= 1 << n
        return v

    def read_unary(self) -> int:
        """Count of 0 bits before the next 1 bit."""
        count = 0
        while True:
            if self.byte >= len(self.data):
                raise InvalidAudio("flac: truncated stream")
            cur = self.data[self.byte]
            rem = 8 - self.bit
            chunk = cur & ((1 << rem) - 1)
            if chunk == 0:
                count += rem
                self.byte += 1
                self.bit = 0
                continue
            lead = rem - chunk.bit_length()
            count += lead
            self.bit += lead + 1
            if self.bit >= 8:
                self.bit -= 8
                self.byte += 1
            return count

    def align(self) -> None:
        if self.bit:
            self.bit = 0
            self.byte += 1


class _BitWriter:
    def __init__(self):
        self.buf = bytearray()
        self.acc = 0
        self.nbits = 0

    def write_uint(self, value: int, n: int) -> None:
        self.acc = (self.acc << n) | (value & ((1 << n) - 1))
        self.nbits += n
        while self.nbits >= 8:
            self.nbits -= 8
            self.buf.append((self.acc >> self.nbits) & 0xFF)
        self.acc &= (1 << self.nbits) - 1

    def write_int(self, value: int, n: int) -> None:
        self.write_uint(value & ((1 << n) - 1), n)

    def align(self) -> None:
        if self.nbits:
            self.write_uint(0, 8 - self.nbits)

    def getvalue(self) -> bytes:
        return bytes(self.buf)


# ---------------------------------------------------------------------------
# FLAC decoding

_FIXED_COEFFS = {
    0: [],
    1: [1],
    2: [2, -1],
    3: [3, -3, 1],
    4: [4, -6, 4, -1],
}

_BLOCKSIZE_TABLE = {
    1: 192, 2: 576, 3: 1152, 4: 2304, 5: 4608,
    8: 256, 9: 512, 10: 1024, 11: 2048, 12: 4096, 13: 8192, 14: 16384, 15: 32768,
}

_SAMPLE_RATE_TABLE = {
    1: 88200, 2: 176400, 3: 192000, 4: 8000, 5: 16000, 6: 22050, 7: 24000,
    8: 32000, 9: 44100, 10: 48000, 11: 96000,
}


def _read_utf8_number(br: _BitReader) -> int:
    first = br.read_uint(8)
    if first < 0x80:
        return first
    ones = 0
    probe = first
    while probe & 0x80:
        ones += 1
        probe = (probe << 1) & 0xFF
    if ones < 2 or ones > 7:
        raise InvalidAudio("flac: bad coded number")
    value = first & (0x7F >> ones)
    for _ in range(ones - 1):
        byte = br.read_uint(8)
        if byte & 0xC0 != 0x80:
            raise InvalidAudio("flac: bad coded number continuation")
        value = (value << 6) | (byte & 0x3F)
    return value


def _decode_residual(br: _BitReader, blocksize: int, pred_order: int) -> list[int]:
    method = br.read_uint(2)
    if method > 1:
        raise InvalidAudio("flac: reserved residual coding method")
    param_bits = 4 if method == 0 else 5
    escape = (1 << param_bits) - 1
    part_order = br.read_uint(4)
    n_parts = 1 << part_order
    if blocksize % n_parts:
        raise InvalidAudio("flac: partition order does not divide block size")
    residual = []
    for part in range(n_parts):
        count = (blocksize >> part_order) - (pred_order if part == 0 else 0)
        param = br.read_uint(param_bits)
        if param == escape:
            raw_bits = br.read_uint(5)
            if raw_bits == 0:
                residual.extend([0] * count)
            else:
                residual.extend(br.read_int(raw_bits) for _ in range(count))
        else:
            for _ in range(count):
                q = br.read_unary()
                u = (q << param) | br.read_uint(param) if param else q
                residual.append((u >> 1) ^ -(u & 1))
    return residual


def _decode_subframe(br: _BitReader, blocksize: int, bps: int) -> list[int]:
    if br.read_uint(1):
        raise InvalidAudio("flac: subframe padding bit set")
    stype = br.read_uint(6)
    wasted = 0
    if br.read_uint(1):
        wasted = br.read_unary() + 1
    eff_bps = bps - wasted

    if stype == 0:  # CONSTANT
        value = br.read_int(eff_bps)
        samples = [value] * blocksize
    elif stype == 1:  # VERBATIM
        samples = [br.read_int(eff_bps) for _ in range(blocksize)]
    elif 8 <= stype <= 12:  # FIXED, order = stype - 8
        order = stype - 8
        samples = [br.read_int(eff_bps) for _ in range(order)]
        residual = _decode_residual(br, blocksize, order)
        coeffs = _FIXED_COEFFS[order]
        for r in residual:
            pred = sum(c * samples[-1 - j] for j, c in enumerate(coeffs))
            samples.append(r + pred)
    elif stype >= 32:  # LPC, order = stype - 31
        order = stype - 31
        samples = [br.read_int(eff_bps) for _ in range(order)]
        precision = br.read_uint(4) + 1
        if precision == 16:
            raise InvalidAudio("flac: invalid lpc precision")
        shift = br.read_int(5)
        if shift < 0:
            raise InvalidAudio("flac: negative lpc shift")
        coeffs = [br.read_int(precision) for _ in range(order)]
        residual = _decode_residual(br, blocksize, order)
        for r in residual:
            pred = sum(c * samples[-1 - j] for j, c in enumerate(coeffs)) >> shift
            samples.append(r + pred)
    else:
        raise InvalidAudio(f"flac: reserved subframe type {stype}")

    if wasted:
        samples = [s << wasted for s in samples]
    return samples


def read_flac(path) -> tuple[np.ndarray, int]:
    """Decode a FLAC file to float64 samples in [-1, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"fLaC":
        raise InvalidAudio(f"{path}: not a FLAC file")

    pos = 4
    streaminfo = None
    while True:
        if pos + 4 > len(data):
            raise InvalidAudio(f"{path}: truncated metadata")
        header = data[pos]
        last = bool(header & 0x80)
        btype = header & 0x7F
        length = int.from_bytes(data[pos + 1 : pos + 4], "big")
        if btype == 0:
            streaminfo = data[pos + 4 : pos + 4 + length]
        pos += 4 + length
        if last:
            break
    if streaminfo is None or len(streaminfo) < 34:
        raise InvalidAudio(f"{path}: missing STREAMINFO")

    si = _BitReader(streaminfo)
    si.read_uint(16)  # min blocksize
    si.read_uint(16)  # max blocksize
    si.read_uint(24)  # min framesize
    si.read_uint(24)  # max framesize
    rate = si.read_uint(20)
    channels = si.read_uint(3) + 1
    bps = si.read_uint(5) + 1
    total = si.read_uint(36)

    br = _BitReader(data, pos)
    out = [[] for _ in range(channels)]
    decoded = 0
    while (total == 0 or decoded < total) and not br.eof():
        sync = br.read_uint(14)
        if sync != 0b11111111111110:
            raise InvalidAudio(f"{path}: lost frame sync")
        br.read_uint(1)  # reserved
        br.read_uint(1)  # blocking strategy
        bs_code = br.read_uint(4)
        sr_code = br.read_uint(4)
        chan_code = br.read_uint(4)
        size_code = br.read_uint(3)
        br.read_uint(1)  # reserved
        _read_utf8_number(br)
        if bs_code == 6:
            blocksize = br.read_uint(8) + 1
        elif bs_code == 7:
            blocksize = br.read_uint(16) + 1
        else:
            blocksize = _BLOCKSIZE_TABLE.get(bs_code)
            if blocksize is None:
                raise InvalidAudio(f"{path}: reserved blocksize code")
        if sr_code == 12:
            br.read_uint(8)
        elif sr_code in (13, 14):
            br.read_uint(16)
        frame_bps = {1: 8, 2: 12, 4: 16, 5: 20, 6: 24, 7: 32}.get(size_code, bps)
        br.read_uint(8)  # CRC-8 (not verified)

        if chan_code <= 7:
            n_chan = chan_code + 1
            subs = [_decode_subframe(br, blocksize, frame_bps) for _ in range(n_chan)]
        elif chan_code == 8:  # left/side
            left = _decode_subframe(br, blocksize, frame_bps)
            side = _decode_subframe(br, blocksize, frame_bps + 1)
            subs = [left, [l - s for l, s in zip(left, side)]]
        elif chan_code == 9:  # right/side
            side = _decode_subframe(br, blocksize, frame_bps + 1)
            right = _decode_subframe(br, blocksize, frame_bps)
            subs = [[r + s for r, s in zip(right, side)], right]
        elif chan_code == 10:  # mid/side
            mid = _decode_subframe(br, blocksize, frame_bps)
            side = _decode_subframe(br, blocksize, frame_bps + 1)
            subs = [[], []]
            for m, s in zip(mid, side):
                m = (m << 1) | (s & 1)
                subs[0].append((m + s) >> 1)
                subs[1].append((m - s) >> 1)
        else:
            raise InvalidAudio(f"{path}: reserved channel assignment")

        if len(subs) != channels:
            raise InvalidAudio(f"{path}: channel count changed mid-stream")
        for ch, sub in enumerate(subs):
            out[ch].extend(sub)
        decoded += blocksize
        br.align()
        br.read_uint(16)  # CRC-16 (not verified)

    if total:
        out = [ch[:total] for ch in out]
    if not out[0]:
        raise InvalidAudio(f"{path}: no audio frames")
    scale = float(1 << (bps - 1))
    x = np.stack([np.asarray(ch, dtype=np.float64) for ch in out], axis=1) / scale
    return x, rate


# ---------------------------------------------------------------------------
# FLAC encoding (verbatim subframes; used for fixtures and the clip store)

def write_flac(path, samples: np.ndarray, rate: int, bits: int = 16) -> None:
    """Encode samples as FLAC with verbatim subframes (no compression)."""
    if bits not in (16, 24):
        raise ValueError("write_flac supports 16 or 24 bit")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, channels = x.shape
    full = float((1 << (bits - 1)) - 1)
    ints = np.clip(np.rint(x * full), -(1 << (bits - 1)), (1 << (bits - 1)) - 1)
    ints = ints.astype(np.int64)

    blocksize = 4096
    n_blocks = (n + blocksize - 1) // blocksize

    si = _BitWriter()
    last_size = n - (n_blocks - 1) * blocksize
    si.write_uint(min(blocksize, last_size), 16)
    si.write_uint(min(blocksize, n), 16)
    si.write_uint(0, 24)
    si.write_uint(0, 24)
    si.write_uint(rate, 20)
    si.write_uint(channels - 1, 3)
    si.write_uint(bits - 1, 5)
    si.write_uint(n, 36)
    streaminfo = si.getvalue() + b"\x00" * 16  # MD5 unset

    frames = bytearray()
    for idx in range(n_blocks):
        block = ints[idx * blocksize : (idx + 1) * blocksize]
        bs = len(block)
        bw = _BitWriter()
        bw.write_uint(0b11111111111110, 14)
        bw.write_uint(0, 1)
        bw.write_uint(0, 1)  # fixed blocksize strategy
        bw.write_uint(7, 4)  # blocksize at end, 16 bit
        bw.write_uint(0, 4)  # sample rate from STREAMINFO
        bw.write_uint(channels - 1, 4)
        bw.write_uint(4 if bits == 16 else 6, 3)
        bw.write_uint(0, 1)
        # frame index as UTF-8 coded number
        if idx < 0x80:
            bw.write_uint(idx, 8)
        else:
            bw.write_uint(0xC0 | (idx >> 6), 8)
            bw.write_uint(0x80 | (idx & 0x3F), 8)
        bw.write_uint(bs - 1, 16)
        header = bw.getvalue()
        assert bw.nbits == 0
        frame = bytearray(header)
        frame.append(_crc8(bytes(frame)))

        sw = _BitWriter()
        for ch in range(channels):
            sw.write_uint(0, 1)
            sw.write_uint(1, 6)  # VERBATIM
            sw.write_uint(0, 1)
            for v in block[:, ch]:
                sw.write_int(int(v), bits)
        sw.align()
        frame += sw.getvalue()
        frame += struct.pack(">H", _crc16(bytes(frame)))
        frames += frame

    with open(path, "wb") as fh:
        fh.write(b"fLaC")
        fh.write(bytes([0x80]))  # last metadata block, type 0
        fh.write(len(streaminfo).to_bytes(3, "big"))
        fh.write(streaminfo)
        fh.write(bytes(frames))


# ---------------------------------------------------------------------------

def read_audio(path) -> tuple[np.ndarray, int]:
    """Read a WAV or FLAC file, sniffing the container by magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"RIFF":
        return read_wav(path)
    if magic == b"fLaC":
        return read_flac(path)
    raise InvalidAudio(f"{path}: unrecognized container (not WAV or FLAC)")
