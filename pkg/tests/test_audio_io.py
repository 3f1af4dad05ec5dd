import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perfcoach import audio_io
from perfcoach.errors import InvalidAudio


class _Bits:
    """Test-local MSB-first bit writer, independent of the package's."""

    def __init__(self):
        self.bits = []

    def put(self, value, n):
        for i in range(n - 1, -1, -1):
            self.bits.append((value >> i) & 1)

    def put_signed(self, value, n):
        self.put(value & ((1 << n) - 1), n)

    def bytes(self):
        while len(self.bits) % 8:
            self.bits.append(0)
        out = bytearray()
        for i in range(0, len(self.bits), 8):
            byte = 0
            for b in self.bits[i : i + 8]:
                byte = (byte << 1) | b
            out.append(byte)
        return bytes(out)


def _flac_stream(frame_payloads, rate=32000, channels=1, bps=16, total=0, blocksizes=None):
    """Wrap raw frame bit-payloads (after the CRC-8 byte) into a FLAC file body."""
    si = _Bits()
    si.put(16, 16)
    si.put(65535, 16)
    si.put(0, 24)
    si.put(0, 24)
    si.put(rate, 20)
    si.put(channels - 1, 3)
    si.put(bps - 1, 5)
    si.put(total, 36)
    streaminfo = si.bytes() + b"\x00" * 16
    out = b"fLaC" + bytes([0x80]) + len(streaminfo).to_bytes(3, "big") + streaminfo
    for i, payload in enumerate(frame_payloads):
        bs = blocksizes[i]
        hdr = _Bits()
        hdr.put(0b11111111111110, 14)
        hdr.put(0, 1)
        hdr.put(0, 1)
        hdr.put(7, 4)  # 16-bit blocksize at end
        hdr.put(0, 4)  # rate from streaminfo
        hdr.put(channels - 1 if channels <= 2 else 0, 4)
        hdr.put({8: 1, 16: 4, 24: 6}[bps], 3)
        hdr.put(0, 1)
        hdr.put(i, 8)  # frame number (assumes i < 128)
        hdr.put(bs - 1, 16)
        header = hdr.bytes()
        frame = header + bytes([_ref_crc8(header)]) + payload
        frame += struct.pack(">H", _ref_crc16(frame))
        out += frame
    return out


def _ref_crc8(data):
    crc = 0
    for byte in data:
        for i in range(7, -1, -1):
            bit = (byte >> i) & 1
            crc = ((crc << 1) & 0xFF) ^ (0x07 if (crc >> 7) ^ bit else 0)
    return crc


def _ref_crc16(data):
    crc = 0
    for byte in data:
        for i in range(7, -1, -1):
            bit = (byte >> i) & 1
            crc = ((crc << 1) & 0xFFFF) ^ (0x8005 if (crc >> 15) ^ bit else 0)
    return crc


class TestCrc:
    def test_crc8_catalog_check_value(self):
        # standard check value for poly 0x07, init 0, no reflection
        assert audio_io._crc8(b"123456789") == 0xF4
        assert _ref_crc8(b"123456789") == 0xF4

    def test_crc16_catalog_check_value(self):
        # CRC-16 with poly 0x8005, init 0, no reflection
        assert audio_io._crc16(b"123456789") == 0xFEE8
        assert _ref_crc16(b"123456789") == 0xFEE8

    @given(st.binary(min_size=0, max_size=64))
    def test_crc_implementations_agree(self, data):
        assert audio_io._crc8(data) == _ref_crc8(data)
        assert audio_io._crc16(data) == _ref_crc16(data)


class TestWav:
    @pytest.mark.parametrize("bits", [16, 24, "float"])
    def test_round_trip_mono(self, tmp_path, make_sine, bits):
        x = make_sine(440.0, 0.05)
        path = tmp_path / "tone.wav"
        audio_io.write_wav(path, x, 32000, bits=bits)
        y, rate = audio_io.read_wav(path)
        assert rate == 32000
        assert y.shape == (len(x), 1)
        tol = {16: 2e-4, 24: 2e-6, "float": 1e-7}[bits]
        assert np.max(np.abs(y[:, 0] - x)) < tol

    def test_round_trip_stereo(self, tmp_path, rng):
        x = rng.uniform(-0.9, 0.9, size=(500, 2))
        path = tmp_path / "st.wav"
        audio_io.write_wav(path, x, 44100, bits=16)
        y, rate = audio_io.read_wav(path)
        assert rate == 44100
        assert y.shape == (500, 2)
        assert np.max(np.abs(y - x)) < 2e-4

    def test_rejects_non_wav(self, tmp_path):
        path = tmp_path / "x.wav"
        path.write_bytes(b"JUNKJUNKJUNKJUNK")
        with pytest.raises(InvalidAudio):
            audio_io.read_wav(path)

    def test_rejects_empty_data(self, tmp_path):
        fmt = struct.pack("<HHIIHH", 1, 1, 32000, 64000, 2, 16)
        body = b"WAVEfmt " + struct.pack("<I", len(fmt)) + fmt
        body += b"data" + struct.pack("<I", 0)
        path = tmp_path / "empty.wav"
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(InvalidAudio):
            audio_io.read_wav(path)

    def test_skips_extra_chunks(self, tmp_path):
        samples = np.array([0.0, 0.25, -0.25, 0.5])
        payload = np.clip(np.rint(samples * 32767), -32768, 32767).astype("<i2").tobytes()
        fmt = struct.pack("<HHIIHH", 1, 1, 8000, 16000, 2, 16)
        body = b"WAVE"
        body += b"LIST" + struct.pack("<I", 4) + b"INFO"
        body += b"fmt " + struct.pack("<I", len(fmt)) + fmt
        body += b"data" + struct.pack("<I", len(payload)) + payload
        path = tmp_path / "chunks.wav"
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        y, rate = audio_io.read_wav(path)
        assert rate == 8000
        assert np.max(np.abs(y[:, 0] - samples)) < 2e-4


class TestFlacDecoder:
    def test_constant_subframe(self, tmp_path):
        bs = 32
        sub = _Bits()
        sub.put(0, 1)
        sub.put(0, 6)  # constant
        sub.put(0, 1)
        sub.put_signed(1000, 16)
        data = _flac_stream([sub.bytes()], total=bs, blocksizes=[bs])
        path = tmp_path / "const.flac"
        path.write_bytes(data)
        y, rate = audio_io.read_flac(path)
        assert rate == 32000
        expected = 1000 / 32768.0
        assert np.allclose(y[:, 0], expected)
        assert len(y) == bs

    def test_verbatim_subframe(self, tmp_path, rng):
        bs = 64
        vals = rng.integers(-30000, 30000, size=bs)
        sub = _Bits()
        sub.put(0, 1)
        sub.put(1, 6)  # verbatim
        sub.put(0, 1)
        for v in vals:
            sub.put_signed(int(v), 16)
        path = tmp_path / "verb.flac"
        path.write_bytes(_flac_stream([sub.bytes()], total=bs, blocksizes=[bs]))
        y, _ = audio_io.read_flac(path)
        assert np.array_equal(np.rint(y[:, 0] * 32768.0).astype(int), vals)

    def test_fixed_order1_with_rice_residual(self, tmp_path):
        # samples are 0..15: warmup [0], then residual 1 at each step.
        bs = 16
        sub = _Bits()
        sub.put(0, 1)
        sub.put(8 + 1, 6)  # fixed, order 1
        sub.put(0, 1)
        sub.put_signed(0, 16)  # warmup
        sub.put(0, 2)  # 4-bit rice params
        sub.put(0, 4)  # partition order 0
        sub.put(2, 4)  # rice parameter 2
        for _ in range(bs - 1):
            # residual 1 -> zigzag 2 -> quotient 0, remainder 2
            sub.put(1, 1)  # unary 0
            sub.put(2, 2)
        path = tmp_path / "fixed.flac"
        path.write_bytes(_flac_stream([sub.bytes()], total=bs, blocksizes=[bs]))
        y, _ = audio_io.read_flac(path)
        assert np.array_equal(np.rint(y[:, 0] * 32768.0).astype(int), np.arange(bs))

    def test_fixed_order2_negative_residuals(self, tmp_path):
        bs = 8
        expected = [10, 8]
        residuals = [-1, 2, -3, 1, 0, -2]
        for r in residuals:
            expected.append(r + 2 * expected[-1] - expected[-2])
        sub = _Bits()
        sub.put(0, 1)
        sub.put(8 + 2, 6)
        sub.put(0, 1)
        sub.put_signed(10, 16)
        sub.put_signed(8, 16)
        sub.put(0, 2)
        sub.put(0, 4)
        sub.put(3, 4)  # rice param 3
        for r in residuals:
            u = (r << 1) ^ (r >> 63) if r >= 0 else ((-r) << 1) - 1
            q, rem = u >> 3, u & 7
            for _ in range(q):
                sub.put(0, 1)
            sub.put(1, 1)
            sub.put(rem, 3)
        path = tmp_path / "fixed2.flac"
        path.write_bytes(_flac_stream([sub.bytes()], total=bs, blocksizes=[bs]))
        y, _ = audio_io.read_flac(path)
        assert np.array_equal(np.rint(y[:, 0] * 32768.0).astype(int), expected)

    def test_rice_escape_partition(self, tmp_path):
        bs = 8
        vals = [5, -7, 100, -100, 3, 0, -1, 77]
        sub = _Bits()
        sub.put(0, 1)
        sub.put(8 + 0, 6)  # fixed order 0: residual == samples
        sub.put(0, 1)
        sub.put(0, 2)
        sub.put(0, 4)
        sub.put(15, 4)  # escape
        sub.put(9, 5)  # 9 raw bits per residual
        for v in vals:
            sub.put_signed(v, 9)
        path = tmp_path / "escape.flac"
        path.write_bytes(_flac_stream([sub.bytes()], total=bs, blocksizes=[bs]))
        y, _ = audio_io.read_flac(path)
        assert np.array_equal(np.rint(y[:, 0] * 32768.0).astype(int), vals)

    def test_mid_side_reconstruction(self, tmp_path):
        left = [100, -50, 1234, -4096, 7, 0, -1, 32000]
        right = [90, -60, 1200, -4000, -7, 1, -2, -32000]
        bs = len(left)
        body = _Bits()
        # frame header with channel assignment 10 (mid/side)
        body.put(0b11111111111110, 14)
        body.put(0, 2)
        body.put(7, 4)
        body.put(0, 4)
        body.put(10, 4)
        body.put(4, 3)
        body.put(0, 1)
        body.put(0, 8)
        body.put(bs - 1, 16)
        header = body.bytes()
        payload = _Bits()
        mids = [(l + r) >> 1 for l, r in zip(left, right)]
        sides = [l - r for l, r in zip(left, right)]
        payload.put(0, 1)
        payload.put(1, 6)
        payload.put(0, 1)
        for m in mids:
            payload.put_signed(m, 16)
        payload.put(0, 1)
        payload.put(1, 6)
        payload.put(0, 1)
        for s in sides:
            payload.put_signed(s, 17)  # side channel carries one extra bit
        frame = header + bytes([_ref_crc8(header)]) + payload.bytes()
        frame += struct.pack(">H", _ref_crc16(frame))

        si = _Bits()
        si.put(16, 16)
        si.put(65535, 16)
        si.put(0, 48)
        si.put(32000, 20)
        si.put(1, 3)  # 2 channels
        si.put(15, 5)  # 16 bps
        si.put(bs, 36)
        streaminfo = si.bytes() + b"\x00" * 16
        data = b"fLaC" + bytes([0x80]) + len(streaminfo).to_bytes(3, "big") + streaminfo + frame
        path = tmp_path / "ms.flac"
        path.write_bytes(data)
        y, _ = audio_io.read_flac(path)
        got = np.rint(y * 32768.0).astype(int)
        assert got[:, 0].tolist() == left
        assert got[:, 1].tolist() == right

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.flac"
        path.write_bytes(b"fLaX" + b"\x00" * 64)
        with pytest.raises(InvalidAudio):
            audio_io.read_flac(path)


class TestFlacWriter:
    def test_encoder_decoder_round_trip_exact(self, tmp_path, rng):
        x = rng.uniform(-0.99, 0.99, size=5000)
        path = tmp_path / "rt.flac"
        audio_io.write_flac(path, x, 32000, bits=16)
        y, rate = audio_io.read_flac(path)
        assert rate == 32000
        assert y.shape == (5000, 1)
        expected = np.clip(np.rint(x * 32767.0), -32768, 32767) / 32768.0
        assert np.array_equal(y[:, 0], expected)

    def test_multi_frame_and_stereo(self, tmp_path, rng):
        x = rng.uniform(-0.5, 0.5, size=(9000, 2))  # spans three 4096 blocks
        path = tmp_path / "big.flac"
        audio_io.write_flac(path, x, 44100, bits=24)
        y, rate = audio_io.read_flac(path)
        assert rate == 44100
        assert y.shape == (9000, 2)
        full = float((1 << 23) - 1)
        expected = np.clip(np.rint(x * full), -(1 << 23), (1 << 23) - 1) / float(1 << 23)
        assert np.array_equal(y, expected)

    def test_sniffing_dispatch(self, tmp_path, make_sine):
        x = make_sine(440.0, 0.02)
        wav, flac = tmp_path / "a.wav", tmp_path / "a.flac"
        audio_io.write_wav(wav, x, 32000)
        audio_io.write_flac(flac, x, 32000)
        yw, rw = audio_io.read_audio(wav)
        yf, rf = audio_io.read_audio(flac)
        assert rw == rf == 32000
        assert np.max(np.abs(yw - yf)) < 1e-4
        with pytest.raises(InvalidAudio):
            junk = tmp_path / "junk.bin"
            junk.write_bytes(b"\x01\x02\x03\x04rest")
            audio_io.read_audio(junk)
