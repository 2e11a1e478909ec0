import struct

import numpy as np
import pytest

from wavetrunk.audiopipe import AudioClip, WavFormatError, load_wav, read_wav, save_wav, write_wav


class TestReadWrite:
    def test_pcm16_scaling(self, tmp_path):
        path = tmp_path / "a.wav"
        write_wav(path, np.array([16384 / 32768.0, -0.25, 0.0]), 16000)
        samples, rate = read_wav(path)
        assert rate == 16000
        assert samples[0, 0] == pytest.approx(0.5)

    def test_one_second_file(self, tmp_path):
        path = tmp_path / "sec.wav"
        write_wav(path, np.zeros(44100), 44100)
        clip = load_wav(path)
        assert len(clip) == 44100 and clip.sample_rate == 44100

    def test_pcm16_roundtrip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        values = rng.integers(-32768, 32768, size=512) / 32768.0  # representable grid
        path = tmp_path / "rt.wav"
        save_wav(AudioClip(values, 16000), path)
        back = load_wav(path)
        np.testing.assert_array_equal(back.samples, values)

    def test_float32_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.uniform(-1, 1, 300).astype(np.float32)
        path = tmp_path / "f32.wav"
        write_wav(path, values, 22050, sample_format="float32")
        samples, rate = read_wav(path)
        assert rate == 22050
        np.testing.assert_array_equal(samples[:, 0], values.astype(np.float64))

    def test_stereo_averaged_to_mono(self, tmp_path):
        left = np.full(100, 0.5)
        right = np.full(100, -0.25)
        path = tmp_path / "st.wav"
        write_wav(path, np.stack([left, right], axis=1), 8000)
        clip = load_wav(path)
        np.testing.assert_allclose(clip.samples, 0.125, atol=1e-4)

    def test_pcm16_clipping_at_full_scale(self, tmp_path):
        path = tmp_path / "cl.wav"
        write_wav(path, np.array([1.0, -1.0]), 8000)
        samples, _ = read_wav(path)
        assert samples[0, 0] == pytest.approx(32767 / 32768.0)
        assert samples[1, 0] == pytest.approx(-1.0)


class TestFormatErrors:
    def test_bad_magic_reports_offset_zero(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"JUNKJUNKJUNKJUNK")
        with pytest.raises(WavFormatError, match="offset 0"):
            read_wav(path)
        try:
            read_wav(path)
        except WavFormatError as e:
            assert e.offset == 0

    def test_bad_form_type_reports_offset_eight(self, tmp_path):
        path = tmp_path / "bad2.wav"
        path.write_bytes(b"RIFF" + struct.pack("<I", 8) + b"EVAW" + b"\x00" * 8)
        with pytest.raises(WavFormatError, match="offset 8"):
            read_wav(path)

    def test_unsupported_codec_named(self, tmp_path):
        path = tmp_path / "law.wav"
        write_wav(path, np.zeros(16), 8000)
        blob = bytearray(path.read_bytes())
        blob[20:22] = struct.pack("<H", 7)  # mu-law
        path.write_bytes(bytes(blob))
        with pytest.raises(WavFormatError, match="unsupported codec"):
            read_wav(path)

    def test_truncated_data_chunk(self, tmp_path):
        path = tmp_path / "tr.wav"
        write_wav(path, np.zeros(1000), 8000)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 500])
        with pytest.raises(WavFormatError, match="past end"):
            read_wav(path)

    def test_missing_data_chunk(self, tmp_path):
        path = tmp_path / "nd.wav"
        header = struct.pack(
            "<4sI4s4sIHHIIHH", b"RIFF", 28, b"WAVE", b"fmt ", 16, 1, 1, 8000, 16000, 2, 16
        )
        path.write_bytes(header)
        with pytest.raises(WavFormatError, match="no data chunk"):
            read_wav(path)

    def test_unknown_chunks_are_skipped(self, tmp_path):
        path = tmp_path / "extra.wav"
        write_wav(path, np.array([0.5, -0.5]), 8000)
        blob = path.read_bytes()
        # splice a LIST chunk between fmt and data
        head, rest = blob[:36], blob[36:]
        extra = b"LIST" + struct.pack("<I", 4) + b"INFO"
        patched = bytearray(head + extra + rest)
        patched[4:8] = struct.pack("<I", len(patched) - 8)
        path.write_bytes(bytes(patched))
        samples, _ = read_wav(path)
        assert samples.shape == (2, 1)
