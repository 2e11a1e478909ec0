"""Little-endian RIFF/WAVE reader and writer for PCM16 and float32 payloads.

Hand-rolled so malformed files can be reported with the byte offset of the
problem, which library readers do not surface.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


class WavFormatError(ValueError):
    """Malformed or unsupported WAV content, with the offending byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


_PCM = 1
_IEEE_FLOAT = 3


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file into (samples, sample_rate).

    samples has shape (frames, channels) and dtype float64; 16-bit PCM is
    scaled by 1/32768, float32 payloads pass through.
    """
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise WavFormatError("file too short for a RIFF header", 0)
    if blob[0:4] != b"RIFF":
        raise WavFormatError("missing RIFF magic", 0)
    if blob[8:12] != b"WAVE":
        raise WavFormatError("missing WAVE form type", 8)

    fmt = None
    fmt_offset = 0
    pos = 12
    while pos + 8 <= len(blob):
        chunk_id = blob[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", blob, pos + 4)
        body = pos + 8
        if body + chunk_size > len(blob):
            raise WavFormatError(f"chunk {chunk_id!r} runs past end of file", pos)
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise WavFormatError("fmt chunk too short", pos)
            fmt = struct.unpack_from("<HHIIHH", blob, body)
            fmt_offset = body
        elif chunk_id == b"data":
            if fmt is None:
                raise WavFormatError("data chunk before fmt chunk", pos)
            return _decode(blob[body : body + chunk_size], fmt, fmt_offset, body)
        pos = body + chunk_size + (chunk_size & 1)  # chunks are word-aligned
    raise WavFormatError("no data chunk found", pos)


def _decode(payload: bytes, fmt, fmt_offset: int, data_offset: int) -> tuple[np.ndarray, int]:
    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if channels < 1:
        raise WavFormatError("zero channels", fmt_offset + 2)
    if audio_format == _PCM and bits == 16:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        samples = raw.astype(np.float64) / 32768.0
    elif audio_format == _IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        samples = raw.astype(np.float64)
    else:
        raise WavFormatError(
            f"unsupported codec: format {audio_format}, {bits} bits "
            "(PCM 16-bit and IEEE float 32-bit are supported)",
            fmt_offset,
        )
    frames = samples.size // channels
    if frames * channels != samples.size:
        raise WavFormatError("data length not a multiple of the frame size", data_offset)
    return samples.reshape(frames, channels), sample_rate


def write_wav(path, samples: np.ndarray, sample_rate: int, sample_format: str = "pcm16") -> None:
    """Write mono or multichannel samples in [-1, 1] as PCM16 or float32."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.ndim != 2:
        raise ValueError(f"samples must be 1-d or (frames, channels), got shape {samples.shape}")
    frames, channels = samples.shape

    if sample_format == "pcm16":
        scaled = np.round(samples * 32768.0)
        payload = np.clip(scaled, -32768, 32767).astype("<i2").tobytes()
        audio_format, bits = _PCM, 16
    elif sample_format == "float32":
        payload = samples.astype("<f4").tobytes()
        audio_format, bits = _IEEE_FLOAT, 32
    else:
        raise ValueError(f"sample_format must be 'pcm16' or 'float32', got {sample_format!r}")

    block_align = channels * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        audio_format,
        channels,
        sample_rate,
        sample_rate * block_align,
        block_align,
        bits,
        b"data",
        len(payload),
    )
    Path(path).write_bytes(header + payload)
