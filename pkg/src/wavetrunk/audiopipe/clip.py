"""Waveform value types and WAV ingestion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wavio import read_wav, write_wav


@dataclass
class AudioClip:
    """A mono waveform with its sample rate and optional label."""

    samples: np.ndarray
    sample_rate: int
    label: int | str | None = None
    source_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"AudioClip samples must be 1-d, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AudioClip samples must be finite")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def replace(self, samples: np.ndarray, sample_rate: int | None = None) -> "AudioClip":
        return AudioClip(
            samples,
            self.sample_rate if sample_rate is None else sample_rate,
            label=self.label,
            source_id=self.source_id,
        )


@dataclass
class NoisySample:
    """A clean/noisy waveform pair mixed at a known signal-to-noise ratio."""

    clean: AudioClip
    noisy: AudioClip
    snr_db: float
    noise_kind: str = ""

    def __post_init__(self):
        if len(self.clean) != len(self.noisy):
            raise ValueError("clean and noisy clips must have equal length")
        if self.clean.sample_rate != self.noisy.sample_rate:
            raise ValueError("clean and noisy clips must share a sample rate")


def load_wav(path) -> AudioClip:
    """Read a WAV file as a mono clip; stereo channels are averaged."""
    samples, rate = read_wav(path)
    mono = samples.mean(axis=1) if samples.shape[1] > 1 else samples[:, 0]
    return AudioClip(mono, rate, source_id=str(path))


def save_wav(clip: AudioClip, path, sample_format: str = "pcm16") -> None:
    write_wav(path, clip.samples, clip.sample_rate, sample_format=sample_format)
