"""Noise sources for the denoising task: synthetic generators plus WAV banks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .clip import AudioClip, load_wav
from .dsp import resample

SYNTHETIC_KINDS = ("white", "pink", "babble")


def white_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(n)
    return 0.95 * x / np.max(np.abs(x))


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """1/f-shaped noise via spectral shaping of white noise."""
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    freqs[0] = freqs[1]  # keep DC finite
    spec /= np.sqrt(freqs / freqs[1])
    x = np.fft.irfft(spec, n=n)
    return 0.95 * x / np.max(np.abs(x))


def babble_noise(n: int, rng: np.random.Generator, sample_rate: int = 16000) -> np.ndarray:
    """Amplitude-modulated white noise with a slow random envelope."""
    carrier = rng.standard_normal(n)
    env = np.abs(rng.standard_normal(n))
    width = max(3, sample_rate // 8)
    kernel = np.hanning(width)
    env = np.convolve(env, kernel / kernel.sum(), mode="same")
    x = carrier * (0.2 + env)
    return 0.95 * x / np.max(np.abs(x))


class NoiseBank:
    """Serves noise clips from a directory of WAV files or synthetic generators."""

    def __init__(self, sample_rate: int = 16000, wav_dir: str | Path | None = None,
                 kinds=SYNTHETIC_KINDS):
        self.sample_rate = sample_rate
        self.kinds = tuple(kinds)
        self.files: list[AudioClip] = []
        if wav_dir is not None:
            paths = sorted(Path(wav_dir).glob("*.wav"))
            if not paths:
                raise ValueError(f"noise bank directory {wav_dir} contains no .wav files")
            for p in paths:
                clip = load_wav(p)
                if clip.sample_rate != sample_rate:
                    clip = resample(clip, sample_rate)
                self.files.append(clip)
        elif not self.kinds:
            raise ValueError("NoiseBank needs synthetic kinds or a wav_dir")

    def sample(self, num_samples: int, rng: np.random.Generator) -> tuple[AudioClip, str]:
        """A noise clip of at least num_samples, plus its kind tag."""
        if self.files:
            clip = self.files[int(rng.integers(0, len(self.files)))]
            samples = clip.samples
            if samples.size < num_samples:
                reps = -(-num_samples // samples.size)
                samples = np.tile(samples, reps)
            return AudioClip(samples, self.sample_rate), f"file:{clip.source_id}"
        kind = self.kinds[int(rng.integers(0, len(self.kinds)))]
        if kind == "white":
            samples = white_noise(num_samples, rng)
        elif kind == "pink":
            samples = pink_noise(num_samples, rng)
        elif kind == "babble":
            samples = babble_noise(num_samples, rng, self.sample_rate)
        else:
            raise ValueError(f"unknown synthetic noise kind {kind!r}")
        return AudioClip(samples, self.sample_rate), kind
