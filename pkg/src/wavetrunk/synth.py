"""Synthetic desk-scale corpora: labeled tone/chirp/AM-noise classes plus
unlabeled clips, written as WAV files with manifests.

Each class owns a log-spaced frequency band; a clip's content is drawn from
its class band, so the corpora are learnable by construction and verifiable
with an FFT-peak oracle. Generation is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audiopipe import AudioClip, ManifestRow, save_wav, write_manifest

WAVE_KINDS = ("tone", "chirp", "am")


@dataclass
class SynthResult:
    out_dir: Path
    train_manifest: Path
    unlabeled_manifest: Path | None
    class_names: list[str]
    bands: list[tuple[float, float]]
    num_clips: int


def class_bands(num_classes: int, rate: int) -> list[tuple[float, float]]:
    """Disjoint log-spaced frequency bands inside the usable spectrum."""
    edges = np.geomspace(200.0, 0.4 * rate, num_classes + 1)
    return [(float(edges[i]), float(edges[i + 1])) for i in range(num_classes)]


def _tone(rng, band, n, rate):
    freq = float(rng.uniform(*band))
    phase = float(rng.uniform(0, 2 * np.pi))
    t = np.arange(n) / rate
    return np.sin(2 * np.pi * freq * t + phase)


def _chirp(rng, band, n, rate):
    f0 = float(rng.uniform(band[0], band[1]))
    f1 = float(rng.uniform(band[0], band[1]))
    t = np.arange(n) / rate
    inst = f0 + (f1 - f0) * np.arange(n) / n
    phase = 2 * np.pi * np.cumsum(inst) / rate
    return np.sin(phase + float(rng.uniform(0, 2 * np.pi)))


def _am_noise(rng, band, n, rate):
    """Band-passed noise with a slow random amplitude envelope."""
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / rate)
    spec[(freqs < band[0]) | (freqs > band[1])] = 0.0
    carrier = np.fft.irfft(spec, n=n)
    peak = np.max(np.abs(carrier))
    if peak > 0:
        carrier = carrier / peak
    env_hz = float(rng.uniform(2.0, 6.0))
    env = 0.55 + 0.45 * np.sin(2 * np.pi * env_hz * np.arange(n) / rate + rng.uniform(0, 2 * np.pi))
    return carrier * env


_GENERATORS = {"tone": _tone, "chirp": _chirp, "am": _am_noise}


def _render_clip(rng, band, n, rate, kind, noise_snr_db):
    if kind == "mix":
        kind = WAVE_KINDS[int(rng.integers(0, len(WAVE_KINDS)))]
    signal = _GENERATORS[kind](rng, band, n, rate)
    amp = float(rng.uniform(0.4, 0.8))
    signal = amp * signal / max(1e-12, np.max(np.abs(signal)))
    if noise_snr_db is not None:
        noise = rng.standard_normal(n)
        p_sig = np.mean(signal**2)
        p_noise = np.mean(noise**2)
        alpha = np.sqrt(p_sig / (p_noise * 10.0 ** (noise_snr_db / 10.0)))
        signal = signal + alpha * noise
        peak = np.max(np.abs(signal))
        if peak > 1.0:
            signal = signal / peak
    return signal


def generate_corpus(
    out_dir: str | Path,
    num_classes: int = 4,
    clips_per_class: int = 8,
    seconds: float = 2.0,
    rate: int = 16000,
    seed: int = 0,
    unlabeled: int = 0,
    kind: str = "tone",
    noise_snr_db: float | None = 30.0,
) -> SynthResult:
    """Write `num_classes * clips_per_class` labeled WAVs plus manifests."""
    if kind not in WAVE_KINDS + ("mix",):
        raise ValueError(f"kind must be one of {WAVE_KINDS + ('mix',)}, got {kind!r}")
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    out_dir = Path(out_dir)
    (out_dir / "audio").mkdir(parents=True, exist_ok=True)
    n = round(seconds * rate)
    bands = class_bands(num_classes, rate)
    class_names = [f"class{c}" for c in range(num_classes)]

    rows: list[ManifestRow] = []
    for c in range(num_classes):
        for j in range(clips_per_class):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 0, c, j]))
            samples = _render_clip(rng, bands[c], n, rate, kind, noise_snr_db)
            path = out_dir / "audio" / f"{class_names[c]}_{j:03d}.wav"
            save_wav(AudioClip(samples, rate), path)
            rows.append(ManifestRow(path, class_names[c], "train"))
    train_manifest = out_dir / "train.csv"
    write_manifest(train_manifest, rows)

    unlabeled_manifest = None
    if unlabeled > 0:
        urows = []
        full_band = (bands[0][0], bands[-1][1])
        for j in range(unlabeled):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 1, j]))
            samples = _render_clip(rng, full_band, n, rate, "mix", noise_snr_db)
            path = out_dir / "audio" / f"unlabeled_{j:03d}.wav"
            save_wav(AudioClip(samples, rate), path)
            urows.append(ManifestRow(path))
        unlabeled_manifest = out_dir / "unlabeled.csv"
        write_manifest(unlabeled_manifest, urows, labeled=False, with_split=False)

    return SynthResult(
        out_dir=out_dir,
        train_manifest=train_manifest,
        unlabeled_manifest=unlabeled_manifest,
        class_names=class_names,
        bands=bands,
        num_clips=len(rows) + unlabeled,
    )
