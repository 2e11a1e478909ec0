"""Waveform preprocessing, self-supervised target synthesis, and augmentation.

Everything here is a pure function of (inputs, rng); re-running with the same
seed reproduces the output bit for bit.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.signal import upfirdn

from .clip import AudioClip, NoisySample

ANTI_ALIAS_TAPS = 127


def _hann_sinc(length: int, cutoff: float) -> np.ndarray:
    """Linear-phase low-pass FIR: Hann-windowed sinc, unit DC gain.

    cutoff is in cycles per sample (0, 0.5].
    """
    n = np.arange(length) - (length - 1) / 2.0
    h = 2.0 * cutoff * np.sinc(2.0 * cutoff * n) * np.hanning(length)
    return h / h.sum()


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Polyphase windowed-sinc resampling for rational rate ratios.

    Output length is round(len * target / source). The filter is a
    Hann-windowed sinc with 64 taps per phase.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip.replace(clip.samples.copy())
    x = clip.samples
    out_len = round(len(x) * target_rate / clip.sample_rate)
    g = math.gcd(target_rate, clip.sample_rate)
    up, down = target_rate // g, clip.sample_rate // g
    y = _resample_rational(x, up, down, out_len)
    return clip.replace(y, sample_rate=target_rate)


def _resample_rational(x: np.ndarray, up: int, down: int, out_len: int,
                       taps_per_phase: int = 64) -> np.ndarray:
    length = taps_per_phase * up
    if length % 2 == 0:
        length += 1  # odd length -> integer group delay
    cutoff = 0.5 / max(up, down)
    h = _hann_sinc(length, cutoff) * up
    half = (length - 1) // 2
    # Pre-pad the filter so its delay lands on a multiple of `down`; the
    # decimated output then starts at an integer index.
    n_pre = (down - half % down) % down
    h = np.concatenate([np.zeros(n_pre), h])
    skip = (half + n_pre) // down
    y = upfirdn(h, x, up=up, down=down)
    y = y[skip:]
    if y.size < out_len:
        y = np.concatenate([y, np.zeros(out_len - y.size)])
    return y[:out_len]


def crop_or_pad(clip: AudioClip, duration_s: float, rng: np.random.Generator) -> AudioClip:
    """Random contiguous window of duration_s, or zero right-padding up to it."""
    if duration_s <= 0:
        raise ValueError(f"duration must be positive, got {duration_s}")
    target = round(duration_s * clip.sample_rate)
    n = len(clip)
    if n > target:
        start = int(rng.integers(0, n - target + 1))
        return clip.replace(clip.samples[start : start + target].copy())
    if n < target:
        return clip.replace(np.concatenate([clip.samples, np.zeros(target - n)]))
    return clip.replace(clip.samples.copy())


def normalize_peak(clip: AudioClip) -> AudioClip:
    """Scale so max |sample| is 1; silent clips pass through."""
    peak = np.max(np.abs(clip.samples)) if len(clip) else 0.0
    if peak == 0.0:
        return clip.replace(clip.samples.copy())
    return clip.replace(clip.samples / peak)


def rms_normalize(clip: AudioClip, target_rms: float = 0.1) -> AudioClip:
    """Scale so the root-mean-square level equals target_rms; silence unchanged."""
    if target_rms <= 0:
        raise ValueError(f"target_rms must be positive, got {target_rms}")
    rms = float(np.sqrt(np.mean(clip.samples**2))) if len(clip) else 0.0
    if rms == 0.0:
        return clip.replace(clip.samples.copy())
    return clip.replace(clip.samples * (target_rms / rms))


def pre_emphasis(clip: AudioClip, coeff: float = 0.97) -> AudioClip:
    """First-order high-pass: y[0] = x[0], y[t] = x[t] - coeff*x[t-1]."""
    x = clip.samples
    y = x.copy()
    y[1:] -= coeff * x[:-1]
    return clip.replace(y)


def de_emphasis(clip: AudioClip, coeff: float = 0.97) -> AudioClip:
    """Inverse of pre_emphasis: z[t] = y[t] + coeff*z[t-1]."""
    from scipy.signal import lfilter

    return clip.replace(lfilter([1.0], [1.0, -coeff], clip.samples))


def mix_at_snr(clean: AudioClip, noise: AudioClip, snr_db: float,
               rng: np.random.Generator, noise_kind: str = "") -> NoisySample:
    """Add a random noise window scaled to the requested SNR.

    The pair is then jointly rescaled by 1/max(1, peak(noisy)) so the noisy
    waveform stays inside [-1, 1]; joint scaling preserves the measured SNR.
    """
    n = len(clean)
    if len(noise) < n:
        raise ValueError(f"noise ({len(noise)} samples) shorter than clean ({n})")
    p_clean = float(np.mean(clean.samples**2))
    if p_clean == 0.0:
        raise ValueError("clean clip is silent; SNR undefined")
    start = int(rng.integers(0, len(noise) - n + 1))
    window = noise.samples[start : start + n]
    p_noise = float(np.mean(window**2))
    if p_noise == 0.0:
        raise ValueError("noise window is silent; SNR undefined")
    alpha = math.sqrt(p_clean / (p_noise * 10.0 ** (snr_db / 10.0)))
    xi = alpha * window
    noisy = clean.samples + xi
    s = 1.0 / max(1.0, float(np.max(np.abs(noisy))))
    return NoisySample(
        clean=clean.replace(clean.samples * s),
        noisy=clean.replace(noisy * s),
        snr_db=snr_db,
        noise_kind=noise_kind,
    )


def measured_snr_db(clean: np.ndarray, noisy: np.ndarray) -> float:
    """10*log10 of clean power over residual power."""
    xi = np.asarray(noisy) - np.asarray(clean)
    return 10.0 * math.log10(float(np.mean(np.asarray(clean) ** 2)) / float(np.mean(xi**2)))


def make_upsample_pair(clip: AudioClip, factor: int = 4) -> tuple[AudioClip, AudioClip]:
    """Low-pass, decimate by factor, and repeat-expand back to full length.

    Returns (input, target): the input is the band-limited decimate-and-repeat
    waveform (exactly factor-periodic-constant), the target is the original.
    """
    if factor < 2:
        raise ValueError(f"factor must be >= 2, got {factor}")
    n = len(clip)
    if n < ANTI_ALIAS_TAPS:
        raise ValueError(
            f"clip of {n} samples is shorter than the {ANTI_ALIAS_TAPS}-tap anti-alias filter"
        )
    h = _hann_sinc(ANTI_ALIAS_TAPS, cutoff=0.5 / factor)
    center = (ANTI_ALIAS_TAPS - 1) // 2
    filtered = np.convolve(clip.samples, h)[center : center + n]
    decimated = filtered[::factor]
    repeated = np.repeat(decimated, factor)[:n]
    if repeated.size < n:
        repeated = np.concatenate([repeated, np.zeros(n - repeated.size)])
    return clip.replace(repeated), clip.replace(clip.samples.copy())


def next_step_pair(clip: AudioClip) -> tuple[AudioClip, AudioClip]:
    """Input plus its one-sample-left-shifted target; the final frame is padding."""
    target = np.concatenate([clip.samples[1:], np.zeros(1)])
    return clip.replace(clip.samples.copy()), clip.replace(target)


def pitch_shift(clip: AudioClip, semitones: float, rng: np.random.Generator | None = None,
                n_fft: int = 1024, hop: int = 256) -> AudioClip:
    """Phase-vocoder pitch shift: time-stretch by 2^(semitones/12), resample back.

    Output length equals input length. Deterministic; rng is accepted for
    pipeline-signature uniformity.
    """
    if abs(semitones) > 12:
        raise ValueError(f"semitones must lie in [-12, 12], got {semitones}")
    n = len(clip)
    if semitones == 0:
        return clip.replace(clip.samples.copy())
    if n < n_fft:
        raise ValueError(f"clip of {n} samples is shorter than the {n_fft}-sample analysis window")
    factor = 2.0 ** (semitones / 12.0)
    stretched = _pv_time_stretch(clip.samples, factor, n_fft=n_fft, hop=hop)
    ratio = Fraction(factor).limit_denominator(1000)
    y = _resample_rational(stretched, up=ratio.denominator, down=ratio.numerator, out_len=n)
    return clip.replace(y)


def _stft(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    frames = 1 + (x.size - n_fft) // hop
    idx = np.arange(n_fft)[None, :] + hop * np.arange(frames)[:, None]
    win = np.hanning(n_fft)
    return np.fft.rfft(x[idx] * win[None, :], axis=1).T  # (bins, frames)


def _istft(spec: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    frames = spec.shape[1]
    win = np.hanning(n_fft)
    out = np.zeros(n_fft + hop * (frames - 1))
    wsum = np.zeros_like(out)
    chunks = np.fft.irfft(spec.T, n=n_fft, axis=1)
    for i in range(frames):
        out[i * hop : i * hop + n_fft] += chunks[i] * win
        wsum[i * hop : i * hop + n_fft] += win * win
    good = wsum > 1e-8
    out[good] /= wsum[good]
    return out


def _pv_time_stretch(x: np.ndarray, stretch: float, n_fft: int, hop: int) -> np.ndarray:
    """Classic phase vocoder: magnitudes interpolated, phases advanced coherently."""
    spec = _stft(x, n_fft, hop)
    bins, frames = spec.shape
    steps = np.arange(0, frames, 1.0 / stretch)
    advance = 2.0 * np.pi * hop * np.arange(bins) / n_fft

    out = np.zeros((bins, steps.size), dtype=complex)
    phase = np.angle(spec[:, 0])
    mags = np.abs(spec)
    phases = np.angle(spec)
    for j, step in enumerate(steps):
        i = int(step)
        frac = step - i
        right = spec[:, i + 1] if i + 1 < frames else np.zeros(bins, dtype=complex)
        mag = (1.0 - frac) * mags[:, i] + frac * np.abs(right)
        out[:, j] = mag * np.exp(1j * phase)
        dphi = (np.angle(right) if i + 1 < frames else phases[:, i]) - phases[:, i] - advance
        dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
        phase = phase + advance + dphi
    return _istft(out, n_fft, hop)
