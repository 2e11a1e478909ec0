"""Ingestion, preprocessing, target synthesis, and augmentation for raw waveforms."""

from .clip import AudioClip, NoisySample, load_wav, save_wav
from .dsp import (
    crop_or_pad,
    de_emphasis,
    make_upsample_pair,
    measured_snr_db,
    mix_at_snr,
    next_step_pair,
    normalize_peak,
    pitch_shift,
    pre_emphasis,
    resample,
    rms_normalize,
)
from .manifest import Manifest, ManifestError, ManifestRow, write_manifest
from .noise import NoiseBank
from .wavio import WavFormatError, read_wav, write_wav

__all__ = [
    "AudioClip",
    "Manifest",
    "ManifestError",
    "ManifestRow",
    "NoiseBank",
    "NoisySample",
    "WavFormatError",
    "crop_or_pad",
    "de_emphasis",
    "load_wav",
    "make_upsample_pair",
    "measured_snr_db",
    "mix_at_snr",
    "next_step_pair",
    "normalize_peak",
    "pitch_shift",
    "pre_emphasis",
    "read_wav",
    "resample",
    "rms_normalize",
    "save_wav",
    "write_manifest",
    "write_wav",
]
