"""wavetrunk: a multitask, self-supervised learning engine for raw audio waveforms."""

__version__ = "0.1.0"
