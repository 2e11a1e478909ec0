"""Shared causal feature extractor: gated residual stacks of dilated convolutions.

Maps a raw waveform (B, 1, T) to an embedding (B, channels, T). Every layer
computes a gated activation sigmoid(gate) * tanh(filter) from dilated causal
convolutions and adds it residually to its input, so one output frame sees a
window of past samples that grows exponentially with depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndgrad as nd
from .ndgrad import Array


@dataclass
class TrunkConfig:
    """Architecture hyperparameters: N blocks of S dilated layers, fixed width."""

    blocks: int = 3
    layers_per_block: int = 6
    channels: int = 64

    def __post_init__(self):
        if self.blocks < 1 or self.layers_per_block < 1 or self.channels < 1:
            raise ValueError("TrunkConfig: blocks, layers_per_block, channels must be positive")

    @property
    def num_layers(self) -> int:
        return self.blocks * self.layers_per_block

    def dilation(self, layer: int) -> int:
        """Dilation of 1-indexed layer: 1, 2, ..., 2^(S-1), repeating per block."""
        if not 1 <= layer <= self.num_layers:
            raise ValueError(f"layer index {layer} out of range [1, {self.num_layers}]")
        return 2 ** ((layer - 1) % self.layers_per_block)


def receptive_field(cfg: TrunkConfig, blocks: int | None = None) -> int:
    """Past samples influencing one output frame: 1 + N*(2^S - 1).

    With blocks=b the prefix through the first b blocks is returned instead.
    """
    b = cfg.blocks if blocks is None else blocks
    if not 0 <= b <= cfg.blocks:
        raise ValueError(f"blocks must lie in [0, {cfg.blocks}]")
    return 1 + b * (2**cfg.layers_per_block - 1)


class Trunk:
    """Parameter container plus forward pass for the shared feature extractor."""

    KERNEL_WIDTH = 2

    def __init__(self, cfg: TrunkConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        C = cfg.channels
        K = self.KERNEL_WIDTH
        self.params: dict[str, Array] = {
            "input/w": nd.he_uniform((C, 1, 1), fan_in=1, rng=rng, dtype=dtype),
            "input/b": nd.zeros((C,), dtype=dtype, requires_grad=True),
        }
        for layer in range(1, cfg.num_layers + 1):
            for part in ("filter", "gate"):
                self.params[f"layer{layer:02d}/{part}/w"] = nd.he_uniform(
                    (C, C, K), fan_in=C * K, rng=rng, dtype=dtype
                )
                self.params[f"layer{layer:02d}/{part}/b"] = nd.zeros(
                    (C,), dtype=dtype, requires_grad=True
                )

    def forward(self, x: Array) -> Array:
        """Embed a waveform batch (B, 1, T) as (B, channels, T)."""
        if x.ndim != 3 or x.shape[1] != 1:
            raise ValueError(f"trunk input must be (B, 1, T), got {tuple(x.shape)}")
        if self.params["input/w"].shape[0] != self.cfg.channels:
            raise ValueError(
                f"trunk params built for {self.params['input/w'].shape[0]} channels, "
                f"config says {self.cfg.channels}"
            )
        h = nd.causal_dilated_conv1d(x, self.params["input/w"], self.params["input/b"])
        for layer in range(1, self.cfg.num_layers + 1):
            d = self.cfg.dilation(layer)
            gate = nd.sigmoid(
                nd.causal_dilated_conv1d(
                    h, self.params[f"layer{layer:02d}/gate/w"], self.params[f"layer{layer:02d}/gate/b"], d
                )
            )
            filt = nd.tanh(
                nd.causal_dilated_conv1d(
                    h,
                    self.params[f"layer{layer:02d}/filter/w"],
                    self.params[f"layer{layer:02d}/filter/b"],
                    d,
                )
            )
            h = nd.add(h, nd.mul(gate, filt))
        return h

    __call__ = forward

    def named_params(self) -> dict[str, Array]:
        return dict(self.params)

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())
