"""Adam optimizer and the stepped-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .array import Array


@dataclass
class AdamConfig:
    """Adam hyperparameters plus the running step counter."""

    lr: float
    beta0: float = 0.9
    beta1: float = 0.99
    epsilon: float = 1e-8
    step_count: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"AdamConfig: lr must be positive, got {self.lr}")
        if not 0.0 <= self.beta0 < 1.0 or not 0.0 <= self.beta1 < 1.0:
            raise ValueError("AdamConfig: betas must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("AdamConfig: epsilon must be positive")
        if self.step_count < 0:
            raise ValueError("AdamConfig: step_count must be non-negative")


@dataclass
class LrSchedule:
    """Stepped decay: lr(epoch) = base * multiplier ** (epoch // epochs_per_step)."""

    epochs_per_step: int = 5
    multiplier: float = 0.95

    def __post_init__(self):
        if self.epochs_per_step < 1:
            raise ValueError("LrSchedule: epochs_per_step must be positive")
        if not 0.0 < self.multiplier <= 1.0:
            raise ValueError("LrSchedule: multiplier must lie in (0, 1]")

    def effective_lr(self, base_lr: float, epoch: int) -> float:
        return base_lr * self.multiplier ** (epoch // self.epochs_per_step)


class Adam:
    """Bias-corrected Adam over a named parameter group.

    Moment buffers are zero-initialized on construction; parameters whose
    gradient is unset are skipped (equivalent to a zero gradient from fresh
    state, which leaves them unchanged).
    """

    def __init__(self, params: dict[str, Array], cfg: AdamConfig):
        self.params = dict(params)
        self.cfg = cfg
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def step(self, lr: float | None = None) -> None:
        """One Adam update using lr (defaults to cfg.lr) for every parameter."""
        cfg = self.cfg
        cfg.step_count += 1
        t = cfg.step_count
        lr_t = cfg.lr if lr is None else lr
        bc0 = 1.0 - cfg.beta0**t
        bc1 = 1.0 - cfg.beta1**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError(
                    f"Adam: gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}"
                )
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta0
            m += (1.0 - cfg.beta0) * g
            v *= cfg.beta1
            v += (1.0 - cfg.beta1) * (g * g)
            update = (m / bc0) / (np.sqrt(v / bc1) + cfg.epsilon)
            p.data -= lr_t * update

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Moment buffers keyed for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name in self.params:
            out[f"{name}/m"] = self.m[name]
            out[f"{name}/v"] = self.v[name]
        return out

    def load_state_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        for name in self.params:
            for key, buf in ((f"{name}/m", self.m), (f"{name}/v", self.v)):
                src = tensors[key]
                if src.shape != buf[name].shape:
                    raise ValueError(f"Adam: checkpoint moment {key!r} has shape {src.shape}")
                buf[name][...] = src
