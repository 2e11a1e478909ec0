"""Central finite-difference gradient checking.

Used by the test suite and the `verify gradcheck` command. Checks run in
64-bit mode: pass float64 arrays, or the harness refuses up front.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .array import Array

DEFAULT_EPS = 1e-5
DEFAULT_FLOOR = 1e-6


def numeric_grad(fn: Callable[[], Array], x: Array, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Central finite differences of the scalar fn() w.r.t. every element of x.

    fn must recompute the loss from the current contents of x.data and must be
    deterministic (fix any rng inside fn per call).
    """
    flat = x.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn().item()
        flat[i] = orig - eps
        lo = fn().item()
        flat[i] = orig
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad.reshape(x.shape)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DEFAULT_FLOOR) -> float:
    """Elementwise |a - n| / max(|a|, |n|, floor), reduced with max."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(
    fn: Callable[[], Array],
    wrt: Sequence[Array],
    eps: float = DEFAULT_EPS,
    floor: float = DEFAULT_FLOOR,
) -> float:
    """Max relative error between backward() gradients and finite differences.

    fn builds a fresh scalar loss from the arrays in wrt each time it is
    called. Returns the worst error over all checked arrays.
    """
    for x in wrt:
        if x.dtype != np.float64:
            raise ValueError("check_gradients: run gradient checks with float64 arrays")
        if not x.requires_grad:
            raise ValueError("check_gradients: every checked array must require grad")
        x.zero_grad()

    loss = fn()
    loss.backward()

    worst = 0.0
    for x in wrt:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        numeric = numeric_grad(fn, x, eps=eps)
        worst = max(worst, max_relative_error(analytic, numeric, floor=floor))
        x.zero_grad()
    return worst
