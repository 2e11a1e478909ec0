"""Differentiable operations for the trunk and heads.

Shapes follow the (batch, channels, time) layout for 1-d signals and
(batch, features) for dense layers. Elementwise ops require exactly matching
shapes; there is no broadcasting between operands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .array import Array, make_node


def _check_same_shape(a: Array, b: Array, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")


def add(a: Array, b: Array) -> Array:
    _check_same_shape(a, b, "add")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return make_node(a.data + b.data, (a, b), backward)


def mul(a: Array, b: Array) -> Array:
    _check_same_shape(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * b.data)
        if b.requires_grad:
            b.accumulate_grad(g * a.data)

    return make_node(a.data * b.data, (a, b), backward)


def scale(a: Array, c: float) -> Array:
    """Multiply by a python scalar (used for loss weighting)."""
    c = float(c)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * c)

    return make_node(a.data * np.asarray(c, dtype=a.dtype), (a,), backward)


def sigmoid(a: Array) -> Array:
    out = expit(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * out * (1.0 - out))

    return make_node(out, (a,), backward)


def tanh(a: Array) -> Array:
    out = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - out * out))

    return make_node(out, (a,), backward)


def relu(a: Array) -> Array:
    out = np.maximum(a.data, 0)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0))

    return make_node(out, (a,), backward)


def _check_conv_args(x: Array, w: Array, b: Array, op: str) -> None:
    if x.ndim != 3:
        raise ValueError(f"{op}: input must be (B, C_in, T), got shape {tuple(x.shape)}")
    if w.ndim != 3:
        raise ValueError(f"{op}: weight must be (C_out, C_in, K), got shape {tuple(w.shape)}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"{op}: weight expects {w.shape[1]} input channels, input has {x.shape[1]}"
        )
    if b.shape != (w.shape[0],):
        raise ValueError(f"{op}: bias shape {tuple(b.shape)} != ({w.shape[0]},)")


def causal_dilated_conv1d(x: Array, w: Array, b: Array, dilation: int = 1) -> Array:
    """Same-length causal convolution: output[t] sees input[t'] only for t' <= t.

    Tap k of the kernel multiplies input[t - (K-1-k)*dilation]; missing history
    is zero (left padding), so output length equals input length.
    """
    _check_conv_args(x, w, b, "causal_dilated_conv1d")
    if dilation < 1:
        raise ValueError(f"causal_dilated_conv1d: dilation must be >= 1, got {dilation}")
    B, _, T = x.shape
    C_out, _, K = w.shape
    if T < 1:
        raise ValueError("causal_dilated_conv1d: input length must be >= 1")

    # Non-contiguous matrix operands push np.matmul off the BLAS fast path,
    # so every weight tap is copied contiguous before the batched GEMM.
    out = np.zeros((B, C_out, T), dtype=x.dtype)
    for k in range(K):
        s = (K - 1 - k) * dilation  # left shift of this tap
        if s >= T:
            continue
        wk = np.ascontiguousarray(w.data[:, :, k])
        if s == 0:
            out += np.matmul(wk, x.data)
        else:
            out[:, :, s:] += np.matmul(wk, x.data[:, :, : T - s])
    out += b.data[None, :, None]

    def backward(g):
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=(0, 2)))
        if w.requires_grad:
            gw = np.zeros_like(w.data)
            for k in range(K):
                s = (K - 1 - k) * dilation
                if s >= T:
                    continue
                gw[:, :, k] = np.tensordot(g[:, :, s:], x.data[:, :, : T - s], axes=([0, 2], [0, 2]))
            w.accumulate_grad(gw)
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for k in range(K):
                s = (K - 1 - k) * dilation
                if s >= T:
                    continue
                wkT = np.ascontiguousarray(w.data[:, :, k].T)
                gx[:, :, : T - s] += np.matmul(wkT, g[:, :, s:])
            x.accumulate_grad(gx)

    return make_node(out, (x, w, b), backward)


def strided_conv1d(x: Array, w: Array, b: Array, stride: int = 1) -> Array:
    """Valid (unpadded) convolution with stride; T_out = (T - K)//stride + 1."""
    _check_conv_args(x, w, b, "strided_conv1d")
    if stride < 1:
        raise ValueError(f"strided_conv1d: stride must be >= 1, got {stride}")
    B, _, T = x.shape
    C_out, _, K = w.shape
    if T < K:
        raise ValueError(f"strided_conv1d: input length {T} shorter than kernel width {K}")
    T_out = (T - K) // stride + 1

    out = np.zeros((B, C_out, T_out), dtype=x.dtype)
    end = stride * (T_out - 1) + 1
    for k in range(K):
        wk = np.ascontiguousarray(w.data[:, :, k])
        xs = np.ascontiguousarray(x.data[:, :, k : k + end : stride])
        out += np.matmul(wk, xs)
    out += b.data[None, :, None]

    def backward(g):
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=(0, 2)))
        if w.requires_grad:
            gw = np.empty_like(w.data)
            for k in range(K):
                gw[:, :, k] = np.tensordot(
                    g, x.data[:, :, k : k + end : stride], axes=([0, 2], [0, 2])
                )
            w.accumulate_grad(gw)
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            for k in range(K):
                wkT = np.ascontiguousarray(w.data[:, :, k].T)
                gx[:, :, k : k + end : stride] += np.matmul(wkT, g)
            x.accumulate_grad(gx)

    return make_node(out, (x, w, b), backward)


def dense(x: Array, w: Array, b: Array) -> Array:
    """Affine map: (B, F) @ (F, U) + (U,)."""
    if x.ndim != 2 or w.ndim != 2:
        raise ValueError(f"dense: expected 2-d input/weight, got {tuple(x.shape)}/{tuple(w.shape)}")
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"dense: inner dimensions differ, input {x.shape[1]} vs weight {w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise ValueError(f"dense: bias shape {tuple(b.shape)} != ({w.shape[1]},)")
    out = x.data @ w.data + b.data

    def backward(g):
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))
        if w.requires_grad:
            w.accumulate_grad(x.data.T @ g)
        if x.requires_grad:
            x.accumulate_grad(g @ w.data.T)

    return make_node(out, (x, w, b), backward)


def global_avg_pool_time(x: Array) -> Array:
    """Mean over the time axis: (B, C, T) -> (B, C)."""
    if x.ndim != 3:
        raise ValueError(f"global_avg_pool_time: input must be (B, C, T), got {tuple(x.shape)}")
    T = x.shape[2]
    if T < 1:
        raise ValueError("global_avg_pool_time: input length must be >= 1")
    out = x.data.mean(axis=2)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.broadcast_to(g[:, :, None] / T, x.shape))

    return make_node(out, (x,), backward)


def slice_time(x: Array, lo: int, hi: int) -> Array:
    """Differentiable crop along the last (time) axis."""
    if x.ndim != 3:
        raise ValueError(f"slice_time: input must be (B, C, T), got {tuple(x.shape)}")
    T = x.shape[2]
    lo, hi, _ = slice(lo, hi).indices(T)
    if hi <= lo:
        raise ValueError(f"slice_time: empty slice [{lo}:{hi}] of length-{T} axis")
    out = np.ascontiguousarray(x.data[:, :, lo:hi])

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, :, lo:hi] = g
            x.accumulate_grad(gx)

    return make_node(out, (x,), backward)


@dataclass
class BatchNormState:
    """Running statistics for one batch-norm layer (not optimized, checkpointed)."""

    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def for_channels(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))


def batch_norm(
    x: Array,
    gamma: Array,
    beta: Array,
    state: BatchNormState,
    mode: str = "train",
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Array:
    """Per-channel batch normalization over (B,) or (B, T) statistics.

    Train mode normalizes with batch statistics and updates the running stats
    in-place (unbiased variance, torch convention); eval mode uses the stored
    running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"batch_norm: mode must be 'train' or 'eval', got {mode!r}")
    if x.ndim == 2:
        axes: tuple[int, ...] = (0,)
        pshape = (1, x.shape[1])
    elif x.ndim == 3:
        axes = (0, 2)
        pshape = (1, x.shape[1], 1)
    else:
        raise ValueError(f"batch_norm: input must be 2-d or 3-d, got {tuple(x.shape)}")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError(f"batch_norm: gamma/beta must have shape ({C},)")
    if mode == "train" and x.shape[0] < 2:
        raise ValueError("batch_norm: train mode requires batch size >= 2")

    gamma_r = gamma.data.reshape(pshape)
    beta_r = beta.data.reshape(pshape)

    if mode == "train":
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        m = x.data.size // C
        state.running_mean[...] = (1 - momentum) * state.running_mean + momentum * mean
        unbiased = var * (m / (m - 1)) if m > 1 else var
        state.running_var[...] = (1 - momentum) * state.running_var + momentum * unbiased
    else:
        mean = state.running_mean.astype(x.dtype)
        var = state.running_var.astype(x.dtype)

    inv_std = 1.0 / np.sqrt(var.reshape(pshape) + eps)
    xhat = (x.data - mean.reshape(pshape)) * inv_std
    out = gamma_r * xhat + beta_r

    def backward(g):
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=axes))
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=axes))
        if x.requires_grad:
            gxhat = g * gamma_r
            if mode == "train":
                mg = gxhat.mean(axis=axes).reshape(pshape)
                mgx = (gxhat * xhat).mean(axis=axes).reshape(pshape)
                x.accumulate_grad(inv_std * (gxhat - mg - xhat * mgx))
            else:
                x.accumulate_grad(gxhat * inv_std)

    return make_node(out, (x, gamma, beta), backward)


def dropout(x: Array, rate: float, mode: str = "train", rng: np.random.Generator | None = None) -> Array:
    """Inverted dropout: train mode zeroes with probability rate, scales by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout: mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:

        def backward_id(g):
            if x.requires_grad:
                x.accumulate_grad(g)

        return make_node(x.data, (x,), backward_id)

    if rng is None:
        raise ValueError("dropout: train mode with rate > 0 requires an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    factor = 1.0 / (1.0 - rate)
    mask = keep * np.asarray(factor, dtype=x.dtype)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * mask)

    return make_node(x.data * mask, (x,), backward)
