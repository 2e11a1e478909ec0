"""Minimal reverse-mode differentiation engine backing the audio trunk and heads."""

from .array import Array, as_array, he_uniform, make_node, zeros
from .losses import mse_loss, smooth_l1_loss, softmax, softmax_cross_entropy
from .ops import (
    BatchNormState,
    add,
    batch_norm,
    causal_dilated_conv1d,
    dense,
    dropout,
    global_avg_pool_time,
    mul,
    relu,
    scale,
    sigmoid,
    slice_time,
    strided_conv1d,
    tanh,
)
from .optim import Adam, AdamConfig, LrSchedule

__all__ = [
    "Adam",
    "AdamConfig",
    "Array",
    "BatchNormState",
    "LrSchedule",
    "add",
    "as_array",
    "batch_norm",
    "causal_dilated_conv1d",
    "dense",
    "dropout",
    "global_avg_pool_time",
    "he_uniform",
    "make_node",
    "mse_loss",
    "mul",
    "relu",
    "scale",
    "sigmoid",
    "slice_time",
    "smooth_l1_loss",
    "softmax",
    "softmax_cross_entropy",
    "strided_conv1d",
    "tanh",
    "zeros",
]
