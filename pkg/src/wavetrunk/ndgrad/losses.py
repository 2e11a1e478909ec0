"""Loss functions. Each returns a 0-d scalar Array with gradients registered."""

from __future__ import annotations

import numpy as np

from .array import Array, make_node


def softmax_cross_entropy(logits: Array, labels) -> Array:
    """Mean over the batch of -log softmax(logits)[label].

    Stabilized by max-subtraction. labels is an integer vector of class
    indices, one per row.
    """
    if logits.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: logits must be (B, C), got {tuple(logits.shape)}")
    labels = np.asarray(labels)
    B, C = logits.shape
    if labels.shape != (B,):
        raise ValueError(f"softmax_cross_entropy: labels must have shape ({B},), got {tuple(labels.shape)}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("softmax_cross_entropy: labels must be integers")
    if labels.min() < 0 or labels.max() >= C:
        raise ValueError(f"softmax_cross_entropy: labels must lie in [0, {C})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    rows = np.arange(B)
    loss = np.asarray(-logp[rows, labels].mean(), dtype=logits.dtype)

    def backward(g):
        if logits.requires_grad:
            gx = np.exp(logp)
            gx[rows, labels] -= 1.0
            logits.accumulate_grad(gx * (g / B))

    return make_node(loss, (logits,), backward)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax probabilities (plain ndarray helper, no tape)."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _as_pair(pred: Array, target) -> tuple[Array, Array | None, np.ndarray]:
    """Return (pred, target-if-differentiable, target data) with matching shapes."""
    if isinstance(target, Array):
        tdata = target.data
        tnode: Array | None = target
    else:
        tdata = np.asarray(target, dtype=pred.dtype)
        tnode = None
    if tdata.shape != pred.shape:
        raise ValueError(f"loss: shape mismatch {tuple(pred.shape)} vs {tuple(tdata.shape)}")
    return pred, tnode, tdata


def mse_loss(pred: Array, target) -> Array:
    """Mean over all elements of (pred - target)^2."""
    pred, tnode, tdata = _as_pair(pred, target)
    d = pred.data - tdata
    n = d.size
    loss = np.asarray((d * d).mean(), dtype=pred.dtype)
    parents = (pred,) if tnode is None else (pred, tnode)

    def backward(g):
        gd = d * (2.0 * g / n)
        if pred.requires_grad:
            pred.accumulate_grad(gd)
        if tnode is not None and tnode.requires_grad:
            tnode.accumulate_grad(-gd)

    return make_node(loss, parents, backward)


def smooth_l1_loss(pred: Array, target) -> Array:
    """Mean over elements of: 0.5*d^2 if |d| < 1 else |d| - 0.5, d = pred - target."""
    pred, tnode, tdata = _as_pair(pred, target)
    d = pred.data - tdata
    absd = np.abs(d)
    small = absd < 1.0
    per_elem = np.where(small, 0.5 * d * d, absd - 0.5)
    n = d.size
    loss = np.asarray(per_elem.mean(), dtype=pred.dtype)
    parents = (pred,) if tnode is None else (pred, tnode)

    def backward(g):
        gd = np.where(small, d, np.sign(d)) * (g / n)
        if pred.requires_grad:
            pred.accumulate_grad(gd)
        if tnode is not None and tnode.requires_grad:
            tnode.accumulate_grad(-gd)

    return make_node(loss, parents, backward)
