"""Reverse-mode differentiation core: numpy-backed arrays plus a closure tape.

Every operation in :mod:`wavetrunk.ndgrad.ops` records its parents and a
backward closure on the output array. Calling :meth:`Array.backward` on a
scalar result replays the recorded closures in reverse topological order and
accumulates gradients into every reachable array that ``requires_grad``.
"""

from __future__ import annotations

import numpy as np

DEFAULT_DTYPE = np.float32


class Array:
    """Dense n-d float array participating in reverse-mode differentiation.

    data is float32 by default; build float64 arrays for gradient checking.
    The gradient, when present, always has the same shape and dtype as data.
    """

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        keep = isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64)
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not keep:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Array, ...] = ()
        self._backward = None
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a single-element array, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Accumulate d(self)/d(x) into ``x.grad`` for every reachable array.

        self must hold a single element (a scalar loss). Gradients add onto
        whatever is already in ``.grad``, so backward over several losses sums
        their gradients; call ``zero_grad`` between optimizer steps.
        """
        if self.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        if self._backward_done:
            raise RuntimeError("backward() already ran for this result; rebuild the graph")
        self._backward_done = True

        order = self._toposort()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _toposort(self) -> list[Array]:
        # Iterative DFS; graphs from long training steps overflow recursion.
        order: list[Array] = []
        visited: set[int] = set()
        stack: list[tuple[Array, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Array(shape={tuple(self.shape)}, dtype={self.data.dtype.name}{grad})"

    # Convenience operators for the shape-matched elementwise ops.
    def __add__(self, other: "Array") -> "Array":
        from . import ops

        return ops.add(self, other)

    def __mul__(self, other: "Array") -> "Array":
        from . import ops

        return ops.mul(self, other)


def make_node(data: np.ndarray, parents, backward) -> Array:
    """Wrap an op result, recording the tape entry only when a parent needs it."""
    out = Array(data, dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_array(x, dtype=None) -> Array:
    """Wrap plain data as a constant (non-differentiated) Array."""
    if isinstance(x, Array):
        return x
    return Array(x, dtype=dtype)


def he_uniform(shape, fan_in: int, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> Array:
    """Fan-in-scaled uniform init for conv/dense weights."""
    limit = np.sqrt(6.0 / fan_in)
    data = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return Array(data, requires_grad=True)


def zeros(shape, dtype=DEFAULT_DTYPE, requires_grad: bool = False) -> Array:
    return Array(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)
