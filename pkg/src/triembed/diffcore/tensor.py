"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tensor` wraps a numpy array. Operations on tensors that require
gradients record a closure that pushes the upstream gradient to their
inputs; :func:`backward` replays those closures in reverse topological
order. Tensors that do not require gradients never build a graph, so
evaluation-only code pays no bookkeeping cost.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64


class GradError(RuntimeError):
    """Raised when a backward pass is requested on an invalid graph."""


# --------------------------------------------------------------------------
# Branch recording for non-smooth ops (ReLU, hinge, max-reduce).
# --------------------------------------------------------------------------

_local = threading.local()


class BranchRecorder:
    """Collects the branch taken by every non-smooth op in a forward pass.

    Two forward passes with equal :meth:`signature` evaluate the same
    smooth piece of a piecewise-smooth function. ``margin`` is the smallest
    distance to a kink seen so far (ReLU/hinge input magnitude, or the gap
    between the largest and second-largest element of a max-reduce).
    """

    def __init__(self) -> None:
        self.decisions: list[np.ndarray] = []
        self.margin = np.inf

    def record(self, decision: np.ndarray, margin: float) -> None:
        self.decisions.append(np.ascontiguousarray(decision))
        self.margin = min(self.margin, float(margin))

    def signature(self) -> bytes:
        return b"|".join(d.tobytes() for d in self.decisions)


@contextmanager
def record_branches():
    prev = getattr(_local, "recorder", None)
    rec = BranchRecorder()
    _local.recorder = rec
    try:
        yield rec
    finally:
        _local.recorder = prev


def _recorder() -> BranchRecorder | None:
    return getattr(_local, "recorder", None)


# --------------------------------------------------------------------------
# Tensor
# --------------------------------------------------------------------------


class Tensor:
    """Dense real tensor with optional gradient tracking."""

    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- basic info ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def max(self, axis=None):
        return amax(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def relu(self):
        return relu(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.name = None
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --------------------------------------------------------------------------
# Backward
# --------------------------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(output: Tensor, inputs: Iterable[Tensor] | None = None) -> None:
    """Accumulate d(output)/d(leaf) into ``.grad`` of every tracked leaf.

    ``output`` must hold exactly one element. When ``inputs`` is given,
    every listed tensor must be reachable from ``output``; a detached or
    untracked tensor raises :class:`GradError` naming it.
    """
    if output.data.size != 1:
        raise GradError(f"backward() needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        raise GradError(f"tensor {output.name or '<unnamed>'!r} is not tracked; nothing to differentiate")
    order = _topo_order(output)
    if inputs is not None:
        reachable = {id(t) for t in order}
        for t in inputs:
            if id(t) not in reachable or not t.requires_grad:
                raise GradError(
                    f"tensor {t.name or '<unnamed>'!r} is detached or untracked in the graph of the output"
                )
    for node in order:
        if node._backward is not None:
            node.grad = None
    output.grad = np.ones_like(output.data) if output._backward is not None else output.grad + 1.0
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# --------------------------------------------------------------------------
# Elementwise arithmetic
# --------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(a.data + b.data, (a, b), _bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(a.data - b.data, (a, b), _bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(a.data * b.data, (a, b), _bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(a.data / b.data, (a, b), _bw)


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes (both inputs ndim >= 2)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs inputs with at least two axes")

    def _bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return _make(a.data @ b.data, (a, b), _bw)


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    rec = _recorder()
    if rec is not None:
        rec.record(mask, np.abs(x.data).min() if x.size else np.inf)

    def _bw(g):
        _accumulate(x, g * mask)

    return _make(np.where(mask, x.data, 0.0), (x,), _bw)


def hinge(x) -> Tensor:
    """max(0, x); identical to ReLU, named for its role in ranking losses."""
    return relu(x)


# --------------------------------------------------------------------------
# Reductions
# --------------------------------------------------------------------------


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def _bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _make(np.asarray(out, dtype=DTYPE), (x,), _bw)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return mul(sum_(x, axes, keepdims), 1.0 / count)


def amax(x, axis=None) -> Tensor:
    """Max over ``axis``; the gradient goes to the first maximum in scan order."""
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    k = len(axes)
    moved = np.moveaxis(x.data, axes, tuple(range(x.ndim - k, x.ndim)))
    kept_shape = moved.shape[: x.ndim - k]
    flat = moved.reshape(kept_shape + (-1,))
    idx = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    rec = _recorder()
    if rec is not None:
        if flat.shape[-1] > 1:
            top2 = np.partition(flat, -2, axis=-1)[..., -2:]
            gap = (top2[..., 1] - top2[..., 0]).min() if top2.size else np.inf
        else:
            gap = np.inf
        rec.record(idx, gap)

    def _bw(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = np.moveaxis(gflat.reshape(moved.shape), tuple(range(x.ndim - k, x.ndim)), axes)
        _accumulate(x, gx)

    return _make(np.array(out, dtype=DTYPE), (x,), _bw)


# --------------------------------------------------------------------------
# Shape manipulation and indexing
# --------------------------------------------------------------------------


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)

    def _bw(g):
        _accumulate(x, g.reshape(x.shape))

    return _make(x.data.reshape(shape), (x,), _bw)


def transpose(x, axes=None) -> Tensor:
    x = as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)

    def _bw(g):
        _accumulate(x, np.transpose(g, inv))

    return _make(np.transpose(x.data, axes), (x,), _bw)


def swapaxes(x, a: int, b: int) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, tuple(axes))


def index(x, idx) -> Tensor:
    """Basic or fancy indexing; repeated indices accumulate in the gradient."""
    x = as_tensor(x)
    out = x.data[idx]

    def _bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        _accumulate(x, gx)

    return _make(np.array(out, dtype=DTYPE), (x,), _bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]

    def _bw(g):
        for i, t in enumerate(ts):
            _accumulate(t, np.take(g, i, axis=axis))

    return _make(np.stack([t.data for t in ts], axis=axis), ts, _bw)
