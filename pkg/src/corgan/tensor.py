"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation on a :class:`Tensor` that has at least one differentiable
input records its parents and a vector-Jacobian product (VJP) closure.
``Tensor.backward`` walks the recorded graph once in reverse topological
order. Heavier layer primitives (convolutions, batch norm, ...) live in
:mod:`corgan.layers` and plug into the same mechanism through
:meth:`Tensor.from_op`.
"""
from __future__ import annotations

import contextlib
import itertools
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GraphStateError, NumericError, ShapeError

_state = threading.local()
_ids = itertools.count()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording on the current thread."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _as_tensor(x) -> "Tensor":
    return x if isinstance(x, Tensor) else Tensor(x)


class Tensor:
    """An n-dimensional float64 array that can take part in autodiff."""

    __array_priority__ = 1000  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self.op = "leaf"
        self.id = next(_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable | None = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"], vjp: Callable, op: str) -> "Tensor":
        """Build the output of an operation.

        ``vjp(out_grad)`` must return one gradient (or ``None``) per parent.
        Parents are only recorded when some parent needs a gradient and
        recording is enabled.
        """
        out = cls.__new__(cls)
        out.data = data if data.dtype == np.float64 else data.astype(np.float64)
        out.grad = None
        out.name = None
        out.op = op
        out.id = next(_ids)
        if grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        return out

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label})"

    def __len__(self) -> int:
        return len(self.data)

    # -- elementwise arithmetic --------------------------------------------
    def __add__(self, other):
        other = _as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor.from_op(self.data + other.data, (self, other),
                              lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)), "add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor.from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        other = _as_tensor(other)
        a, b = self.shape, other.shape
        return Tensor.from_op(self.data - other.data, (self, other),
                              lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)), "sub")

    def __rsub__(self, other):
        return _as_tensor(other) - self

    def __mul__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data
        return Tensor.from_op(x * y, (self, other),
                              lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data
        return Tensor.from_op(
            x / y, (self, other),
            lambda g: (_unbroadcast(g / y, x.shape), _unbroadcast(-g * x / (y * y), y.shape)), "div")

    def __rtruediv__(self, other):
        return _as_tensor(other) / self

    def __pow__(self, power: float):
        x = self.data
        return Tensor.from_op(x ** power, (self,), lambda g: (g * power * x ** (power - 1),), "pow")

    def __matmul__(self, other):
        other = _as_tensor(other)
        x, y = self.data, other.data
        if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[0]:
            raise ShapeError(f"matmul: cannot multiply {x.shape} by {y.shape}")
        return Tensor.from_op(x @ y, (self, other), lambda g: (g @ y.T, x.T @ g), "matmul")

    # -- reductions and shape ops -----------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor.from_op(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), vjp, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        n = self.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        try:
            data = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"reshape: cannot view {old} as {shape}") from exc
        return Tensor.from_op(data, (self,), lambda g: (g.reshape(old),), "reshape")

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        return Tensor.from_op(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),), "transpose")

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, idx):
        shape = self.shape

        parts = idx if isinstance(idx, tuple) else (idx,)
        advanced = any(isinstance(i, (list, np.ndarray)) for i in parts)

        def vjp(g):
            full = np.zeros(shape)
            if advanced:
                np.add.at(full, idx, g)
            else:
                full[idx] += g
            return (full,)

        return Tensor.from_op(np.array(self.data[idx]), (self,), vjp, "slice")

    # -- elementwise functions ---------------------------------------------
    def exp(self):
        y = np.exp(self.data)
        return Tensor.from_op(y, (self,), lambda g: (g * y,), "exp")

    def log(self):
        x = self.data
        return Tensor.from_op(np.log(x), (self,), lambda g: (g / x,), "log")

    def abs(self):
        x = self.data
        return Tensor.from_op(np.abs(x), (self,), lambda g: (g * np.sign(x),), "abs")

    def sigmoid(self):
        y = _sigmoid(self.data)
        return Tensor.from_op(y, (self,), lambda g: (g * y * (1.0 - y),), "sigmoid")

    def tanh(self):
        y = np.tanh(self.data)
        return Tensor.from_op(y, (self,), lambda g: (g * (1.0 - y * y),), "tanh")

    def relu(self):
        mask = self.data > 0
        return Tensor.from_op(self.data * mask, (self,), lambda g: (g * mask,), "relu")

    def leaky_relu(self, slope: float = 0.2):
        scale = np.where(self.data >= 0, 1.0, slope)
        return Tensor.from_op(self.data * scale, (self,), lambda g: (g * scale,), "leaky_relu")

    # -- differentiation -------------------------------------------------
    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf that requires it."""
        if grad is None:
            if self.size != 1:
                raise ShapeError(f"backward: implicit gradient needs a scalar output, got shape {self.shape}")
            grad = np.ones(self.shape)
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.shape:
            raise ShapeError(f"backward: seed gradient {grad.shape} does not match output {self.shape}")
        if not self.requires_grad:
            return
        order = topological_order(self)
        pending = {self.id: grad}
        for node in reversed(order):
            g = pending.pop(node.id, None)
            if g is None:
                continue
            if node._vjp is None:  # leaf
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if not np.all(np.isfinite(pg)):
                    raise NumericError(f"backward: non-finite gradient flowing out of '{node.op}'")
                prev = pending.get(parent.id)
                pending[parent.id] = pg if prev is None else prev + pg


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root``, each after all of its parents."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.id in seen:
            continue
        seen.add(node.id)
        stack.append((node, True))
        for p in node._parents:
            if p.id not in seen:
                stack.append((p, False))
    return order


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}") from exc
    return Tensor.from_op(data, tensors, lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def straight_through_round(x: Tensor) -> Tensor:
    """Round half up in the forward pass; identity in the backward pass."""
    return Tensor.from_op(np.floor(x.data + 0.5), (x,), lambda g: (g,), "round_st")


def sample_noise(batch: int, dim: int, rng: np.random.Generator | int) -> Tensor:
    """``batch x dim`` standard-normal draws."""
    if batch <= 0 or dim <= 0:
        raise ValueError(f"sample_noise: batch and dim must be positive, got {batch}, {dim}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return Tensor(rng.standard_normal((batch, dim)))


@dataclass(frozen=True)
class Node:
    op: str
    inputs: tuple[int, ...]
    output: int


class Graph:
    """A traced computation with explicit forward/backward phases.

    ``fn`` maps input tensors to one output tensor. ``input_shapes`` may
    declare expected shapes, with ``None`` as a wildcard extent (typically
    the batch axis). Each :meth:`forward` retraces ``fn`` and records its
    nodes; :meth:`backward` then differentiates the cached output.
    """

    def __init__(self, fn: Callable[..., Tensor], input_shapes: Sequence[Sequence[int | None]] | None = None):
        self.fn = fn
        self.input_shapes = [tuple(s) for s in input_shapes] if input_shapes is not None else None
        self.nodes: list[Node] = []
        self.output: Tensor | None = None

    def _check_inputs(self, inputs: Sequence[Tensor]) -> None:
        if self.input_shapes is None:
            return
        if len(inputs) != len(self.input_shapes):
            raise ShapeError(f"forward: expected {len(self.input_shapes)} inputs, got {len(inputs)}")
        for i, (t, want) in enumerate(zip(inputs, self.input_shapes)):
            if len(t.shape) != len(want) or any(w is not None and w != s for w, s in zip(want, t.shape)):
                raise ShapeError(f"forward: input {i} has shape {t.shape}, declared {want}")

    def forward(self, *inputs) -> Tensor:
        inputs = [_as_tensor(x) for x in inputs]
        self._check_inputs(inputs)
        out = self.fn(*inputs)
        if not np.all(np.isfinite(out.data)):
            raise NumericError(f"forward: non-finite output from '{out.op}'")
        self.output = out
        self.nodes = [Node(t.op, tuple(p.id for p in t._parents), t.id) for t in topological_order(out)]
        return out

    def backward(self) -> None:
        if self.output is None:
            raise GraphStateError("backward called before forward")
        self.output.backward()

    @staticmethod
    def zero_grad(params: Iterable[Tensor]) -> None:
        for p in params:
            p.grad = None
