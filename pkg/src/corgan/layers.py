"""Layer primitives and a small module system built on :mod:`corgan.tensor`.

The functional ops (``conv1d``, ``conv1d_transpose``, ``batchnorm1d``,
``minibatch_discrimination``, ...) each carry a hand-written VJP. The
``Module`` classes hold parameters and wrap those ops; ``make_layer``
turns a :class:`LayerSpec` into a module.

Convolutions use cross-correlation (no kernel flip) and PyTorch's weight
layouts: ``conv1d`` kernels are ``(out, in, k)`` and ``conv1d_transpose``
kernels are ``(in, out, k)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterator

import numba
import numpy as np

from .errors import ConfigurationError, ShapeError
from .tensor import Tensor, _as_tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
DEFAULT_DROP_PROB = 0.1


# ---------------------------------------------------------------------------
# functional ops
# ---------------------------------------------------------------------------

def dense(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    if x.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weight {weight.shape}")
    out = x @ weight
    return out + bias if bias is not None else out


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d: expected 3-d input and kernel, got {x.shape} and {weight.shape}")
    n, c_in, length = x.shape
    c_out, wc_in, k = weight.shape
    if c_in != wc_in:
        raise ShapeError(f"conv1d: input has {c_in} channels but kernel expects {wc_in}")
    if length + 2 * padding < k:
        raise ShapeError(f"conv1d: padded length {length + 2 * padding} shorter than kernel {k}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    l_out = (length + 2 * padding - k) // stride + 1
    # cols[n, c, l, j] = xp[n, c, l*stride + j]
    cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, ::stride][:, :, :l_out]
    w = weight.data
    out = np.tensordot(cols, w, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
    if bias is not None:
        out = out + bias.data[None, :, None]

    def vjp(g):
        gw = np.tensordot(g, cols, axes=([0, 2], [0, 2]))  # (o, c, k)
        gcols = np.tensordot(g, w, axes=([1], [0]))  # (n, l, c, k)
        gxp = np.zeros_like(xp)
        span = stride * (l_out - 1) + 1
        for j in range(k):
            gxp[:, :, j:j + span:stride] += gcols[:, :, :, j].transpose(0, 2, 1)
        gx = gxp[:, :, padding:padding + length] if padding else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(np.ascontiguousarray(out), parents, vjp, "conv1d")


def conv1d_transpose(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv1d` with the same kernel, stride and padding.

    Output length is ``(len - 1) * stride - 2 * padding + k``.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d_transpose: expected 3-d input and kernel, got {x.shape} and {weight.shape}")
    n, c_in, length = x.shape
    wc_in, c_out, k = weight.shape
    if c_in != wc_in:
        raise ShapeError(f"conv1d_transpose: input has {c_in} channels but kernel expects {wc_in}")
    full_len = (length - 1) * stride + k
    l_out = full_len - 2 * padding
    if l_out <= 0:
        raise ShapeError(f"conv1d_transpose: padding {padding} leaves no output for length {length}")
    w = weight.data
    # contrib[n, l, o, j] = sum_c x[n, c, l] * w[c, o, j]
    contrib = np.tensordot(x.data, w, axes=([1], [0]))
    full = np.zeros((n, c_out, full_len))
    span = stride * (length - 1) + 1
    for j in range(k):
        full[:, :, j:j + span:stride] += contrib[:, :, :, j].transpose(0, 2, 1)
    out = full[:, :, padding:padding + l_out]
    if bias is not None:
        out = out + bias.data[None, :, None]

    def vjp(g):
        gfull = np.pad(g, ((0, 0), (0, 0), (padding, padding))) if padding else g
        # cols[n, o, l, j] = gfull[n, o, l*stride + j]
        cols = np.lib.stride_tricks.sliding_window_view(gfull, k, axis=2)[:, :, ::stride][:, :, :length]
        gx = np.tensordot(cols, w, axes=([1, 3], [1, 2])).transpose(0, 2, 1)
        gw = np.tensordot(x.data, cols, axes=([0, 2], [0, 2]))  # (c, o, k)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(np.ascontiguousarray(out), parents, vjp, "conv1d_transpose")


def batchnorm1d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray | None = None,
                running_var: np.ndarray | None = None, training: bool = True,
                momentum: float = BN_MOMENTUM, eps: float = BN_EPS) -> Tensor:
    """Per-channel normalization of ``(N, C)`` or ``(N, C, L)`` input.

    In training mode the batch statistics are used and the running buffers
    (if given) are updated in place; running variance uses the unbiased
    estimator. In eval mode the running buffers are used.
    """
    if x.ndim not in (2, 3):
        raise ShapeError(f"batchnorm1d: expected (N, C) or (N, C, L) input, got {x.shape}")
    axes = (0,) if x.ndim == 2 else (0, 2)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1)
    count = x.shape[0] if x.ndim == 2 else x.shape[0] * x.shape[2]
    g_ = gamma.data.reshape(bshape)
    if training:
        if x.shape[0] < 2:
            raise ShapeError("batchnorm1d: training mode needs a batch of at least 2")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if running_mean is not None:
            running_mean *= 1 - momentum
            running_mean += momentum * mean
        if running_var is not None:
            running_var *= 1 - momentum
            running_var += momentum * var * count / max(count - 1, 1)
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = g_ * xhat + beta.data.reshape(bshape)

    def vjp(gout):
        ggamma = (gout * xhat).sum(axis=axes)
        gbeta = gout.sum(axis=axes)
        gxhat = gout * g_
        if training:
            gx = (inv_std.reshape(bshape) / count) * (
                count * gxhat - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True))
        else:
            gx = gxhat * inv_std.reshape(bshape)
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), vjp, "batchnorm1d")


@numba.njit(cache=True)
def _mbd_forward(M):
    # M is (B, N, C); returns the (B, N) closeness sums excluding self
    nb, n, nc = M.shape
    o = np.zeros((nb, n))
    for b in range(nb):
        for i in range(n):
            for j in range(i + 1, n):
                d = 0.0
                for c in range(nc):
                    d += abs(M[b, i, c] - M[b, j, c])
                e = np.exp(-d)
                o[b, i] += e
                o[b, j] += e
    return o


@numba.njit(cache=True)
def _mbd_backward(M, go):
    # go is (B, N); pair (i, j) feeds o[b, i] and o[b, j] with the same exp(-d)
    nb, n, nc = M.shape
    gM = np.zeros_like(M)
    for b in range(nb):
        for i in range(n):
            for j in range(i + 1, n):
                d = 0.0
                for c in range(nc):
                    d += abs(M[b, i, c] - M[b, j, c])
                w = -(go[b, i] + go[b, j]) * np.exp(-d)
                for c in range(nc):
                    diff = M[b, i, c] - M[b, j, c]
                    s = w * ((diff > 0) - (diff < 0))
                    gM[b, i, c] += s
                    gM[b, j, c] -= s
    return gM


def minibatch_discrimination(features: Tensor, T: Tensor) -> Tensor:
    """Append cross-sample closeness features to each row.

    With ``M_i = features_i . T`` (shape ``B x C``), feature ``b`` of row
    ``i`` is ``sum_{j != i} exp(-||M_ib - M_jb||_1)``. Returns
    ``[features, o]`` of width ``A + B``.
    """
    features, T = _as_tensor(features), _as_tensor(T)
    if features.ndim != 2 or T.ndim != 3 or features.shape[1] != T.shape[0]:
        raise ShapeError(f"minibatch_discrimination: features {features.shape} incompatible with T {T.shape}")
    n, a = features.shape
    if n < 2:
        raise ShapeError("minibatch_discrimination: needs a batch of at least 2")
    _, nb, nc = T.shape
    T2 = T.data.reshape(a, nb * nc)
    M = np.ascontiguousarray((features.data @ T2).reshape(n, nb, nc).transpose(1, 0, 2))
    o = _mbd_forward(M).T

    def vjp(g):
        gM = _mbd_backward(M, np.ascontiguousarray(g[:, a:].T)).transpose(1, 0, 2).reshape(n, nb * nc)
        return g[:, :a] + gM @ T2.T, (features.data.T @ gM).reshape(T.shape)

    return Tensor.from_op(np.concatenate([features.data, o], axis=1), (features, T), vjp,
                          "minibatch_discrimination")


def corrupt(x, drop_prob: float, rng: np.random.Generator | int):
    """Zero each entry independently with probability ``drop_prob``.

    Accepts a Tensor (masking is differentiable) or an array.
    """
    if not 0.0 <= drop_prob < 1.0:
        raise ValueError(f"corrupt: drop_prob must be in [0, 1), got {drop_prob}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    if drop_prob == 0.0:
        return x
    mask = (rng.random(x.shape) >= drop_prob).astype(np.float64)
    if isinstance(x, Tensor):
        return x * mask
    return np.asarray(x, dtype=np.float64) * mask


# ---------------------------------------------------------------------------
# layer specifications
# ---------------------------------------------------------------------------

LAYER_KINDS = (
    "dense", "conv1d", "conv1d_transpose", "batchnorm1d", "leaky_relu", "relu", "sigmoid", "tanh",
    "dropout", "minibatch_discrimination",
    # structural kinds needed to wire the above together
    "flatten", "reshape", "crop", "affine",
)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        p = self.params
        if self.kind in ("conv1d", "conv1d_transpose"):
            if p.get("kernel", 0) < 1 or p.get("stride", 1) < 1 or p.get("padding", 0) < 0:
                raise ConfigurationError(f"{self.kind}: need kernel >= 1, stride >= 1, padding >= 0, got {p}")
        if self.kind == "leaky_relu" and not 0.0 < p.get("slope", 0.2) < 1.0:
            raise ConfigurationError(f"leaky_relu: slope must be in (0, 1), got {p.get('slope')}")
        if self.kind == "dropout" and not 0.0 <= p.get("p", DEFAULT_DROP_PROB) < 1.0:
            raise ConfigurationError(f"dropout: p must be in [0, 1), got {p.get('p')}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        params = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.get("params", {}).items()}
        return cls(d["kind"], params)


# ---------------------------------------------------------------------------
# modules
# ---------------------------------------------------------------------------

def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, list):
                for i, m in enumerate(value):
                    if isinstance(m, Module):
                        yield from m.named_parameters(f"{prefix}{i}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in vars(self).items():
            if isinstance(value, np.ndarray):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")
            elif isinstance(value, list):
                for i, m in enumerate(value):
                    if isinstance(m, Module):
                        yield from m.named_buffers(f"{prefix}{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def children(self) -> list["Module"]:
        kids = []
        for value in vars(self).values():
            if isinstance(value, Module):
                kids.append(value)
            elif isinstance(value, list):
                kids.extend(m for m in value if isinstance(m, Module))
        return kids

    def train(self, mode: bool = True) -> "Module":
        self.training = mode
        for child in self.children():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        self.weight = _uniform(rng, (n_in, n_out), n_in)
        self.bias = _uniform(rng, (n_out,), n_in)

    def forward(self, x):
        return dense(x, self.weight, self.bias)


class Conv1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, padding: int, rng):
        self.stride, self.padding = stride, padding
        self.weight = _uniform(rng, (c_out, c_in, kernel), c_in * kernel)
        self.bias = _uniform(rng, (c_out,), c_in * kernel)

    def forward(self, x):
        return conv1d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose1d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, padding: int, rng):
        self.stride, self.padding = stride, padding
        self.weight = _uniform(rng, (c_in, c_out, kernel), c_in * kernel)
        self.bias = _uniform(rng, (c_out,), c_in * kernel)

    def forward(self, x):
        return conv1d_transpose(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm1d(Module):
    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def forward(self, x):
        return batchnorm1d(x, self.gamma, self.beta, self.running_mean, self.running_var, self.training)


class MinibatchDiscrimination(Module):
    def __init__(self, n_features: int, n_kernels: int, kernel_dim: int, rng):
        self.T = _uniform(rng, (n_features, n_kernels, kernel_dim), n_features)

    def forward(self, x):
        return minibatch_discrimination(x, self.T)


class Affine(Module):
    """Learned per-feature scale and shift, initialised to the identity."""

    def __init__(self, width: int):
        self.scale = Tensor(np.ones(width), requires_grad=True)
        self.shift = Tensor(np.zeros(width), requires_grad=True)

    def forward(self, x):
        return x * self.scale + self.shift


class Activation(Module):
    def __init__(self, kind: str, slope: float = 0.2):
        self.kind, self.slope = kind, slope

    def forward(self, x):
        if self.kind == "leaky_relu":
            return x.leaky_relu(self.slope)
        return getattr(x, self.kind)()


class Dropout(Module):
    """Input corruption that is active only in training mode."""

    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng

    def forward(self, x):
        if not self.training or self.p == 0.0:
            return x
        return corrupt(x, self.p, self.rng)


class Reshape(Module):
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        return x.reshape((x.shape[0],) + self.shape)


class Flatten(Module):
    def forward(self, x):
        return x.reshape(x.shape[0], -1)


class Crop(Module):
    """Keep the first ``length`` positions of the last axis."""

    def __init__(self, length: int):
        self.length = length

    def forward(self, x):
        if x.shape[-1] < self.length:
            raise ShapeError(f"crop: input length {x.shape[-1]} shorter than {self.length}")
        return x if x.shape[-1] == self.length else x[..., :self.length]


class Sequential(Module):
    def __init__(self, layers: list[Module]):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x


def make_layer(spec: LayerSpec, rng: np.random.Generator) -> Module:
    p = spec.params
    kind = spec.kind
    if kind == "dense":
        return Dense(p["n_in"], p["n_out"], rng)
    if kind == "conv1d":
        return Conv1d(p["c_in"], p["c_out"], p["kernel"], p.get("stride", 1), p.get("padding", 0), rng)
    if kind == "conv1d_transpose":
        return ConvTranspose1d(p["c_in"], p["c_out"], p["kernel"], p.get("stride", 1), p.get("padding", 0), rng)
    if kind == "batchnorm1d":
        return BatchNorm1d(p["channels"])
    if kind in ("leaky_relu", "relu", "sigmoid", "tanh"):
        return Activation(kind, p.get("slope", 0.2))
    if kind == "dropout":
        return Dropout(p.get("p", DEFAULT_DROP_PROB), rng)
    if kind == "minibatch_discrimination":
        return MinibatchDiscrimination(p["n_features"], p["n_kernels"], p["kernel_dim"], rng)
    if kind == "flatten":
        return Flatten()
    if kind == "reshape":
        return Reshape(p["shape"])
    if kind == "crop":
        return Crop(p["length"])
    if kind == "affine":
        return Affine(p["width"])
    raise ConfigurationError(f"unknown layer kind {kind!r}")


def build_stack(specs: list[LayerSpec], rng: np.random.Generator) -> Sequential:
    return Sequential([make_layer(s, rng) for s in specs])
