"""Central finite-difference checks for every differentiable op and loss.

Each case builds random inputs and a function of them; the check compares
the tape gradient of ``sum(f(inputs) * R)`` (``R`` a fixed random weight)
against central differences, element by element.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import layers as L
from .tensor import Tensor, concat
from .training import bce_loss

H = 1e-6


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def check_gradients(fn: Callable[..., Tensor], arrays: list[np.ndarray], rng: np.random.Generator,
                    h: float = H) -> float:
    """Largest relative error over the inputs between tape and finite-difference gradients."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    out = fn(*[Tensor(a) for a in arrays])
    R = rng.standard_normal(out.shape)

    def scalar(xs):
        return float(np.sum(fn(*[Tensor(x) for x in xs]).data * R))

    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    (fn(*leaves) * R).sum().backward()
    worst = 0.0
    for k, a in enumerate(arrays):
        num = np.zeros_like(a)
        flat = a.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = scalar(arrays)
            flat[i] = old - h
            down = scalar(arrays)
            flat[i] = old
            num.reshape(-1)[i] = (up - down) / (2 * h)
        grad = leaves[k].grad if leaves[k].grad is not None else np.zeros_like(a)
        worst = max(worst, relative_error(grad, num))
    return worst


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.uniform(margin, 2.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


@dataclass(frozen=True)
class GradCase:
    name: str
    make: Callable[[np.random.Generator], tuple[Callable[..., Tensor], list[np.ndarray]]]


def _case(name):
    def register(make):
        CASES.append(GradCase(name, make))
        return make
    return register


CASES: list[GradCase] = []


@_case("add_broadcast")
def _(rng):
    return (lambda a, b: a + b), [rng.standard_normal((3, 4)), rng.standard_normal((1, 4))]


@_case("sub")
def _(rng):
    return (lambda a, b: a - b), [rng.standard_normal((3, 2)), rng.standard_normal(2)]


@_case("mul_broadcast")
def _(rng):
    return (lambda a, b: a * b), [rng.standard_normal((2, 3, 2)), rng.standard_normal((3, 1))]


@_case("div")
def _(rng):
    return (lambda a, b: a / b), [rng.standard_normal((3, 3)), _away_from_zero(rng, (3, 3), 0.5)]


@_case("pow")
def _(rng):
    return (lambda a: a ** 3), [rng.standard_normal((4,))]


@_case("matmul")
def _(rng):
    return (lambda a, b: a @ b), [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))]


@_case("sum_axis")
def _(rng):
    return (lambda a: a.sum(axis=1, keepdims=True)), [rng.standard_normal((3, 4))]


@_case("mean")
def _(rng):
    return (lambda a: a.mean(axis=0)), [rng.standard_normal((3, 4))]


@_case("reshape_transpose")
def _(rng):
    return (lambda a: a.reshape(4, 3).transpose(1, 0)), [rng.standard_normal((2, 6))]


@_case("getitem")
def _(rng):
    idx = np.array([0, 2, 2])
    return (lambda a: a[idx, 1:]), [rng.standard_normal((3, 4))]


@_case("concat")
def _(rng):
    return (lambda a, b: concat([a, b], axis=1)), [rng.standard_normal((2, 3)), rng.standard_normal((2, 2))]


@_case("exp_log")
def _(rng):
    return (lambda a: a.exp() + (a * a + 1.0).log()), [rng.standard_normal((3, 3))]


@_case("abs")
def _(rng):
    return (lambda a: a.abs()), [_away_from_zero(rng, (3, 3))]


@_case("sigmoid")
def _(rng):
    return (lambda a: a.sigmoid()), [3 * rng.standard_normal((3, 4))]


@_case("tanh")
def _(rng):
    return (lambda a: a.tanh()), [rng.standard_normal((3, 4))]


@_case("relu")
def _(rng):
    return (lambda a: a.relu()), [_away_from_zero(rng, (3, 4))]


@_case("leaky_relu")
def _(rng):
    return (lambda a: a.leaky_relu(0.2)), [_away_from_zero(rng, (3, 4))]


@_case("dense")
def _(rng):
    return L.dense, [rng.standard_normal((4, 3)), rng.standard_normal((3, 5)), rng.standard_normal(5)]


@_case("conv1d")
def _(rng):
    stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 3))
    return (lambda x, w, b: L.conv1d(x, w, b, stride, padding)), [
        rng.standard_normal((2, 2, 9)), rng.standard_normal((3, 2, 3)), rng.standard_normal(3)]


@_case("conv1d_transpose")
def _(rng):
    stride, padding = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    return (lambda x, w, b: L.conv1d_transpose(x, w, b, stride, padding)), [
        rng.standard_normal((2, 3, 5)), rng.standard_normal((3, 2, 4)), rng.standard_normal(2)]


@_case("batchnorm1d_train")
def _(rng):
    shape = (5, 3) if rng.random() < 0.5 else (4, 3, 4)
    return (lambda x, g, b: L.batchnorm1d(x, g, b, training=True)), [
        rng.standard_normal(shape), rng.uniform(0.5, 1.5, 3), rng.standard_normal(3)]


@_case("batchnorm1d_eval")
def _(rng):
    rm, rv = rng.standard_normal(3), rng.uniform(0.5, 2.0, 3)
    return (lambda x, g, b: L.batchnorm1d(x, g, b, rm, rv, training=False)), [
        rng.standard_normal((4, 3, 2)), rng.uniform(0.5, 1.5, 3), rng.standard_normal(3)]


@_case("minibatch_discrimination")
def _(rng):
    return L.minibatch_discrimination, [rng.standard_normal((4, 3)), rng.standard_normal((3, 2, 3))]


@_case("corrupt")
def _(rng):
    seed = int(rng.integers(1 << 30))
    return (lambda a: L.corrupt(a, 0.3, seed)), [rng.standard_normal((4, 5))]


@_case("bce_loss")
def _(rng):
    target = (rng.random((4, 3)) < 0.5).astype(float)
    return (lambda y: bce_loss(y, target)), [rng.uniform(0.05, 0.95, (4, 3))]


@_case("bce_through_sigmoid")
def _(rng):
    target = (rng.random(6) < 0.5).astype(float)
    return (lambda a: bce_loss(a.sigmoid(), target)), [rng.standard_normal(6)]


def run_case(case: GradCase, trials: int, seed: int = 0) -> float:
    rng = np.random.default_rng([seed, len(case.name)])
    worst = 0.0
    for _ in range(trials):
        fn, arrays = case.make(rng)
        worst = max(worst, check_gradients(fn, arrays, rng))
    return worst
