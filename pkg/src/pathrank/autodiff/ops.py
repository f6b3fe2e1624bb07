"""Differentiable ops over dense rank-2 (and scalar) arrays.

Every op records its local gradient on the operands' tape. Broadcasting is limited
to adding a bias vector over the rows of a matrix.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

from pathrank.autodiff.errors import DimensionError


if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

    from pathrank.autodiff.tape import Array, Tensor


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an (m, k) and a (k, n) tensor."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", a.shape, b.shape)
    x, y = a.data, b.data

    def grad(g: Array) -> tuple[Array, Array]:
        return (g @ y.T, x.T @ g)

    return a.tape.record("matmul", x @ y, (a, b), grad)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; `b` may also be a bias vector added to every row of `a`."""
    if a.shape == b.shape:

        def grad_same(g: Array) -> tuple[Array, Array]:
            return (g, g)

        return a.tape.record("add", a.data + b.data, (a, b), grad_same)

    if a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:

        def grad_bias(g: Array) -> tuple[Array, Array]:
            return (g, g.sum(axis=0))

        return a.tape.record("add", a.data + b.data, (a, b), grad_bias)

    raise DimensionError("add", a.shape, b.shape)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of equally shaped tensors."""
    if a.shape != b.shape:
        raise DimensionError("mul", a.shape, b.shape)
    x, y = a.data, b.data

    def grad(g: Array) -> tuple[Array, Array]:
        return (g * y, g * x)

    return a.tape.record("mul", x * y, (a, b), grad)


def scale(a: Tensor, factor: float) -> Tensor:
    """Multiply by a constant scalar."""

    def grad(g: Array) -> tuple[Array]:
        return (g * factor,)

    return a.tape.record("scale", a.data * factor, (a,), grad)


def add_constant(a: Tensor, constant: NDArray[np.floating]) -> Tensor:
    """Add a same-shaped constant array (attention masks, fixed offsets)."""
    if a.shape != tuple(constant.shape):
        raise DimensionError("add_constant", a.shape, tuple(constant.shape))

    def grad(g: Array) -> tuple[Array]:
        return (g,)

    return a.tape.record("add_constant", a.data + constant, (a,), grad)


def mul_constant(a: Tensor, constant: NDArray[np.floating]) -> Tensor:
    """Multiply by a same-shaped constant array (row selection masks, dropout)."""
    if a.shape != tuple(constant.shape):
        raise DimensionError("mul_constant", a.shape, tuple(constant.shape))

    def grad(g: Array) -> tuple[Array]:
        return (g * constant,)

    return a.tape.record("mul_constant", a.data * constant, (a,), grad)


def _check_axis(x: Tensor, axis: int, op: str) -> int:
    ndim = x.data.ndim
    if not -ndim <= axis < ndim:
        raise DimensionError(f"{op}(axis={axis})", x.shape)
    return axis % ndim


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along one axis, computed with max-subtraction."""
    axis = _check_axis(x, axis, "softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    y = exp / exp.sum(axis=axis, keepdims=True)

    def grad(g: Array) -> tuple[Array]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return x.tape.record("softmax", y, (x,), grad)


def cross_entropy(p: Tensor, index: int) -> Tensor:
    """Negative log-probability of `index` under the distribution `p`."""
    flat = p.data.reshape(-1)
    if p.data.ndim == 2 and p.shape[0] != 1:
        raise DimensionError("cross_entropy", p.shape)
    if not 0 <= index < flat.size:
        raise IndexError(f"cross_entropy: index {index} out of range for {flat.size} classes")
    picked = flat[index]
    with np.errstate(divide="ignore"):
        loss = -np.log(picked)

    def grad(g: Array) -> tuple[Array]:
        local = np.zeros_like(flat)
        local[index] = -g.reshape(()) / picked
        return (local.reshape(p.shape),)

    return p.tape.record("cross_entropy", np.asarray(loss), (p,), grad)


def bce_with_logit(z: Tensor, target: float) -> Tensor:
    """Binary cross-entropy of a single logit against a 0/1 target."""
    if z.data.size != 1:
        raise DimensionError("bce_with_logit", z.shape)
    value = float(z.data.reshape(()))
    loss = max(value, 0.0) - value * target + math.log1p(math.exp(-abs(value)))
    sigmoid = 0.5 * (1.0 + math.tanh(0.5 * value))

    def grad(g: Array) -> tuple[Array]:
        return (np.full(z.shape, (sigmoid - target), dtype=z.data.dtype) * g.reshape(()),)

    return z.tape.record("bce_with_logit", np.asarray(loss), (z,), grad)


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize each row to zero mean and unit variance, then apply gain and bias."""
    if x.data.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimensionError("layernorm", x.shape, gamma.shape, beta.shape)
    mean = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mean
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + eps)
    xhat = centered * inv_std
    gain = gamma.data

    def grad(g: Array) -> tuple[Array, Array, Array]:
        dxhat = g * gain
        dx = inv_std * (
            dxhat
            - dxhat.mean(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
        )
        return (dx, (g * xhat).sum(axis=0), g.sum(axis=0))

    return x.tape.record("layernorm", xhat * gain + beta.data, (x, gamma, beta), grad)


def gelu(x: Tensor) -> Tensor:
    """Tanh-approximated GELU."""
    v = x.data
    inner = _GELU_C * (v + _GELU_A * v**3)
    t = np.tanh(inner)

    def grad(g: Array) -> tuple[Array]:
        d_inner = _GELU_C * (1.0 + 3.0 * _GELU_A * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * d_inner),)

    return x.tape.record("gelu", 0.5 * v * (1.0 + t), (x,), grad)


def embedding_lookup(table: Tensor, ids: Sequence[int] | NDArray[np.integer]) -> Tensor:
    """Gather rows of an embedding table."""
    index = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2 or index.ndim != 1:
        raise DimensionError("embedding_lookup", table.shape, tuple(index.shape))
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise IndexError(f"embedding_lookup: ids outside [0, {table.shape[0]})")

    def grad(g: Array) -> tuple[Array]:
        local = np.zeros_like(table.data)
        np.add.at(local, index, g)
        return (local,)

    return table.tape.record("embedding_lookup", table.data[index], (table,), grad)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along an axis."""
    if not tensors:
        raise DimensionError("concat")
    first = tensors[0]
    axis = _check_axis(first, axis, "concat")
    for tensor in tensors[1:]:
        other = [dim for i, dim in enumerate(tensor.shape) if i != axis]
        expected = [dim for i, dim in enumerate(first.shape) if i != axis]
        if tensor.data.ndim != first.data.ndim or other != expected:
            raise DimensionError("concat", *(t.shape for t in tensors))
    bounds = np.cumsum([tensor.shape[axis] for tensor in tensors])[:-1]

    def grad(g: Array) -> tuple[Array, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    data = np.concatenate([tensor.data for tensor in tensors], axis=axis)
    return first.tape.record("concat", data, tuple(tensors), grad)


def slice_(x: Tensor, start: int, stop: int, axis: int = 0) -> Tensor:
    """Take `[start, stop)` along one axis."""
    axis = _check_axis(x, axis, "slice")
    if not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"slice[{start}:{stop}, axis={axis}]", x.shape)
    index: list[slice] = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    window = tuple(index)

    def grad(g: Array) -> tuple[Array]:
        local = np.zeros_like(x.data)
        local[window] = g
        return (local,)

    return x.tape.record("slice", x.data[window], (x,), grad)


def transpose(x: Tensor) -> Tensor:
    """Transpose a matrix."""
    if x.data.ndim != 2:
        raise DimensionError("transpose", x.shape)

    def grad(g: Array) -> tuple[Array]:
        return (g.T,)

    return x.tape.record("transpose", x.data.T, (x,), grad)


def sum_all(x: Tensor) -> Tensor:
    """Sum every element into a scalar."""

    def grad(g: Array) -> tuple[Array]:
        return (np.full_like(x.data, g.reshape(())),)

    return x.tape.record("sum", np.asarray(x.data.sum()), (x,), grad)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity when `rate` is zero."""
    if rate <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout with a positive rate needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return mul_constant(x, keep)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Log of softmax along one axis, without forming probabilities first."""
    axis = _check_axis(x, axis, "log_softmax")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    p = np.exp(y)

    def grad(g: Array) -> tuple[Array]:
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return x.tape.record("log_softmax", y, (x,), grad)


def nll_rows(logp: Tensor, targets: Sequence[int] | NDArray[np.integer]) -> Tensor:
    """Mean negative log-likelihood of one target per row of log-probabilities."""
    index = np.asarray(targets, dtype=np.int64)
    if logp.data.ndim != 2 or index.shape != (logp.shape[0],) or index.size == 0:
        raise DimensionError("nll_rows", logp.shape, tuple(index.shape))
    if index.min() < 0 or index.max() >= logp.shape[1]:
        raise IndexError(f"nll_rows: targets outside [0, {logp.shape[1]})")
    rows = np.arange(index.size)
    loss = -logp.data[rows, index].mean()

    def grad(g: Array) -> tuple[Array]:
        local = np.zeros_like(logp.data)
        local[rows, index] = -g.reshape(()) / index.size
        return (local,)

    return logp.tape.record("nll_rows", np.asarray(loss), (logp,), grad)
