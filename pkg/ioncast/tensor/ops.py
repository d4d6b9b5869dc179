"""
Differentiable primitives shared by both forecasters.

Elementwise arithmetic supports the numpy broadcasting the models need
(bias rows, per-channel weights); gradients are summed back to the input
shape. Graph primitives (gather, scatter_sum) index along the leading
axis and always accumulate in ascending edge order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ioncast.errors import ArgumentError, DimensionError, IndexOutOfRangeError
from ioncast.tensor.tensor import Primitive, Tensor, apply, as_tensor

LAYER_NORM_EPS = 1e-5


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from exc


# ── Elementwise ──────────────────────────────────────────────────


class Add(Primitive):
    name = "add"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, self.name)
        return a + b

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        a, b = inputs
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Sub(Primitive):
    name = "sub"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, self.name)
        return a - b

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        a, b = inputs
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)


class Mul(Primitive):
    name = "mul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _check_broadcast(a, b, self.name)
        return a * b

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        a, b = inputs
        return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)


class Scale(Primitive):
    name = "scale"

    def __init__(self, factor: float) -> None:
        self.factor = factor

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x * x.dtype.type(self.factor)

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        return (grad * grad.dtype.type(self.factor),)


class Square(Primitive):
    name = "square"

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x * x

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        (x,) = inputs
        return (2 * grad * x,)


class Sigmoid(Primitive):
    name = "sigmoid"

    def forward(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * (1.0 + np.tanh(0.5 * x))

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        return (grad * output * (1.0 - output),)


class Tanh(Primitive):
    name = "tanh"

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x)

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        return (grad * (1.0 - output * output),)


class Swish(Primitive):
    """x * sigmoid(x)."""

    name = "swish"

    def forward(self, x: np.ndarray) -> np.ndarray:
        return x * (0.5 * (1.0 + np.tanh(0.5 * x)))

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        (x,) = inputs
        s = 0.5 * (1.0 + np.tanh(0.5 * x))
        return (grad * (s + x * s * (1.0 - s)),)


# ── Linear algebra ───────────────────────────────────────────────


class MatMul(Primitive):
    name = "matmul"

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: inner extents differ for shapes {a.shape} and {b.shape}")
        return a @ b

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        a, b = inputs
        return grad @ b.T, a.T @ grad


# ── Reductions and shape ─────────────────────────────────────────


def _normalize_axes(axis: int | Sequence[int] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


class Sum(Primitive):
    name = "sum"

    def __init__(self, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> None:
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x.sum(axis=_normalize_axes(self.axis, x.ndim), keepdims=self.keepdims))

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        (x,) = inputs
        axes = _normalize_axes(self.axis, x.ndim)
        if not self.keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad, x.shape).copy(),)


class Mean(Primitive):
    name = "mean"

    def __init__(self, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> None:
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x.mean(axis=_normalize_axes(self.axis, x.ndim), keepdims=self.keepdims))

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        (x,) = inputs
        axes = _normalize_axes(self.axis, x.ndim)
        count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
        if not self.keepdims:
            grad = np.expand_dims(grad, axes)
        return (np.broadcast_to(grad / count, x.shape).copy(),)


class Reshape(Primitive):
    name = "reshape"

    def __init__(self, shape: tuple[int, ...]) -> None:
        self.shape = shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        try:
            return x.reshape(self.shape)
        except ValueError as exc:
            raise DimensionError(f"reshape: cannot view {x.shape} as {self.shape}") from exc

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        return (grad.reshape(inputs[0].shape),)


class Transpose(Primitive):
    name = "transpose"

    def __init__(self, axes: tuple[int, ...]) -> None:
        self.axes = axes

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(np.transpose(x, self.axes))

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        return (np.ascontiguousarray(np.transpose(grad, np.argsort(self.axes))),)


class BroadcastTo(Primitive):
    name = "broadcast_to"

    def __init__(self, shape: tuple[int, ...]) -> None:
        self.shape = shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        try:
            return np.broadcast_to(x, self.shape).copy()
        except ValueError as exc:
            raise DimensionError(f"broadcast_to: cannot broadcast {x.shape} to {self.shape}") from exc

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        return (_unbroadcast(grad, inputs[0].shape),)


class Concat(Primitive):
    name = "concat"

    def __init__(self, axis: int) -> None:
        self.axis = axis

    def forward(self, *xs: np.ndarray) -> np.ndarray:
        try:
            return np.concatenate(xs, axis=self.axis)
        except ValueError as exc:
            shapes = [x.shape for x in xs]
            raise DimensionError(f"concat along axis {self.axis}: incompatible shapes {shapes}") from exc

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        bounds = np.cumsum([x.shape[self.axis] for x in inputs])[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class Slice(Primitive):
    name = "slice"

    def __init__(self, axis: int, start: int, stop: int) -> None:
        self.axis = axis
        self.start = start
        self.stop = stop

    def _index(self, ndim: int) -> tuple[slice, ...]:
        index = [slice(None)] * ndim
        index[self.axis] = slice(self.start, self.stop)
        return tuple(index)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(x[self._index(x.ndim)])

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        (x,) = inputs
        full = np.zeros_like(x)
        full[self._index(x.ndim)] = grad
        return (full,)


# ── Graph message passing ────────────────────────────────────────


def _check_indices(indices: np.ndarray, n: int, op: str) -> None:
    if indices.size == 0:
        return
    bad = np.flatnonzero((indices < 0) | (indices >= n))
    if bad.size:
        edge = int(bad[0])
        raise IndexOutOfRangeError(
            f"{op}: edge {edge} has index {int(indices[edge])} outside [0, {n})"
        )


class Gather(Primitive):
    """Rows of ``x`` selected by ``indices`` (one row per edge)."""

    name = "gather"

    def __init__(self, indices: np.ndarray) -> None:
        self.indices = np.asarray(indices, dtype=np.int64)

    def forward(self, x: np.ndarray) -> np.ndarray:
        _check_indices(self.indices, x.shape[0], self.name)
        return x[self.indices]

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        (x,) = inputs
        full = np.zeros_like(x)
        np.add.at(full, self.indices, grad)
        return (full,)


class ScatterSum(Primitive):
    """Sum of edge rows into their receiver rows, in ascending edge order."""

    name = "scatter_sum"

    def __init__(self, receivers: np.ndarray, n: int) -> None:
        self.receivers = np.asarray(receivers, dtype=np.int64)
        self.n = n

    def forward(self, values: np.ndarray) -> np.ndarray:
        if values.shape[0] != self.receivers.shape[0]:
            raise DimensionError(
                f"scatter_sum: {values.shape[0]} value rows but {self.receivers.shape[0]} receiver indices"
            )
        _check_indices(self.receivers, self.n, self.name)
        out = np.zeros((self.n,) + values.shape[1:], dtype=values.dtype)
        np.add.at(out, self.receivers, values)
        return out

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        return (grad[self.receivers],)


# ── Normalization ────────────────────────────────────────────────


class LayerNorm(Primitive):
    name = "layer_norm"

    def forward(self, x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
        if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
            raise DimensionError(
                f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last axis of {x.shape}"
            )
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        xhat = (x - mu) / np.sqrt(var + LAYER_NORM_EPS)
        return xhat * gain + bias

    def backward(
        self, grad: np.ndarray, inputs: tuple[np.ndarray, ...], output: np.ndarray
    ) -> tuple[np.ndarray | None, ...]:
        x, gain, bias = inputs
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + LAYER_NORM_EPS)
        xhat = (x - mu) * inv_std
        lead = tuple(range(x.ndim - 1))
        g_gain = (grad * xhat).sum(axis=lead)
        g_bias = grad.sum(axis=lead)
        dxhat = grad * gain
        g_x = inv_std * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return g_x, g_gain, g_bias


# ── Functional API ───────────────────────────────────────────────


def add(a: Any, b: Any) -> Tensor:
    return apply(Add(), as_tensor(a), as_tensor(b))


def sub(a: Any, b: Any) -> Tensor:
    return apply(Sub(), as_tensor(a), as_tensor(b))


def mul(a: Any, b: Any) -> Tensor:
    return apply(Mul(), as_tensor(a), as_tensor(b))


def scale(x: Tensor, factor: float) -> Tensor:
    return apply(Scale(factor), x)


def square(x: Tensor) -> Tensor:
    return apply(Square(), x)


def sigmoid(x: Tensor) -> Tensor:
    return apply(Sigmoid(), x)


def tanh(x: Tensor) -> Tensor:
    return apply(Tanh(), x)


def swish(x: Tensor) -> Tensor:
    return apply(Swish(), x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m x k] and b [k x n]."""
    return apply(MatMul(), as_tensor(a), as_tensor(b))


def sum(x: Tensor, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return apply(Sum(axis, keepdims), x)


def mean(x: Tensor, axis: int | Sequence[int] | None = None, keepdims: bool = False) -> Tensor:
    return apply(Mean(axis, keepdims), x)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return apply(Reshape(tuple(shape)), x)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    return apply(Transpose(tuple(axes)), x)


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return apply(BroadcastTo(tuple(shape)), x)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not xs:
        raise ArgumentError("concat needs at least one tensor")
    return apply(Concat(axis), *(as_tensor(x) for x in xs))


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    return apply(Slice(axis, start, stop), x)


def gather(x: Tensor, indices: np.ndarray) -> Tensor:
    return apply(Gather(indices), x)


def scatter_sum(values: Tensor, receiver_index: np.ndarray, n: int) -> Tensor:
    """
    Row r of the result is the sum of value rows whose receiver is r.

    Rows without senders are zero. Accumulation runs in ascending edge
    order, so results are reproducible bit for bit.
    """
    if n < 0:
        raise ArgumentError(f"scatter_sum: node count must be >= 0, got {n}")
    values = as_tensor(values)
    if values.ndim == 1 and values.shape[0] == 0:
        values = Tensor(np.zeros((0, 1)))
    return apply(ScatterSum(receiver_index, n), values)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply gain and bias."""
    if x.shape[-1] < 1:
        raise DimensionError(f"layer_norm: last axis must be non-empty, got {x.shape}")
    return apply(LayerNorm(), x, as_tensor(gain), as_tensor(bias))


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training or at rate 0."""
    if not training or rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ArgumentError(f"dropout rate must be < 1, got {rate}")
    if rng is None:
        raise ArgumentError("dropout in training mode needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return mul(x, Tensor(keep))


# ── Recurrent cell ───────────────────────────────────────────────


@dataclass
class LstmCellParams:
    """Gate weights packed in input/forget/output/candidate order."""

    w_x: Tensor  # [d x 4k]
    w_h: Tensor  # [k x 4k]
    bias: Tensor  # [4k]

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[0]


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """
    One LSTM update with sigmoid gates and tanh candidate/output.

        i, f, o = sigmoid(...), g = tanh(...)
        c' = f * c + i * g
        h' = o * tanh(c')
    """
    k = params.hidden_dim
    d = x.shape[-1]
    if params.w_x.shape != (d, 4 * k) or params.w_h.shape != (k, 4 * k) or params.bias.shape != (4 * k,):
        raise DimensionError(
            f"lstm_cell: weights {params.w_x.shape}, {params.w_h.shape}, {params.bias.shape} "
            f"incompatible with input dim {d} and hidden dim {k}"
        )
    if h.shape[-1] != k or c.shape[-1] != k:
        raise DimensionError(f"lstm_cell: state shapes {h.shape}, {c.shape} do not match hidden dim {k}")

    x2 = reshape(x, (1, d)) if x.ndim == 1 else x
    h2 = reshape(h, (1, k)) if h.ndim == 1 else h
    c2 = reshape(c, (1, k)) if c.ndim == 1 else c

    z = add(add(matmul(x2, params.w_x), matmul(h2, params.w_h)), params.bias)
    i_gate = sigmoid(slice_axis(z, -1, 0, k))
    f_gate = sigmoid(slice_axis(z, -1, k, 2 * k))
    o_gate = sigmoid(slice_axis(z, -1, 2 * k, 3 * k))
    candidate = tanh(slice_axis(z, -1, 3 * k, 4 * k))

    c_next = add(mul(f_gate, c2), mul(i_gate, candidate))
    h_next = mul(o_gate, tanh(c_next))
    if x.ndim == 1:
        return reshape(h_next, (k,)), reshape(c_next, (k,))
    return h_next, c_next
