"""
Named parameter sets and the building blocks both models share.

Parameters live in a flat ``dict[str, np.ndarray]`` keyed by dotted
names (``processor.2.edge.out.w``). A forward pass binds them to Tensors
once, so every use of a parameter within the pass feeds the same
gradient slot.
"""
from __future__ import annotations

from collections.abc import Mapping

import numpy as np

from ioncast.errors import ArgumentError
from ioncast.tensor import Tensor, default_dtype, ops

Params = dict[str, np.ndarray]
Bound = Mapping[str, Tensor]


def bind(params: Params, requires_grad: bool = False) -> dict[str, Tensor]:
    """Wrap every parameter as a named Tensor for one forward pass."""
    return {name: Tensor(value, requires_grad=requires_grad, name=name) for name, value in params.items()}


def parameter_count(params: Params) -> int:
    return int(sum(value.size for value in params.values()))


def _store(params: Params, name: str, value: np.ndarray) -> None:
    if name in params:
        raise ArgumentError(f"duplicate parameter name {name!r}")
    params[name] = np.ascontiguousarray(value, dtype=default_dtype())


def init_linear(
    params: Params,
    name: str,
    d_in: int,
    d_out: int,
    rng: np.random.Generator,
    zero: bool = False,
) -> None:
    """``{name}.w`` [d_in x d_out] with fan-in scaled normal init, ``{name}.b`` zeros."""
    weight = np.zeros((d_in, d_out)) if zero else rng.standard_normal((d_in, d_out)) / np.sqrt(max(d_in, 1))
    _store(params, f"{name}.w", weight)
    _store(params, f"{name}.b", np.zeros(d_out))


def init_mlp(
    params: Params,
    name: str,
    d_in: int,
    d_hidden: int,
    d_out: int,
    rng: np.random.Generator,
    zero_out: bool = False,
) -> None:
    """Two-layer MLP followed by layer norm: ``{name}.hidden``, ``{name}.out``, ``{name}.norm``."""
    init_linear(params, f"{name}.hidden", d_in, d_hidden, rng)
    init_linear(params, f"{name}.out", d_hidden, d_out, rng, zero=zero_out)
    _store(params, f"{name}.norm.gain", np.ones(d_out))
    _store(params, f"{name}.norm.bias", np.zeros(d_out))


def init_conv(
    params: Params,
    name: str,
    c_out: int,
    c_in: int,
    kernel: int,
    rng: np.random.Generator,
    zero: bool = False,
    transposed: bool = False,
) -> None:
    """
    Kernel and per-channel bias.

    Convolution kernels are [O x C x k x k]; transposed kernels follow the
    adjoint layout [I x C x k x k] where I is the input channel count.
    """
    shape = (c_in, c_out, kernel, kernel) if transposed else (c_out, c_in, kernel, kernel)
    fan_in = c_in * kernel * kernel
    weight = np.zeros(shape) if zero else rng.standard_normal(shape) / np.sqrt(fan_in)
    _store(params, f"{name}.k", weight)
    _store(params, f"{name}.b", np.zeros(c_out))


def linear(x: Tensor, p: Bound, name: str) -> Tensor:
    return ops.add(ops.matmul(x, p[f"{name}.w"]), p[f"{name}.b"])


def mlp(
    x: Tensor,
    p: Bound,
    name: str,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    """linear -> swish -> (dropout) -> linear -> layer norm."""
    hidden = ops.swish(linear(x, p, f"{name}.hidden"))
    hidden = ops.dropout(hidden, dropout, rng, training)
    out = linear(hidden, p, f"{name}.out")
    return ops.layer_norm(out, p[f"{name}.norm.gain"], p[f"{name}.norm.bias"])


def channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias [C] to a map stack [C x H x W]."""
    return ops.add(x, ops.reshape(bias, (bias.shape[0], 1, 1)))


def nodes_to_maps(x: Tensor, shape: tuple[int, int]) -> Tensor:
    """[H*W x C] node rows -> [C x H x W]."""
    h, w = shape
    return ops.transpose(ops.reshape(x, (h, w, x.shape[-1])), (2, 0, 1))


def maps_to_nodes(x: np.ndarray) -> np.ndarray:
    """[..., C, H, W] -> [H*W x (... * C)], row-major node order."""
    c_total = int(np.prod(x.shape[:-2]))
    h, w = x.shape[-2:]
    return np.ascontiguousarray(x.reshape(c_total, h * w).T)
