"""
Dense tensors, the recording tape and reverse-mode differentiation.

A Tensor wraps a contiguous row-major numpy buffer. Differentiable
primitives (subclasses of Primitive) are applied through apply(); while a
ComputeGraph is active (``with trace() as graph:``) every application
whose inputs require gradients is appended to the graph in execution
order, so recording order is a topological order by construction.

backward() walks the recorded nodes in reverse and accumulates
vector-Jacobian products into a per-tensor gradient table.

Precision:
    float32 by default; ``with precision("float64"):`` switches every
    tensor created inside the block to 64-bit (used for gradient checks).
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Iterator, Mapping
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, ClassVar

import numpy as np

from ioncast.errors import ArgumentError

_DTYPE: ContextVar[type[np.floating]] = ContextVar("ioncast_dtype", default=np.float32)
_ACTIVE_GRAPH: ContextVar["ComputeGraph | None"] = ContextVar("ioncast_graph", default=None)

PRECISIONS: dict[str, type[np.floating]] = {"float32": np.float32, "float64": np.float64}


def default_dtype() -> type[np.floating]:
    """Floating dtype used for newly created tensors."""
    return _DTYPE.get()


def set_default_precision(name: str) -> None:
    """Set the process-wide default precision ("float32" or "float64")."""
    if name not in PRECISIONS:
        raise ArgumentError(f"unknown precision {name!r}; expected one of {sorted(PRECISIONS)}")
    _DTYPE.set(PRECISIONS[name])


@contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the default precision."""
    if name not in PRECISIONS:
        raise ArgumentError(f"unknown precision {name!r}; expected one of {sorted(PRECISIONS)}")
    token = _DTYPE.set(PRECISIONS[name])
    try:
        yield
    finally:
        _DTYPE.reset(token)


class Tensor:
    """
    Dense row-major tensor with optional gradient tracking.

    Zero extents are allowed (an empty edge set is a valid message
    tensor); every other invariant of the buffer is numpy's.
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.data: np.ndarray = np.ascontiguousarray(data, dtype=default_dtype())
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        """The underlying buffer (not a copy)."""
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{label})"

    # Operator sugar; the primitives live in ioncast.tensor.ops.
    def __add__(self, other: Any) -> Tensor:
        from ioncast.tensor import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> Tensor:
        from ioncast.tensor import ops

        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        from ioncast.tensor import ops

        return ops.sub(as_tensor(other), self)

    def __mul__(self, other: Any) -> Tensor:
        from ioncast.tensor import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> Tensor:
        from ioncast.tensor import ops

        return ops.scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        from ioncast.tensor import ops

        return ops.matmul(self, other)


def as_tensor(value: Any) -> Tensor:
    """Wrap arrays and scalars as constant tensors; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


class Primitive(ABC):
    """
    A differentiable operation.

    forward() maps input buffers to the output buffer. backward() maps the
    gradient of the output to one gradient per input (None where the
    input is not differentiable, e.g. index arrays are never inputs).
    Instances carry the static attributes of one application (stride,
    indices, axis) and are otherwise stateless, so a recorded node can be
    replayed on the same inputs.
    """

    name: ClassVar[str] = "primitive"

    @abstractmethod
    def forward(self, *inputs: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def backward(
        self,
        grad: np.ndarray,
        inputs: tuple[np.ndarray, ...],
        output: np.ndarray,
    ) -> tuple[np.ndarray | None, ...]:
        ...


@dataclass
class Node:
    """One recorded primitive application."""

    primitive: Primitive
    inputs: tuple[Tensor, ...]
    output: Tensor


@dataclass
class ComputeGraph:
    """Primitive applications recorded in execution order."""

    nodes: list[Node] = field(default_factory=list)

    def record(self, primitive: Primitive, inputs: tuple[Tensor, ...], output: Tensor) -> None:
        self.nodes.append(Node(primitive=primitive, inputs=inputs, output=output))

    def __len__(self) -> int:
        return len(self.nodes)

    def replay(self) -> list[np.ndarray]:
        """
        Re-execute every node on the recorded leaf inputs.

        Intermediate results are taken from the replay itself, never from
        the recorded outputs. Returns one output buffer per node.
        """
        produced: dict[int, np.ndarray] = {}
        outputs: list[np.ndarray] = []
        for node in self.nodes:
            arrays = tuple(produced.get(id(t), t.data) for t in node.inputs)
            out = node.primitive.forward(*arrays).astype(node.output.data.dtype, copy=False)
            produced[id(node.output)] = out
            outputs.append(out)
        return outputs


@contextmanager
def trace() -> Iterator[ComputeGraph]:
    """Record every differentiable application inside the block."""
    graph = ComputeGraph()
    token = _ACTIVE_GRAPH.set(graph)
    try:
        yield graph
    finally:
        _ACTIVE_GRAPH.reset(token)


def is_tracing() -> bool:
    return _ACTIVE_GRAPH.get() is not None


def apply(primitive: Primitive, *inputs: Tensor) -> Tensor:
    """Run a primitive and record it on the active graph when needed."""
    out = primitive.forward(*(t.data for t in inputs))
    requires_grad = any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=requires_grad)
    graph = _ACTIVE_GRAPH.get()
    if graph is not None and requires_grad:
        graph.record(primitive, inputs, result)
    return result


def backward(
    graph: ComputeGraph,
    loss: Tensor,
    wrt: Mapping[str, Tensor] | None = None,
) -> dict[str, np.ndarray]:
    """
    Reverse-mode accumulation over a recorded graph.

    Args:
        graph: The graph the loss was computed under.
        loss: Scalar output (any shape with exactly one element).
        wrt: Named tensors to return gradients for. Tensors the loss does
             not depend on get zero gradients. When omitted, every leaf
             tensor that requires gradients is returned, keyed by name.

    Returns:
        Mapping name -> gradient buffer with the tensor's shape.
    """
    if loss.data.size != 1:
        raise ArgumentError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph.nodes):
        grad = grads.get(id(node.output))
        if grad is None:
            continue
        input_grads = node.primitive.backward(
            grad, tuple(t.data for t in node.inputs), node.output.data
        )
        for tensor, input_grad in zip(node.inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            if key in grads:
                grads[key] = grads[key] + input_grad
            else:
                grads[key] = input_grad

    if wrt is None:
        produced = {id(node.output) for node in graph.nodes}
        leaves: dict[str, Tensor] = {}
        for node in graph.nodes:
            for tensor in node.inputs:
                if tensor.requires_grad and id(tensor) not in produced:
                    leaves.setdefault(tensor.name or f"leaf{len(leaves)}", tensor)
        if loss.requires_grad and not graph.nodes:
            leaves[loss.name or "leaf0"] = loss
        wrt = leaves

    result: dict[str, np.ndarray] = {}
    for name, tensor in wrt.items():
        grad = grads.get(id(tensor))
        if grad is None:
            result[name] = np.zeros_like(tensor.data)
        else:
            result[name] = np.asarray(grad, dtype=tensor.data.dtype).reshape(tensor.shape)
    return result
