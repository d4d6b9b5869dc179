"""Dense tensors, differentiable primitives, reverse-mode gradients and Adam."""
from ioncast.tensor import ops
from ioncast.tensor.conv import conv2d_circular, conv2d_transposed, upsample_bilinear
from ioncast.tensor.optim import AdamState, adam_step
from ioncast.tensor.tensor import (
    ComputeGraph,
    Primitive,
    Tensor,
    apply,
    as_tensor,
    backward,
    default_dtype,
    precision,
    set_default_precision,
    trace,
)

__all__ = [
    "AdamState",
    "ComputeGraph",
    "Primitive",
    "Tensor",
    "adam_step",
    "apply",
    "as_tensor",
    "backward",
    "conv2d_circular",
    "conv2d_transposed",
    "default_dtype",
    "ops",
    "precision",
    "set_default_precision",
    "trace",
    "upsample_bilinear",
]
