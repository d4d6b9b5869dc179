"""
Adam optimizer over a flat registry of named parameter buffers.
"""
from __future__ import annotations

from collections.abc import Mapping, MutableMapping
from dataclasses import dataclass, field

import numpy as np

from ioncast.errors import DimensionError, TrainingError


@dataclass
class AdamState:
    """First/second moments per parameter plus the shared step counter."""

    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def to_arrays(self) -> dict[str, np.ndarray]:
        """Flatten moments for storage in a checkpoint."""
        out: dict[str, np.ndarray] = {}
        for name, value in self.m.items():
            out[f"adam.m.{name}"] = value
        for name, value in self.v.items():
            out[f"adam.v.{name}"] = value
        return out

    @classmethod
    def from_arrays(
        cls,
        arrays: Mapping[str, np.ndarray],
        lr: float,
        beta1: float,
        beta2: float,
        eps: float,
        t: int,
    ) -> AdamState:
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, t=t)
        for key, value in arrays.items():
            if key.startswith("adam.m."):
                state.m[key[len("adam.m.") :]] = np.array(value)
            elif key.startswith("adam.v."):
                state.v[key[len("adam.v.") :]] = np.array(value)
        return state


def adam_step(
    params: MutableMapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> None:
    """
    Apply one bias-corrected Adam update in place.

    Parameters without an entry in ``grads`` are treated as having a zero
    gradient. Every gradient is checked before anything is modified, so a
    rejected step leaves parameters and moments untouched.

    Raises:
        TrainingError: a gradient holds NaN or infinity.
        DimensionError: a gradient shape differs from its parameter.
    """
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != param.shape:
            raise DimensionError(f"gradient for {name!r} has shape {grad.shape}, parameter has {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")

    state.t += 1
    bias1 = 1.0 - state.beta1**state.t
    bias2 = 1.0 - state.beta2**state.t
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None:
            grad = np.zeros_like(param)
        m = state.m.setdefault(name, np.zeros_like(param))
        v = state.v.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        m_hat = m / bias1
        v_hat = v / bias2
        param -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype, copy=False)
