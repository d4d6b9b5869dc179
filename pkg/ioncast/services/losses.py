"""Channel-weighted mean squared error in normalized space."""
from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from ioncast.data.channels import ChannelSpec
from ioncast.errors import ConfigError, DimensionError
from ioncast.tensor import Tensor, as_tensor, ops


def loss_weights(spec: ChannelSpec) -> np.ndarray:
    """
    Weights of the predicted channels, in output order.

    Raises:
        ConfigError: every weight is zero.
    """
    weights = np.asarray(spec.loss_weights(), dtype=np.float64)
    if weights.size == 0 or not np.any(weights > 0):
        raise ConfigError("loss weights are all zero; at least one predicted channel needs a positive weight",
                          key="train.target_weight")
    return weights


def weighted_mse(pred: Tensor, truth: Tensor | np.ndarray, weights: Sequence[float] | np.ndarray) -> Tensor:
    """
    sum_c w_c * mean((pred_c - truth_c)^2) / sum_c w_c over maps [P x H x W].

    Raises:
        DimensionError: shapes differ or the weight count is not P.
        ConfigError: all weights are zero.
    """
    truth = as_tensor(truth)
    w = np.asarray(weights, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"weighted_mse: prediction {pred.shape} vs truth {truth.shape}")
    if pred.ndim != 3 or w.shape != (pred.shape[0],):
        raise DimensionError(f"weighted_mse: expected [P x H x W] with P={w.shape[0]} weights, got {pred.shape}")
    total = float(w.sum())
    if total <= 0:
        raise ConfigError("loss weights are all zero", key="train.target_weight")
    per_channel = ops.mean(ops.square(ops.sub(pred, truth)), axis=(1, 2))
    return ops.sum(ops.mul(per_channel, Tensor(w / total)))
