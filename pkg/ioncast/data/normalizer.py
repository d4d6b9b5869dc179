"""Per-channel z-scoring fitted on training timestamps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ioncast.data.dataset import Dataset
from ioncast.errors import DimensionError, SamplingError
from ioncast.logging_config import get_logger

logger = get_logger(__name__)

STD_FLOOR = 1e-6


@dataclass
class Normalizer:
    names: list[str]
    mean: np.ndarray  # float64 [C]
    std: np.ndarray  # float64 [C], >= STD_FLOOR

    def _broadcast(self, x: np.ndarray, indices: list[int] | None) -> tuple[np.ndarray, np.ndarray]:
        mean = self.mean if indices is None else self.mean[indices]
        std = self.std if indices is None else self.std[indices]
        if x.ndim < 3 or x.shape[-3] != mean.shape[0]:
            raise DimensionError(f"expected [..., {mean.shape[0]}, H, W], got shape {x.shape}")
        return mean[:, None, None], std[:, None, None]

    def apply(self, x: np.ndarray, indices: list[int] | None = None) -> np.ndarray:
        """z-score frames [..., C, H, W]; ``indices`` selects a channel subset."""
        mean, std = self._broadcast(x, indices)
        return ((x - mean) / std).astype(x.dtype, copy=False)

    def invert(self, z: np.ndarray, indices: list[int] | None = None) -> np.ndarray:
        mean, std = self._broadcast(z, indices)
        return (z * std + mean).astype(z.dtype, copy=False)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> Normalizer:
        return cls(
            names=list(payload["names"]),
            mean=np.asarray(payload["mean"], dtype=np.float64),
            std=np.asarray(payload["std"], dtype=np.float64),
        )


def fit_normalizer(dataset: Dataset, mask: np.ndarray) -> Normalizer:
    """
    Channel mean and std over the frames selected by ``mask``.

    Frames outside the mask never influence the statistics. A channel whose
    std falls below 1e-6 is floored and reported.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise SamplingError("cannot fit normalizer: the training mask selects no frames")
    frames = dataset.data[mask].astype(np.float64)
    mean = frames.mean(axis=(0, 2, 3))
    std = frames.std(axis=(0, 2, 3))
    for name, value in zip(dataset.spec.names, std):
        if value < STD_FLOOR:
            logger.warning("constant_channel_std_floored", channel=name, std=float(value), floor=STD_FLOOR)
    std = np.maximum(std, STD_FLOOR)
    logger.debug("normalizer_fitted", frames=int(mask.sum()), channels=len(mean))
    return Normalizer(names=list(dataset.spec.names), mean=mean, std=std)
