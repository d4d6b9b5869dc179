"""
Model-ready dataset and training-sequence sampling.

A Dataset is an immutable GridStack whose channel table matches a
ChannelSpec. Sequences are runs of context + horizon consecutive frames
at exactly the cadence; a run that crosses a data gap or leaves the
split mask is never produced.
"""
from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ioncast.data.channels import ChannelSpec
from ioncast.data.iongrid import GridStack, read_grid_stack
from ioncast.errors import ConfigError, SamplingError
from ioncast.logging_config import get_logger
from ioncast.mesh.grid import LatLonGrid

logger = get_logger(__name__)


@dataclass(frozen=True)
class Sequence:
    """One training or evaluation window."""

    start: int  # index of the first context frame
    context: np.ndarray  # [context x C x H x W]
    targets: np.ndarray  # [horizon x C x H x W]
    forcings: np.ndarray  # [(context + horizon) x F x H x W]
    timestamps: np.ndarray  # [context + horizon]


class Dataset:
    """Frames plus the channel spec and grid they live on."""

    def __init__(self, stack: GridStack, spec: ChannelSpec) -> None:
        if stack.channels != spec.names:
            raise ConfigError(
                f"dataset channels {stack.channels} do not match the run's channel spec {spec.names}",
                key="data.channels",
            )
        self.stack = stack
        self.spec = spec
        self.grid = LatLonGrid(stack.shape[1], stack.shape[2])

    @classmethod
    def load(cls, path: Path, spec: ChannelSpec | None = None) -> Dataset:
        """Read an IONGRID dataset; without a spec, the file's channel table defines it."""
        stack = read_grid_stack(path)
        if spec is None:
            spec = ChannelSpec.from_names(stack.channels)
        elif stack.channels != spec.names:
            stack = select_channels(stack, spec.names)
        return cls(stack, spec)

    @property
    def cadence(self) -> int:
        return self.stack.cadence

    @property
    def timestamps(self) -> np.ndarray:
        return self.stack.timestamps

    @property
    def data(self) -> np.ndarray:
        return self.stack.data

    def __len__(self) -> int:
        return self.stack.n_frames

    @cached_property
    def contiguous(self) -> np.ndarray:
        """contiguous[i] is True when frame i+1 follows frame i by exactly one cadence [N-1]."""
        return np.diff(self.timestamps) == self.cadence

    def index_of(self, t: int) -> int:
        """Frame index of a timestamp (KeyError if absent)."""
        i = int(np.searchsorted(self.timestamps, t))
        if i >= len(self) or self.timestamps[i] != t:
            raise KeyError(t)
        return i

    def window(self, start: int, length: int) -> np.ndarray:
        return self.data[start : start + length]

    def with_spec(self, spec: ChannelSpec) -> Dataset:
        """Same frames restricted (and reordered) to another spec's channels."""
        return Dataset(select_channels(self.stack, spec.names), spec)


def select_channels(stack: GridStack, names: list[str]) -> GridStack:
    missing = [name for name in names if name not in stack.channels]
    if missing:
        raise ConfigError(f"dataset lacks channel(s) {missing}", key="data.channels")
    index = [stack.channels.index(name) for name in names]
    return GridStack(
        channels=list(names),
        cadence=stack.cadence,
        timestamps=stack.timestamps,
        data=stack.data[:, index],
    )


def candidate_starts(dataset: Dataset, length: int, mask: np.ndarray) -> np.ndarray:
    """Start indices of every contiguous, fully masked run of ``length`` frames."""
    n = len(dataset)
    if length > n:
        return np.zeros(0, dtype=np.int64)
    ok = np.asarray(mask, dtype=bool).astype(np.int64)
    gaps = np.concatenate([[0], (~dataset.contiguous).astype(np.int64)])
    ok_sum = np.concatenate([[0], np.cumsum(ok)])
    gap_sum = np.cumsum(gaps)
    starts = np.arange(n - length + 1)
    inside = ok_sum[starts + length] - ok_sum[starts] == length
    # breaks between frames start..start+length-1 are gaps[start+1 .. start+length-1]
    unbroken = gap_sum[starts + length - 1] - gap_sum[starts] == 0
    return starts[inside & unbroken]


def sequence_starts(
    dataset: Dataset,
    context: int,
    horizon: int,
    dilation: int,
    mask: np.ndarray,
    count: int | None = None,
) -> np.ndarray:
    """
    Start indices of the sequences a split yields.

    Args:
        context: Context frames per sequence (>= 1).
        horizon: Target frames per sequence (>= 1).
        dilation: Keep every dilation-th candidate (>= 1).
        mask: Per-frame split mask.
        count: When set, pick exactly this many starts evenly spaced over the
            candidates instead of applying the dilation.

    Raises:
        SamplingError: no valid sequence, or fewer candidates than ``count``.
    """
    if context < 1 or horizon < 1 or dilation < 1:
        raise SamplingError(f"context, horizon and dilation must be >= 1, got {context}, {horizon}, {dilation}")
    candidates = candidate_starts(dataset, context + horizon, mask)
    if count is not None:
        if count > candidates.size:
            raise SamplingError(f"requested {count} sequences but only {candidates.size} are valid")
        picks = np.unique(np.round(np.linspace(0, candidates.size - 1, count)).astype(np.int64))
        chosen = candidates[picks]
    else:
        chosen = candidates[::dilation]
    if chosen.size == 0:
        raise SamplingError(
            f"no valid sequences of {context}+{horizon} frames in {len(dataset)} frames "
            f"({int(np.count_nonzero(mask))} inside the split mask)"
        )
    return chosen


def load_sequence(dataset: Dataset, start: int, context: int, horizon: int) -> Sequence:
    frames = dataset.window(start, context + horizon)
    forcing = dataset.spec.forcing_indices
    return Sequence(
        start=start,
        context=frames[:context],
        targets=frames[context:],
        forcings=frames[:, forcing],
        timestamps=dataset.timestamps[start : start + context + horizon],
    )


def sample_sequences(
    dataset: Dataset,
    context: int,
    horizon: int,
    dilation: int,
    mask: np.ndarray,
    count: int | None = None,
) -> Iterator[Sequence]:
    """Yield (context frames, target frames, forcings) windows for a split mask."""
    starts = sequence_starts(dataset, context, horizon, dilation, mask, count)
    logger.debug("sequences_sampled", count=int(starts.size), dilation=dilation, context=context, horizon=horizon)
    for start in starts:
        yield load_sequence(dataset, int(start), context, horizon)
