"""
Shared forecaster contract: residual steps and autoregressive rollouts.

A model maps a normalized context window plus the normalized forcings of
the prediction time to one map per predicted channel (target and
drivers). With a residual target the map is the normalized increment:

    next = last + delta * std

otherwise it is the normalized next state itself. Forcing channels of
every produced frame are replaced by the provider's values and
coordinate channels are copied from the last frame, so neither is ever
predicted.
"""
from __future__ import annotations

import time
from abc import ABC, abstractmethod
from collections.abc import Callable
from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from ioncast.config import ModelConfig
from ioncast.data.channels import ChannelSpec
from ioncast.data.normalizer import Normalizer
from ioncast.errors import DimensionError, RangeError, RolloutError
from ioncast.logging_config import get_logger, log_rollout
from ioncast.mesh.grid import LatLonGrid
from ioncast.metrics import record_rollout
from ioncast.models.layers import Bound, Params, bind, parameter_count
from ioncast.tensor import Tensor
from ioncast.timeutil import format_time

logger = get_logger(__name__)

ForcingSource = Callable[[int], np.ndarray]


@dataclass
class RolloutPlan:
    """Context window [t-context+1 .. t] and the forcing source for t+1 .. t+horizon."""

    window: np.ndarray  # [context x C x H x W], physical units
    last_timestamp: int
    cadence: int
    horizon: int
    forcings: ForcingSource  # timestamp -> [F x H x W]

    def timestamps(self) -> np.ndarray:
        return self.last_timestamp + self.cadence * np.arange(1, self.horizon + 1, dtype=np.int64)


class Forecaster(ABC):
    """
    Base class of the GNN and LSTM forecasters.

    Subclasses create their parameters in ``init_params`` and implement
    ``predict`` on normalized inputs; everything about residuals, forcing
    substitution and rollouts lives here.
    """

    architecture: ClassVar[str]

    def __init__(
        self,
        spec: ChannelSpec,
        grid: LatLonGrid,
        normalizer: Normalizer,
        config: ModelConfig,
        params: Params | None = None,
        seed: int = 0,
    ) -> None:
        if normalizer.names != spec.names:
            raise DimensionError(f"normalizer channels {normalizer.names} do not match spec {spec.names}")
        self.spec = spec
        self.grid = grid
        self.normalizer = normalizer
        self.config = config
        self.residual_target = config.residual_target
        self.context_len = config.context_len
        self.training = False
        self.rng = np.random.default_rng(seed)
        self.predicted = spec.predicted_indices
        self.forcing = spec.forcing_indices
        self.coordinate = spec.coordinate_indices
        fresh = self.init_params(np.random.default_rng(seed))
        if params is None:
            self.params = fresh
        else:
            self._check_params(params, fresh)
            self.params = params

    @staticmethod
    def _check_params(params: Params, expected: Params) -> None:
        missing = sorted(set(expected) - set(params))
        unknown = sorted(set(params) - set(expected))
        if missing or unknown:
            raise DimensionError(f"parameter set mismatch: missing {missing[:5]}, unexpected {unknown[:5]}")
        for name, value in expected.items():
            if params[name].shape != value.shape:
                raise DimensionError(f"parameter {name!r}: expected shape {value.shape}, got {params[name].shape}")

    # ── Subclass contract ──────────────────────────────────────────

    @abstractmethod
    def init_params(self, rng: np.random.Generator) -> Params:
        ...

    @abstractmethod
    def predict(self, window_z: np.ndarray, forcing_next_z: np.ndarray, p: Bound) -> Tensor:
        """Normalized output [P x H x W] for one window."""

    # ── Modes ──────────────────────────────────────────────────────

    def train(self) -> Forecaster:
        self.training = True
        return self

    def eval(self) -> Forecaster:
        self.training = False
        return self

    @property
    def n_predicted(self) -> int:
        return len(self.predicted)

    def parameter_count(self) -> int:
        return parameter_count(self.params)

    # ── Normalized forward ─────────────────────────────────────────

    def normalize_inputs(self, window: np.ndarray, forcing_next: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c, h, w = len(self.spec.names), *self.grid.shape
        if window.ndim != 4 or window.shape[0] != self.context_len or window.shape[1:] != (c, h, w):
            raise DimensionError(
                f"window must be [{self.context_len} x {c} x {h} x {w}], got {window.shape}"
            )
        if forcing_next.shape != (len(self.forcing), h, w):
            raise DimensionError(f"forcings must be [{len(self.forcing)} x {h} x {w}], got {forcing_next.shape}")
        window_z = self.normalizer.apply(window)
        forcing_z = self.normalizer.apply(forcing_next, self.forcing) if self.forcing else forcing_next
        return window_z, forcing_z

    def forward(self, window: np.ndarray, forcing_next: np.ndarray, p: Bound | None = None) -> Tensor:
        """Normalized model output for one window; binds frozen parameters when ``p`` is omitted."""
        window_z, forcing_z = self.normalize_inputs(window, forcing_next)
        return self.predict(window_z, forcing_z, p if p is not None else bind(self.params))

    def target_of(self, window: np.ndarray, next_frame: np.ndarray) -> np.ndarray:
        """Training target in output space for a true next frame."""
        next_z = self.normalizer.apply(next_frame[self.predicted], self.predicted)
        if not self.residual_target:
            return next_z
        last_z = self.normalizer.apply(window[-1, self.predicted], self.predicted)
        return next_z - last_z

    # ── Physical-space steps ───────────────────────────────────────

    def compose_frame(
        self,
        last: np.ndarray,
        output: np.ndarray,
        forcing_next: np.ndarray,
        step_index: int = 1,
    ) -> np.ndarray:
        """Turn a normalized output into the full next frame."""
        if self.residual_target:
            std = self.normalizer.std[self.predicted][:, None, None]
            predicted = last[self.predicted] + output * std
        else:
            predicted = self.normalizer.invert(output, self.predicted)
        finite = np.isfinite(predicted).reshape(len(self.predicted), -1).all(axis=1)
        if not finite.all():
            channel = self.spec.names[self.predicted[int(np.argmin(finite))]]
            raise RolloutError(f"non-finite prediction for channel {channel!r} at step {step_index}")
        frame = np.empty_like(last)
        frame[self.predicted] = predicted
        frame[self.forcing] = forcing_next
        frame[self.coordinate] = last[self.coordinate]
        return frame

    def step(self, window: np.ndarray, forcing_next: np.ndarray, step_index: int = 1) -> np.ndarray:
        """Next frame [C x H x W] after ``window``."""
        output = self.forward(window, forcing_next).data
        return self.compose_frame(window[-1], output, forcing_next, step_index)

    def rollout(self, plan: RolloutPlan) -> np.ndarray:
        """
        ``plan.horizon`` frames [k x C x H x W].

        Each prediction is appended to the window and the oldest frame
        dropped; only forcings come from outside the model.

        Raises:
            RolloutError: the forcing source has no value for a step, or a
                prediction is non-finite (channel and step in the message).
        """
        window = np.array(plan.window, copy=True)
        frames = []
        started = time.perf_counter()
        for step_index, t in enumerate(plan.timestamps(), start=1):
            try:
                forcing = np.asarray(plan.forcings(int(t)))
            except (KeyError, IndexError, RangeError) as exc:
                raise RolloutError(f"no forcing values for step {step_index} at {format_time(int(t))}: {exc}") from exc
            frame = self.step(window, forcing.astype(window.dtype, copy=False), step_index)
            frames.append(frame)
            window = np.concatenate([window[1:], frame[None]])
        duration = time.perf_counter() - started
        record_rollout(self.architecture, plan.horizon, duration)
        log_rollout(logger, self.architecture, plan.horizon, duration * 1000.0)
        return np.stack(frames) if frames else np.zeros((0,) + window.shape[1:], dtype=window.dtype)


def persistence_forecast(plan: RolloutPlan, spec: ChannelSpec) -> np.ndarray:
    """Repeat the last context frame, substituting the analytic forcings at every step."""
    last = plan.window[-1]
    forcing = spec.forcing_indices
    frames = np.repeat(last[None], plan.horizon, axis=0)
    for i, t in enumerate(plan.timestamps()):
        frames[i, forcing] = np.asarray(plan.forcings(int(t))).astype(frames.dtype, copy=False)
    return frames
