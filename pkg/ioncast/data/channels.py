"""
Channel specification.

A run's frames are stacks of named maps in a fixed order: the target
(TEC) first, then drivers (scalars broadcast over the map), coordinate
maps and forcing maps. Target and driver channels are predicted by the
models; coordinate channels are static and forcing channels are computed
analytically, so neither is ever predicted or scored.
"""
from __future__ import annotations

import hashlib
import json
from collections.abc import Sequence
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ioncast.config import (
    COORDINATE_CHANNELS,
    DRIVER_CHANNELS,
    FORCING_CHANNELS,
    TARGET_CHANNEL,
    ChannelsConfig,
)
from ioncast.errors import ConfigError

ChannelKind = Literal["target", "driver", "coordinate", "forcing"]
ChannelSource = Literal["map-file", "driver-file", "computed"]

KIND_ORDER: dict[str, int] = {"target": 0, "driver": 1, "coordinate": 2, "forcing": 3}


def kind_of(name: str) -> ChannelKind:
    """Channel kind implied by a channel name."""
    if name == TARGET_CHANNEL:
        return "target"
    if name in DRIVER_CHANNELS:
        return "driver"
    if name in COORDINATE_CHANNELS:
        return "coordinate"
    if name in FORCING_CHANNELS:
        return "forcing"
    raise ConfigError(f"unknown channel {name!r}")


class ChannelDescriptor(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    kind: ChannelKind
    source: ChannelSource
    loss_weight: float = Field(default=0.0, ge=0)


class ChannelSpec(BaseModel):
    """Ordered channel descriptors of a run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    channels: list[ChannelDescriptor]

    @model_validator(mode="after")
    def _check(self) -> ChannelSpec:
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate channel names in {names}")
        targets = [c for c in self.channels if c.kind == "target"]
        if len(targets) != 1:
            raise ValueError(f"exactly one target channel required, found {len(targets)}")
        for channel in self.channels:
            if channel.kind in ("forcing", "coordinate") and channel.loss_weight != 0:
                raise ValueError(f"{channel.kind} channel {channel.name!r} must have loss_weight 0")
        return self

    @classmethod
    def from_names(
        cls,
        names: Sequence[str],
        target_weight: float = 1.0,
        driver_weight: float = 1.0,
    ) -> ChannelSpec:
        """Build a spec from channel names, keeping their order."""
        sources: dict[str, ChannelSource] = {
            "target": "map-file",
            "driver": "driver-file",
            "coordinate": "computed",
            "forcing": "computed",
        }
        descriptors = []
        for name in names:
            kind = kind_of(name)
            weight = target_weight if kind == "target" else driver_weight if kind == "driver" else 0.0
            descriptors.append(ChannelDescriptor(name=name, kind=kind, source=sources[kind], loss_weight=weight))
        return cls(channels=descriptors)

    @classmethod
    def from_config(
        cls,
        config: ChannelsConfig,
        target_weight: float = 1.0,
        driver_weight: float = 1.0,
    ) -> ChannelSpec:
        names = [TARGET_CHANNEL, *config.drivers, *config.coordinates, *config.forcings]
        return cls.from_names(names, target_weight=target_weight, driver_weight=driver_weight)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def names_of(self, *kinds: str) -> list[str]:
        return [c.name for c in self.channels if c.kind in kinds]

    def indices_of(self, *kinds: str) -> list[int]:
        return [i for i, c in enumerate(self.channels) if c.kind in kinds]

    @property
    def predicted_names(self) -> list[str]:
        """Channels the models emit (target and drivers)."""
        return self.names_of("target", "driver")

    @property
    def predicted_indices(self) -> list[int]:
        return self.indices_of("target", "driver")

    @property
    def forcing_names(self) -> list[str]:
        return self.names_of("forcing")

    @property
    def forcing_indices(self) -> list[int]:
        return self.indices_of("forcing")

    @property
    def coordinate_names(self) -> list[str]:
        return self.names_of("coordinate")

    @property
    def coordinate_indices(self) -> list[int]:
        return self.indices_of("coordinate")

    @property
    def target_index(self) -> int:
        return self.indices_of("target")[0]

    def loss_weights(self) -> list[float]:
        """Weights of the predicted channels, in predicted order."""
        return [c.loss_weight for c in self.channels if c.kind in ("target", "driver")]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def subset(self, names: Sequence[str]) -> ChannelSpec:
        """Keep only ``names`` (the target is always kept), preserving order."""
        wanted = set(names) | {TARGET_CHANNEL}
        return ChannelSpec(channels=[c for c in self.channels if c.name in wanted])

    def fingerprint(self) -> str:
        """Stable digest of names, kinds and weights."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def canonical_order(names: Sequence[str]) -> list[str]:
    """Sort names by kind (target, driver, coordinate, forcing), stable within a kind."""
    return sorted(names, key=lambda name: KIND_ORDER[kind_of(name)])
