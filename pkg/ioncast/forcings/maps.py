"""
Forcing channels on the grid.

Every channel is a pure function of (timestamp, grid): zenith-angle
cosines, sub-body point encodings broadcast over the map, normalized
body distances and the local-solar-time phase. ForcingProvider memoizes
frames per timestamp for rollouts in a bounded LRU; memoized and direct
values are the same arrays.
"""
from __future__ import annotations

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ioncast.errors import ConfigError
from ioncast.forcings.ephemeris import body_distance, sub_body_point
from ioncast.mesh.grid import LatLonGrid

# frames kept by a ForcingProvider; several 48-step rollout windows
DEFAULT_CACHE_SIZE = 256


@dataclass
class ForcingFrame:
    """Named forcing maps [H x W] for one timestamp, in channel order."""

    timestamp: int
    names: list[str]
    shape: tuple[int, int]
    maps: dict[str, np.ndarray] = field(default_factory=dict)

    def stack(self) -> np.ndarray:
        """[C x H x W] in channel order (C may be 0)."""
        if not self.names:
            return np.zeros((0,) + self.shape)
        return np.stack([self.maps[name] for name in self.names])


def zenith_cos_map(t: float, grid: LatLonGrid, body: str) -> np.ndarray:
    """
    cos of the zenith angle of ``body`` at every grid node [H x W].

    cos(chi) = sin(lat) sin(dec) + cos(lat) cos(dec) cos(lon - sub_lon)
    """
    dec, sub_lon = sub_body_point(t, body)
    return zenith_cos_from_point(grid, dec, sub_lon)


def zenith_cos_from_point(grid: LatLonGrid, dec_deg: float, sub_lon_deg: float) -> np.ndarray:
    lat = np.radians(grid.latitudes)[:, None]
    hour_angle = np.radians(grid.longitudes[None, :] - sub_lon_deg)
    dec = np.radians(dec_deg)
    value = np.sin(lat) * np.sin(dec) + np.cos(lat) * np.cos(dec) * np.cos(hour_angle)
    return np.clip(value, -1.0, 1.0)


def local_solar_time_hours(t: float, grid: LatLonGrid) -> np.ndarray:
    """Apparent local solar time in hours [H x W] (12 at the subsolar meridian)."""
    _, sub_lon = sub_body_point(t, "sun")
    hours = (grid.longitudes - sub_lon) / 15.0 + 12.0
    return np.broadcast_to(hours % 24.0, grid.shape).copy()


def _constant(grid: LatLonGrid, value: float) -> np.ndarray:
    return np.full(grid.shape, value, dtype=np.float64)


def _point_channel(body: str, coord: int, fn: Callable[[np.ndarray], np.ndarray]) -> Callable:
    def compute(t: float, grid: LatLonGrid) -> np.ndarray:
        point = sub_body_point(t, body)
        return _constant(grid, float(fn(np.radians(point[coord]))))

    return compute


def _local_time(fn: Callable[[np.ndarray], np.ndarray]) -> Callable:
    def compute(t: float, grid: LatLonGrid) -> np.ndarray:
        return fn(2.0 * np.pi * local_solar_time_hours(t, grid) / 24.0)

    return compute


CHANNEL_BUILDERS: dict[str, Callable[[float, LatLonGrid], np.ndarray]] = {
    "solar_zenith_cos": lambda t, grid: zenith_cos_map(t, grid, "sun"),
    "lunar_zenith_cos": lambda t, grid: zenith_cos_map(t, grid, "moon"),
    "subsolar_lat_sin": _point_channel("sun", 0, np.sin),
    "subsolar_lat_cos": _point_channel("sun", 0, np.cos),
    "subsolar_lon_sin": _point_channel("sun", 1, np.sin),
    "subsolar_lon_cos": _point_channel("sun", 1, np.cos),
    "sublunar_lat_sin": _point_channel("moon", 0, np.sin),
    "sublunar_lat_cos": _point_channel("moon", 0, np.cos),
    "sublunar_lon_sin": _point_channel("moon", 1, np.sin),
    "sublunar_lon_cos": _point_channel("moon", 1, np.cos),
    "sun_distance": lambda t, grid: _constant(grid, body_distance(t, "sun")),
    "moon_distance": lambda t, grid: _constant(grid, body_distance(t, "moon")),
    "local_solar_time_sin": _local_time(np.sin),
    "local_solar_time_cos": _local_time(np.cos),
}


def forcing_frame(t: int, grid: LatLonGrid, names: Sequence[str]) -> ForcingFrame:
    """
    Assemble the enabled forcing channels for one timestamp.

    Raises:
        ConfigError: a name is not a known forcing channel.
    """
    unknown = [name for name in names if name not in CHANNEL_BUILDERS]
    if unknown:
        raise ConfigError(f"unknown forcing channel(s) {unknown}", key="data.channels.forcings")
    frame = ForcingFrame(timestamp=int(t), names=list(names), shape=grid.shape)
    for name in names:
        frame.maps[name] = CHANNEL_BUILDERS[name](t, grid)
    return frame


class ForcingProvider:
    """
    Memoized forcing stacks [C x H x W] keyed by timestamp.

    At most ``cache_size`` frames are kept, least recently used evicted;
    the default covers the overlapping windows of consecutive rollouts.
    Bulk passes over a whole dataset should call ``forcing_frame`` directly.
    """

    def __init__(self, grid: LatLonGrid, names: Sequence[str], cache_size: int = DEFAULT_CACHE_SIZE) -> None:
        self.grid = grid
        self.names = list(names)
        unknown = [name for name in self.names if name not in CHANNEL_BUILDERS]
        if unknown:
            raise ConfigError(f"unknown forcing channel(s) {unknown}", key="data.channels.forcings")
        self._frame = lru_cache(maxsize=cache_size)(self._compute)

    def _compute(self, t: int) -> np.ndarray:
        return forcing_frame(t, self.grid, self.names).stack()

    def __call__(self, t: int) -> np.ndarray:
        return self._frame(int(t))

    def cache_info(self) -> tuple[int, int, int | None, int]:
        """(hits, misses, maxsize, currsize) of the frame cache."""
        return self._frame.cache_info()
