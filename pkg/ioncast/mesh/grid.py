"""
Latitude-longitude grid.

Nodes sit at cell centres: rows run north to south (first row centred
half a cell below 90N), columns west to east from -180. Node index is
``row * n_lon + col``, matching the row-major layout of every map.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ioncast.errors import ArgumentError
from ioncast.mesh.geometry import lat_lon_to_xyz


@dataclass(frozen=True)
class LatLonGrid:
    """Regular cell-centred grid on the unit sphere."""

    n_lat: int
    n_lon: int

    def __post_init__(self) -> None:
        if self.n_lat < 1 or self.n_lon < 1:
            raise ArgumentError(f"grid extents must be positive, got {self.n_lat}x{self.n_lon}")

    @property
    def n_nodes(self) -> int:
        return self.n_lat * self.n_lon

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_lat, self.n_lon

    @property
    def resolution(self) -> tuple[float, float]:
        """Degrees per cell (latitude, longitude)."""
        return 180.0 / self.n_lat, 360.0 / self.n_lon

    @cached_property
    def latitudes(self) -> np.ndarray:
        """Row-centre latitudes in degrees, north to south [n_lat]."""
        step = 180.0 / self.n_lat
        return 90.0 - (np.arange(self.n_lat) + 0.5) * step

    @cached_property
    def longitudes(self) -> np.ndarray:
        """Column-centre longitudes in degrees, west to east [n_lon]."""
        step = 360.0 / self.n_lon
        return -180.0 + (np.arange(self.n_lon) + 0.5) * step

    @cached_property
    def node_lat(self) -> np.ndarray:
        """Latitude of every node [n_nodes]."""
        return np.repeat(self.latitudes, self.n_lon)

    @cached_property
    def node_lon(self) -> np.ndarray:
        """Longitude of every node [n_nodes]."""
        return np.tile(self.longitudes, self.n_lat)

    @cached_property
    def positions(self) -> np.ndarray:
        """Unit 3-vectors of every node [n_nodes x 3]."""
        return lat_lon_to_xyz(self.node_lat, self.node_lon)

    def node_index(self, row: int, col: int) -> int:
        return row * self.n_lon + col

    def nearest_node(self, lat_deg: float, lon_deg: float) -> int:
        """Index of the cell containing a geographic point."""
        d_lat, d_lon = self.resolution
        row = int(np.clip((90.0 - lat_deg) // d_lat, 0, self.n_lat - 1))
        col = int(((lon_deg + 180.0) % 360.0) // d_lon) % self.n_lon
        return self.node_index(row, col)

    def static_features(self) -> np.ndarray:
        """Geographic encodings per node [n_nodes x 4]: sin/cos latitude, sin/cos longitude."""
        lat = np.radians(self.node_lat)
        lon = np.radians(self.node_lon)
        return np.stack([np.sin(lat), np.cos(lat), np.sin(lon), np.cos(lon)], axis=-1)
