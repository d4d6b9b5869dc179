"""
Magnetic coordinate maps.

The analytic model is a tilted centred dipole: geographic unit vectors are
rotated into a frame whose z axis is the dipole pole. Magnetic longitude
is measured so that the geographic north pole lies at 180 deg. Users with
true quasi-dipole grids can supply them as an IONGRID file instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from ioncast.config import COORDINATE_CHANNELS, DataConfig
from ioncast.data.iongrid import read_grid_stack
from ioncast.errors import FormatError
from ioncast.logging_config import get_logger
from ioncast.mesh.geometry import lat_lon_to_xyz
from ioncast.mesh.grid import LatLonGrid
from ioncast.metrics import record_format_error

logger = get_logger(__name__)

DEFAULT_POLE = (80.4, -72.6)  # 2015 epoch


@dataclass(frozen=True)
class MagCoordMaps:
    """Static magnetic coordinate maps [H x W]."""

    maglat: np.ndarray
    maglon_sin: np.ndarray
    maglon_cos: np.ndarray
    provenance: Literal["analytic-dipole", "external-file"]

    def channel(self, name: str) -> np.ndarray:
        return {"maglat": self.maglat, "maglon_sin": self.maglon_sin, "maglon_cos": self.maglon_cos}[name]

    def stack(self, names: list[str]) -> np.ndarray:
        if not names:
            return np.zeros((0,) + self.maglat.shape)
        return np.stack([self.channel(name) for name in names])


def dipole_frame(pole_lat: float, pole_lon: float) -> np.ndarray:
    """Rows are the dipole frame axes (x, y, z) in geographic coordinates."""
    z_axis = lat_lon_to_xyz(np.array(pole_lat), np.array(pole_lon))
    north = np.array([0.0, 0.0, 1.0])
    toward_pole = north - np.dot(north, z_axis) * z_axis
    norm = np.linalg.norm(toward_pole)
    x_axis = -toward_pole / norm if norm > 1e-12 else np.array([1.0, 0.0, 0.0])
    y_axis = np.cross(z_axis, x_axis)
    return np.stack([x_axis, y_axis, z_axis])


def dipole_coordinates(
    lat_deg: np.ndarray, lon_deg: np.ndarray, pole_lat: float, pole_lon: float
) -> tuple[np.ndarray, np.ndarray]:
    """Magnetic (latitude, longitude) in degrees for geographic points."""
    frame = dipole_frame(pole_lat, pole_lon)
    local = lat_lon_to_xyz(lat_deg, lon_deg) @ frame.T
    maglat = np.degrees(np.arcsin(np.clip(local[..., 2], -1.0, 1.0)))
    maglon = np.degrees(np.arctan2(local[..., 1], local[..., 0]))
    return maglat, maglon


def mag_coord_maps(grid: LatLonGrid, config: DataConfig) -> MagCoordMaps:
    """
    Build or load the magnetic coordinate maps for a run.

    Raises:
        FormatError: the external file does not hold exactly the channels
            maglat, maglon_sin, maglon_cos on this grid.
    """
    if config.mag_coords == "file":
        return load_mag_file(Path(str(config.mag_file)), grid)
    lat = grid.node_lat.reshape(grid.shape)
    lon = grid.node_lon.reshape(grid.shape)
    maglat, maglon = dipole_coordinates(lat, lon, config.mag_pole_lat, config.mag_pole_lon)
    rad = np.radians(maglon)
    return MagCoordMaps(maglat=maglat, maglon_sin=np.sin(rad), maglon_cos=np.cos(rad), provenance="analytic-dipole")


def load_mag_file(path: Path, grid: LatLonGrid) -> MagCoordMaps:
    stack = read_grid_stack(path)
    if sorted(stack.channels) != sorted(COORDINATE_CHANNELS):
        record_format_error("magnetic_coordinates")
        raise FormatError(f"{path}: expected channels {COORDINATE_CHANNELS}, found {stack.channels}")
    if stack.shape[1:] != grid.shape or stack.n_frames < 1:
        record_format_error("magnetic_coordinates")
        raise FormatError(
            f"{path}: expected at least one {grid.shape[0]}x{grid.shape[1]} frame, "
            f"found {stack.n_frames} frame(s) of {stack.shape[1]}x{stack.shape[2]}"
        )
    maps = {name: stack.data[0, i].astype(np.float64) for i, name in enumerate(stack.channels)}
    if np.any(np.abs(maps["maglat"]) > 90.0):
        record_format_error("magnetic_coordinates")
        raise FormatError(f"{path}: maglat outside [-90, 90]")
    logger.info("magnetic_coordinates_loaded", path=str(path))
    return MagCoordMaps(
        maglat=maps["maglat"],
        maglon_sin=maps["maglon_sin"],
        maglon_cos=maps["maglon_cos"],
        provenance="external-file",
    )
