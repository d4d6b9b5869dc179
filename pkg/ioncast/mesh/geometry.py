"""Unit-sphere coordinate helpers shared by the grid, mesh and forcing code."""
import numpy as np


def lat_lon_to_xyz(lat_deg: np.ndarray, lon_deg: np.ndarray) -> np.ndarray:
    """Geographic degrees -> unit vectors [N x 3] (x at 0E, z at the north pole)."""
    lat = np.radians(np.asarray(lat_deg, dtype=np.float64))
    lon = np.radians(np.asarray(lon_deg, dtype=np.float64))
    cos_lat = np.cos(lat)
    return np.stack([cos_lat * np.cos(lon), cos_lat * np.sin(lon), np.sin(lat)], axis=-1)


def xyz_to_lat_lon(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors -> (latitude, longitude) in degrees, longitude in [-180, 180)."""
    xyz = np.asarray(xyz, dtype=np.float64)
    lat = np.degrees(np.arctan2(xyz[..., 2], np.hypot(xyz[..., 0], xyz[..., 1])))
    lon = np.degrees(np.arctan2(xyz[..., 1], xyz[..., 0]))
    return lat, wrap_longitude(lon)


def wrap_longitude(lon_deg: np.ndarray | float) -> np.ndarray:
    """Map longitudes into [-180, 180)."""
    return (np.asarray(lon_deg, dtype=np.float64) + 180.0) % 360.0 - 180.0


def arc_length(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle angle between unit vectors, stable for tiny and antipodal pairs."""
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


def chord_for_arc(arc: float) -> float:
    """Euclidean chord subtending a great-circle angle (clamped to the diameter)."""
    return float(2.0 * np.sin(min(arc, np.pi) / 2.0))


def rotation_about_z(angle_deg: float) -> np.ndarray:
    """3x3 rotation matrix about the polar axis (eastward positive)."""
    angle = np.radians(angle_deg)
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def local_enu_frame(positions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    East, north, up unit vectors at each position.

    East is z x p normalized; exactly at a pole, where it is undefined,
    the frame of longitude 0 is used.
    """
    up = np.asarray(positions, dtype=np.float64)
    east = np.stack([-up[..., 1], up[..., 0], np.zeros(up.shape[:-1])], axis=-1)
    norm = np.linalg.norm(east, axis=-1, keepdims=True)
    polar = norm[..., 0] < 1e-12
    east = np.where(polar[..., None], np.array([0.0, 1.0, 0.0]), east / np.where(norm == 0, 1.0, norm))
    north = np.cross(up, east)
    return east, north, up
