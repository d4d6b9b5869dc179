"""Analytic forcing channels: ephemerides, zenith maps and magnetic coordinates."""
from ioncast.forcings.ephemeris import body_distance, sublunar_point, subsolar_point
from ioncast.forcings.magnetic import MagCoordMaps, mag_coord_maps
from ioncast.forcings.maps import ForcingFrame, ForcingProvider, forcing_frame, zenith_cos_map

__all__ = [
    "ForcingFrame",
    "ForcingProvider",
    "MagCoordMaps",
    "body_distance",
    "forcing_frame",
    "mag_coord_maps",
    "sublunar_point",
    "subsolar_point",
    "zenith_cos_map",
]
