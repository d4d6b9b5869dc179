"""
Low-precision Sun and Moon positions.

Both bodies use the short analytic series of the Astronomical Almanac
(about 0.01 deg for the Sun, a few tenths of a degree for the Moon),
evaluated in days from J2000.0 (2000-01-01T12:00Z). Geocentric apparent
declination is the sub-body latitude; right ascension minus Greenwich
mean sidereal time is the sub-body longitude. The series are trusted for
1950-2100 only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from ioncast.errors import ArgumentError, RangeError
from ioncast.mesh.geometry import wrap_longitude

Body = Literal["sun", "moon"]
BODIES: tuple[str, ...] = ("sun", "moon")

J2000_EPOCH = 946_728_000  # 2000-01-01T12:00:00Z
VALID_FROM = -631_152_000  # 1950-01-01T00:00:00Z
VALID_UNTIL = 4_133_980_800  # 2101-01-01T00:00:00Z

MOON_MEAN_DISTANCE_KM = 384_400.0
EARTH_RADIUS_KM = 6378.14


@dataclass(frozen=True)
class BodyPosition:
    """Geocentric position of a body at one instant."""

    body: str
    right_ascension: float  # degrees
    declination: float  # degrees
    distance: float  # AU (sun) or km (moon)


def _days_since_j2000(t: float) -> float:
    if not VALID_FROM <= t < VALID_UNTIL:
        raise RangeError(f"timestamp {t} outside the 1950-2100 validity window of the ephemeris series")
    return (float(t) - J2000_EPOCH) / 86400.0


def greenwich_sidereal_deg(t: float) -> float:
    """Greenwich mean sidereal time in degrees."""
    n = _days_since_j2000(t)
    return float((280.46061837 + 360.98564736629 * n) % 360.0)


def sun_position(t: float) -> BodyPosition:
    n = _days_since_j2000(t)
    mean_lon = 280.460 + 0.9856474 * n
    g = np.radians((357.528 + 0.9856003 * n) % 360.0)
    ecl_lon = np.radians(mean_lon + 1.915 * np.sin(g) + 0.020 * np.sin(2 * g))
    eps = np.radians(23.439 - 4e-7 * n)
    ra = np.degrees(np.arctan2(np.cos(eps) * np.sin(ecl_lon), np.cos(ecl_lon)))
    dec = np.degrees(np.arcsin(np.sin(eps) * np.sin(ecl_lon)))
    distance = 1.00014 - 0.01671 * np.cos(g) - 0.00014 * np.cos(2 * g)
    return BodyPosition("sun", float(ra % 360.0), float(dec), float(distance))


def _sin_deg(x: float) -> float:
    return float(np.sin(np.radians(x % 360.0)))


def _cos_deg(x: float) -> float:
    return float(np.cos(np.radians(x % 360.0)))


def moon_position(t: float) -> BodyPosition:
    T = _days_since_j2000(t) / 36525.0
    ecl_lon = (
        218.32
        + 481267.881 * T
        + 6.29 * _sin_deg(135.0 + 477198.87 * T)
        - 1.27 * _sin_deg(259.3 - 413335.36 * T)
        + 0.66 * _sin_deg(235.7 + 890534.22 * T)
        + 0.21 * _sin_deg(269.9 + 954397.74 * T)
        - 0.19 * _sin_deg(357.5 + 35999.05 * T)
        - 0.11 * _sin_deg(186.5 + 966404.03 * T)
    )
    ecl_lat = (
        5.13 * _sin_deg(93.3 + 483202.02 * T)
        + 0.28 * _sin_deg(228.2 + 960400.89 * T)
        - 0.28 * _sin_deg(318.3 + 6003.15 * T)
        - 0.17 * _sin_deg(217.6 - 407332.21 * T)
    )
    parallax = (
        0.9508
        + 0.0518 * _cos_deg(135.0 + 477198.87 * T)
        + 0.0095 * _cos_deg(259.3 - 413335.36 * T)
        + 0.0078 * _cos_deg(235.7 + 890534.22 * T)
        + 0.0028 * _cos_deg(269.9 + 954397.74 * T)
    )
    lam, beta = np.radians(ecl_lon % 360.0), np.radians(ecl_lat)
    # ecliptic -> equatorial direction cosines (fixed J2000 obliquity)
    x = np.cos(beta) * np.cos(lam)
    y = 0.9175 * np.cos(beta) * np.sin(lam) - 0.3978 * np.sin(beta)
    z = 0.3978 * np.cos(beta) * np.sin(lam) + 0.9175 * np.sin(beta)
    ra = np.degrees(np.arctan2(y, x))
    dec = np.degrees(np.arcsin(np.clip(z, -1.0, 1.0)))
    distance = EARTH_RADIUS_KM / np.sin(np.radians(parallax))
    return BodyPosition("moon", float(ra % 360.0), float(dec), float(distance))


def body_position(t: float, body: str) -> BodyPosition:
    if body == "sun":
        return sun_position(t)
    if body == "moon":
        return moon_position(t)
    raise ArgumentError(f"unknown body {body!r}; expected one of {BODIES}")


def sub_body_point(t: float, body: str) -> tuple[float, float]:
    """(latitude, longitude) in degrees of the point with the body at zenith."""
    position = body_position(t, body)
    lon = wrap_longitude(position.right_ascension - greenwich_sidereal_deg(t))
    return position.declination, float(lon)


def subsolar_point(t: float) -> tuple[float, float]:
    """
    Subsolar latitude and longitude in degrees.

    Raises:
        RangeError: t outside 1950-2100.
    """
    return sub_body_point(t, "sun")


def sublunar_point(t: float) -> tuple[float, float]:
    """Sublunar latitude and longitude in degrees."""
    return sub_body_point(t, "moon")


def body_distance(t: float, body: str) -> float:
    """Earth-body distance normalized by 1 AU (sun) or 384400 km (moon)."""
    position = body_position(t, body)
    if body == "moon":
        return position.distance / MOON_MEAN_DISTANCE_KM
    return position.distance
