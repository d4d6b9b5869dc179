"""Tests for ephemerides, forcing maps and magnetic coordinates."""
import numpy as np
import pytest

from ioncast.config import DataConfig
from ioncast.data.iongrid import GridStack, write_grid_stack
from ioncast.errors import ArgumentError, ConfigError, FormatError, RangeError
from ioncast.forcings import (
    ForcingProvider,
    body_distance,
    forcing_frame,
    mag_coord_maps,
    sublunar_point,
    subsolar_point,
    zenith_cos_map,
)
from ioncast.forcings.magnetic import dipole_coordinates
from ioncast.forcings.maps import local_solar_time_hours, zenith_cos_from_point
from ioncast.mesh import LatLonGrid
from ioncast.mesh.geometry import wrap_longitude
from ioncast.timeutil import parse_time


class TestEphemeris:
    """Test cases for the Sun and Moon series."""

    def test_subsolar_latitude_at_equinox(self):
        """Test that the Sun is over the equator at the March 2015 equinox."""
        lat, _ = subsolar_point(parse_time("2015-03-20T22:45:00Z"))
        assert abs(lat) < 0.3

    def test_subsolar_latitude_at_solstice(self):
        """Test that the Sun is over the Tropic of Cancer at the June 2015 solstice."""
        lat, _ = subsolar_point(parse_time("2015-06-21T16:38:00Z"))
        assert lat == pytest.approx(23.44, abs=0.3)

    def test_december_solstice(self):
        lat, _ = subsolar_point(parse_time("2015-12-22T04:48:00Z"))
        assert lat == pytest.approx(-23.44, abs=0.3)

    @pytest.mark.parametrize("date", ["2015-01-15", "2015-04-15", "2015-07-15", "2015-11-03"])
    def test_subsolar_longitude_near_noon_meridian(self, date):
        """Test that at 12 UTC the Sun is within the equation of time of 0E."""
        _, lon = subsolar_point(parse_time(f"{date}T12:00:00Z"))
        assert abs(lon) < 4.5

    def test_longitude_drift(self):
        """Test that the subsolar point moves 15 degrees west per hour."""
        t = parse_time("2015-03-01T06:00:00Z")
        _, lon0 = subsolar_point(t)
        _, lon1 = subsolar_point(t + 3600)
        assert float(wrap_longitude(lon1 - lon0)) == pytest.approx(-15.0, abs=0.05)

    def test_sublunar_bounds(self):
        """Test that the Moon stays within its maximum declination."""
        for hours in range(0, 24 * 30, 37):
            lat, lon = sublunar_point(parse_time("2015-03-01T00:00:00Z") + hours * 3600)
            assert abs(lat) < 29.0
            assert -180.0 <= lon < 180.0

    def test_distances(self):
        t = parse_time("2015-07-04T00:00:00Z")
        assert body_distance(t, "sun") == pytest.approx(1.0167, abs=0.002)
        assert 0.9 < body_distance(t, "moon") < 1.1

    def test_validity_window(self):
        """Test that timestamps outside 1950-2100 raise RangeError."""
        with pytest.raises(RangeError):
            subsolar_point(parse_time("1949-12-31T23:00:00Z"))
        with pytest.raises(RangeError):
            subsolar_point(parse_time("2101-01-01T00:00:00Z"))
        subsolar_point(parse_time("1950-01-01T00:00:00Z"))

    def test_unknown_body(self):
        with pytest.raises(ArgumentError):
            body_distance(parse_time("2015-01-01T00:00:00Z"), "mars")


class TestForcingMaps:
    """Test cases for forcing channels on the grid."""

    def setup_method(self):
        self.grid = LatLonGrid(18, 36)
        self.t = parse_time("2015-06-21T12:00:00Z")

    def test_zenith_peak_at_subsolar_node(self):
        """Test that the zenith cosine peaks at the cell holding the subsolar point."""
        zenith = zenith_cos_map(self.t, self.grid, "sun")
        lat, lon = subsolar_point(self.t)
        assert zenith.shape == self.grid.shape
        assert np.abs(zenith).max() <= 1.0
        assert int(np.argmax(zenith)) == self.grid.nearest_node(lat, lon)

    def test_zenith_at_sub_point_is_one(self):
        grid = LatLonGrid(2, 4)
        value = zenith_cos_from_point(grid, grid.latitudes[0], grid.longitudes[1])
        assert value[0, 1] == pytest.approx(1.0)

    def test_local_solar_time(self):
        """Test that local solar time is 12 on the subsolar meridian."""
        grid = LatLonGrid(2, 360)
        _, lon = subsolar_point(self.t)
        hours = local_solar_time_hours(self.t, grid)
        col = int(np.argmin(np.abs(wrap_longitude(grid.longitudes - lon))))
        assert hours[0, col] == pytest.approx(12.0, abs=0.1)

    def test_point_channels_are_uniform(self):
        frame = forcing_frame(self.t, self.grid, ["subsolar_lat_sin", "sun_distance"])
        lat, _ = subsolar_point(self.t)
        np.testing.assert_allclose(frame.maps["subsolar_lat_sin"], np.sin(np.radians(lat)))
        assert np.ptp(frame.maps["sun_distance"]) == 0.0

    def test_provider_order_and_cache(self):
        """Test that frames follow channel order and are memoized."""
        names = ["lunar_zenith_cos", "solar_zenith_cos"]
        provider = ForcingProvider(self.grid, names)
        stack = provider(self.t)
        assert stack.shape == (2, 18, 36)
        assert stack.dtype == np.float64
        np.testing.assert_allclose(stack[1], zenith_cos_map(self.t, self.grid, "sun"))
        assert provider(self.t) is stack

    def test_provider_without_channels(self):
        assert ForcingProvider(self.grid, [])(self.t).shape == (0, 18, 36)

    def test_unknown_channel(self):
        with pytest.raises(ConfigError) as exc:
            ForcingProvider(self.grid, ["solar_flux"])
        assert exc.value.key == "data.channels.forcings"

    def test_provider_cache_is_bounded(self):
        """Test that the provider keeps at most ``cache_size`` frames."""
        provider = ForcingProvider(self.grid, ["solar_zenith_cos"], cache_size=4)
        for step in range(10):
            stack = provider(self.t + step * 3600)
            np.testing.assert_array_equal(stack, forcing_frame(self.t + step * 3600, self.grid, ["solar_zenith_cos"]).stack())
        hits, misses, maxsize, currsize = provider.cache_info()
        assert (misses, maxsize, currsize) == (10, 4, 4)
        provider(self.t + 9 * 3600)
        assert provider.cache_info()[0] == hits + 1


class TestMagneticCoordinates:
    """Test cases for the dipole frame and the external-file path."""

    def test_pole_is_ninety(self):
        maglat, _ = dipole_coordinates(np.array([80.4]), np.array([-72.6]), 80.4, -72.6)
        assert maglat[0] == pytest.approx(90.0)

    def test_aligned_dipole_is_geographic(self):
        """Test that a dipole at the geographic pole gives maglat = lat."""
        lat = np.array([-45.0, 0.0, 30.0])
        maglat, _ = dipole_coordinates(lat, np.array([10.0, 50.0, -120.0]), 90.0, 0.0)
        np.testing.assert_allclose(maglat, lat, atol=1e-9)

    def test_geographic_pole_at_maglon_180(self):
        _, maglon = dipole_coordinates(np.array([90.0]), np.array([0.0]), 80.4, -72.6)
        assert abs(maglon[0]) == pytest.approx(180.0, abs=1e-6)

    def test_analytic_maps(self):
        grid = LatLonGrid(9, 18)
        maps = mag_coord_maps(grid, DataConfig())
        assert maps.provenance == "analytic-dipole"
        assert maps.maglat.shape == grid.shape
        np.testing.assert_allclose(maps.maglon_sin**2 + maps.maglon_cos**2, 1.0)
        assert maps.stack(["maglat", "maglon_cos"]).shape == (2, 9, 18)

    def test_external_file(self, tmp_path):
        """Test that a user-supplied coordinate file replaces the dipole."""
        grid = LatLonGrid(3, 4)
        data = np.zeros((1, 3, 3, 4), dtype=np.float32)
        data[0, 0] = 12.5
        data[0, 2] = 1.0
        path = tmp_path / "mag.iongrid"
        write_grid_stack(path, GridStack(["maglat", "maglon_sin", "maglon_cos"], 3600, np.array([0]), data))
        maps = mag_coord_maps(grid, DataConfig(mag_coords="file", mag_file=str(path)))
        assert maps.provenance == "external-file"
        np.testing.assert_allclose(maps.maglat, 12.5)

    def test_external_file_wrong_channels(self, tmp_path):
        path = tmp_path / "mag.iongrid"
        data = np.zeros((1, 1, 3, 4), dtype=np.float32)
        write_grid_stack(path, GridStack(["maglat"], 3600, np.array([0]), data))
        with pytest.raises(FormatError):
            mag_coord_maps(LatLonGrid(3, 4), DataConfig(mag_coords="file", mag_file=str(path)))
