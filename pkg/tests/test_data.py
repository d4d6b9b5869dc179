"""Tests for IONGRID files, driver ingestion, event splits, sampling and synthesis."""
import math
import struct

import numpy as np
import pytest

from ioncast.config import DataConfig
from ioncast.data.channels import ChannelSpec, canonical_order, kind_of
from ioncast.data.dataset import Dataset, candidate_starts, load_sequence, sample_sequences, sequence_starts
from ioncast.data.drivers import (
    DriverSchema,
    DriverSeries,
    align_drivers,
    read_driver_csv,
    read_schema,
    write_driver_csv,
    write_schema,
)
from ioncast.data.events import (
    Event,
    EventCatalog,
    SplitSpec,
    build_splits,
    g_level_from_kp,
    read_event_csv,
    write_event_csv,
)
from ioncast.data.ingest import ingest_files
from ioncast.data.iongrid import HEADER, GridStack, read_grid_stack, write_grid_stack
from ioncast.data.normalizer import STD_FLOOR, Normalizer, fit_normalizer
from ioncast.data.synth import synth_dataset, write_synth_files
from ioncast.errors import (
    AlignmentError,
    ConfigError,
    FormatError,
    IngestError,
    SamplingError,
    SplitError,
)
from ioncast.forcings import forcing_frame
from ioncast.timeutil import format_time, parse_time

T0 = parse_time("2015-01-01T00:00:00Z")
HOUR = 3600


def make_dataset(timestamps, names=("tec", "kp"), shape=(2, 4), seed=0):
    timestamps = np.asarray(timestamps, dtype=np.int64)
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(timestamps.size, len(names)) + shape).astype(np.float32)
    stack = GridStack(list(names), HOUR, timestamps, data)
    return Dataset(stack, ChannelSpec.from_names(list(names)))


class TestIonGrid:
    """Test cases for the IONGRID container."""

    def setup_method(self):
        self.stack = GridStack(
            channels=["tec", "kp"],
            cadence=900,
            timestamps=T0 + 900 * np.arange(3),
            data=np.arange(3 * 2 * 2 * 3, dtype=np.float32).reshape(3, 2, 2, 3),
        )

    def test_round_trip(self, tmp_path):
        path = tmp_path / "stack.iongrid"
        write_grid_stack(path, self.stack)
        back = read_grid_stack(path)
        assert back.channels == ["tec", "kp"]
        assert back.cadence == 900
        np.testing.assert_array_equal(back.timestamps, self.stack.timestamps)
        np.testing.assert_array_equal(back.data, self.stack.data)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "stack.iongrid"
        write_grid_stack(path, self.stack)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            read_grid_stack(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "stack.iongrid"
        write_grid_stack(path, self.stack)
        raw = bytearray(path.read_bytes())
        struct.pack_into("<H", raw, 4, 9)
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            read_grid_stack(path)

    def test_truncated(self, tmp_path):
        """Test that a truncated file reports expected and actual sizes."""
        path = tmp_path / "stack.iongrid"
        write_grid_stack(path, self.stack)
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(FormatError, match=f"expected {len(raw)} bytes, found {len(raw) - 5}"):
            read_grid_stack(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "stack.iongrid"
        path.write_bytes(b"IONG")
        with pytest.raises(FormatError, match="truncated header"):
            read_grid_stack(path)
        assert HEADER.size > 4

    def test_timestamps_must_increase(self, tmp_path):
        stack = GridStack(["tec"], 900, np.array([T0, T0]), np.zeros((2, 1, 1, 1)))
        with pytest.raises(FormatError):
            write_grid_stack(tmp_path / "bad.iongrid", stack)

    def test_shape_mismatch(self):
        with pytest.raises(FormatError):
            GridStack(["tec", "kp"], 900, np.array([T0]), np.zeros((1, 1, 2, 2)))


class TestIonGridFuzz:
    """Seeded random stacks and corruptions of the IONGRID container."""

    def setup_method(self):
        self.rng = np.random.default_rng(2015)

    def random_stack(self, n_frames):
        c, h, w = (int(v) for v in self.rng.integers(1, 5, size=3))
        bits = self.rng.integers(0, 2**32, size=(n_frames, c, h, w), dtype=np.uint64).astype(np.uint32)
        timestamps = T0 + np.cumsum(self.rng.integers(1, 4 * HOUR, size=n_frames))
        channels = [f"ch{i}" for i in range(c - 1)] + ["Δtec"]
        return GridStack(channels, int(self.rng.integers(1, 7200)), timestamps, bits.view(np.float32))

    def written(self, tmp_path, stack):
        path = tmp_path / "fuzz.iongrid"
        write_grid_stack(path, stack)
        return path, path.read_bytes()

    def test_random_frames_round_trip_bit_exact(self, tmp_path):
        """Test 1000 frames of arbitrary float32 bit patterns, NaN payloads included."""
        for n_frames in (1, 9, 990):
            stack = self.random_stack(n_frames)
            path, _ = self.written(tmp_path, stack)
            back = read_grid_stack(path)
            assert back.channels == stack.channels
            assert back.cadence == stack.cadence
            np.testing.assert_array_equal(back.timestamps, stack.timestamps)
            np.testing.assert_array_equal(back.data.view(np.uint32), stack.data.view(np.uint32))

    def test_corrupt_magic(self, tmp_path):
        path, raw = self.written(tmp_path, self.random_stack(3))
        for _ in range(50):
            magic = self.rng.integers(0, 256, size=4, dtype=np.uint8).tobytes()
            if magic == b"IONG":
                continue
            path.write_bytes(magic + raw[4:])
            with pytest.raises(FormatError, match="magic"):
                read_grid_stack(path)

    def test_random_truncation(self, tmp_path):
        """Test that every proper prefix of a file is rejected."""
        path, raw = self.written(tmp_path, self.random_stack(4))
        cuts = set(self.rng.integers(0, len(raw), size=200).tolist()) | {0, HEADER.size - 1, HEADER.size, len(raw) - 1}
        for cut in sorted(cuts):
            path.write_bytes(raw[:cut])
            with pytest.raises(FormatError):
                read_grid_stack(path)

    @pytest.mark.parametrize("field", [3, 4, 5, 6])
    def test_altered_dimensions(self, tmp_path, field):
        """Test that changing n_frames, C, H or W in the header is detected."""
        path, raw = self.written(tmp_path, self.random_stack(3))
        for _ in range(25):
            values = list(HEADER.unpack_from(raw, 0))
            limit = 0xFFFFFFFF if field == 3 else 0xFFFF
            altered = int(self.rng.integers(0, limit + 1))
            if altered == values[field]:
                continue
            values[field] = altered
            path.write_bytes(HEADER.pack(*values) + raw[HEADER.size:])
            with pytest.raises(FormatError):
                read_grid_stack(path)

    def test_trailing_bytes(self, tmp_path):
        path, raw = self.written(tmp_path, self.random_stack(2))
        path.write_bytes(raw + b"\x00")
        with pytest.raises(FormatError, match="size mismatch"):
            read_grid_stack(path)


class TestChannelSpec:
    """Test cases for the channel table."""

    def test_kinds_and_indices(self):
        spec = ChannelSpec.from_names(["tec", "kp", "f107", "maglat", "solar_zenith_cos"], target_weight=2.0)
        assert spec.target_index == 0
        assert spec.predicted_indices == [0, 1, 2]
        assert spec.coordinate_indices == [3]
        assert spec.forcing_indices == [4]
        assert spec.loss_weights() == [2.0, 1.0, 1.0]

    def test_exactly_one_target(self):
        with pytest.raises(ValueError):
            ChannelSpec.from_names(["kp", "f107"])

    def test_unknown_channel(self):
        with pytest.raises(ConfigError):
            kind_of("dst")

    def test_fingerprint_tracks_weights(self):
        a = ChannelSpec.from_names(["tec", "kp"], target_weight=1.0)
        b = ChannelSpec.from_names(["tec", "kp"], target_weight=2.0)
        assert a.fingerprint() == ChannelSpec.from_names(["tec", "kp"]).fingerprint()
        assert a.fingerprint() != b.fingerprint()

    def test_canonical_order(self):
        assert canonical_order(["solar_zenith_cos", "maglat", "kp", "tec"]) == [
            "tec",
            "kp",
            "maglat",
            "solar_zenith_cos",
        ]


class TestDrivers:
    """Test cases for driver CSVs, schemas and alignment."""

    def test_sentinel_becomes_gap(self, tmp_path):
        path = tmp_path / "bz.csv"
        path.write_text(
            "timestamp,value\n"
            "2015-01-01T00:00:00Z,1.5\n"
            "2015-01-01T01:00:00Z,9999.99\n"
            "2015-01-01T02:00:00Z,\n"
            "2015-01-01T03:00:00Z,-2.0\n"
        )
        series = read_driver_csv(path, DriverSchema(sentinel=9999.99))
        assert series.name == "bz"
        assert np.isnan(series.values[1]) and np.isnan(series.values[2])
        assert series.values[3] == -2.0

    def test_bad_row_has_line_number(self, tmp_path):
        path = tmp_path / "kp.csv"
        path.write_text("timestamp,value\n2015-01-01T00:00:00Z,1\n2015-01-01T03:00:00Z,abc\n")
        with pytest.raises(IngestError, match=":3:"):
            read_driver_csv(path, DriverSchema())

    def test_non_increasing_timestamps(self, tmp_path):
        path = tmp_path / "kp.csv"
        path.write_text("timestamp,value\n2015-01-01T03:00:00Z,1\n2015-01-01T00:00:00Z,2\n")
        with pytest.raises(FormatError):
            read_driver_csv(path, DriverSchema())

    def test_csv_and_schema_round_trip(self, tmp_path):
        series = DriverSeries("f107", T0 + 86400 * np.arange(3), np.array([100.0, np.nan, 120.0]))
        schema = DriverSchema(units="sfu", sentinel=999.9, cadence=86400, policy="hold-previous")
        write_driver_csv(tmp_path / "f107.csv", series, sentinel=schema.sentinel)
        write_schema(tmp_path / "f107.schema", schema)
        read_back = read_schema(tmp_path / "f107.schema")
        assert read_back == schema
        back = read_driver_csv(tmp_path / "f107.csv", read_back)
        np.testing.assert_array_equal(np.isnan(back.values), [False, True, False])

    def test_schema_comments_and_errors(self, tmp_path):
        path = tmp_path / "x.schema"
        path.write_text("# solar wind\nunits = km/s\npolicy = linear  # interpolate\n")
        assert read_schema(path).policy == "linear"
        path.write_text("units km/s\n")
        with pytest.raises(IngestError):
            read_schema(path)

    def test_hold_previous_is_causal(self):
        """Test that a 3-hourly index is held, never read ahead."""
        series = DriverSeries("kp", T0 + 3 * HOUR * np.arange(3), np.array([1.0, 5.0, 2.0]))
        grid = T0 + HOUR * np.arange(7)
        aligned = align_drivers({"kp": series}, grid, {}, max_gap=6 * HOUR)
        np.testing.assert_array_equal(aligned.column("kp"), [1, 1, 1, 5, 5, 5, 2])

    def test_linear_interpolation(self):
        series = DriverSeries("bz", T0 + 2 * HOUR * np.arange(3), np.array([0.0, 4.0, 2.0]))
        grid = T0 + HOUR * np.arange(5)
        aligned = align_drivers({"bz": series}, grid, {"bz": "linear"}, max_gap=4 * HOUR)
        np.testing.assert_allclose(aligned.column("bz"), [0, 2, 4, 3, 2])

    def test_gap_too_long(self):
        """Test that a gap longer than max_gap names its interval."""
        values = np.array([1.0, np.nan, np.nan, np.nan, 2.0])
        series = DriverSeries("bz", T0 + HOUR * np.arange(5), values)
        with pytest.raises(AlignmentError, match=format_time(T0)):
            align_drivers({"bz": series}, T0 + HOUR * np.arange(5), {"bz": "linear"}, max_gap=2 * HOUR)

    def test_no_sample_before_start(self):
        series = DriverSeries("kp", np.array([T0 + HOUR]), np.array([3.0]))
        with pytest.raises(AlignmentError):
            align_drivers({"kp": series}, np.array([T0]), {}, max_gap=HOUR)


class TestEvents:
    """Test cases for the event catalog and storm holdout."""

    def setup_method(self):
        events = [Event(T0 + i * 86400, T0 + i * 86400 + 12 * HOUR, 1) for i in range(10)]
        events += [Event(T0 + (20 + i) * 86400, T0 + (20 + i) * 86400 + 6 * HOUR, 3) for i in range(3)]
        events += [Event(T0 + 40 * 86400, T0 + 40 * 86400 + 6 * HOUR, 5)]
        self.catalog = EventCatalog(events)

    def test_g_level_from_kp(self):
        assert [g_level_from_kp(kp) for kp in (3.0, 5.0, 6.33, 7.67, 8.0, 9.0)] == [0, 1, 2, 3, 4, 5]

    def test_normalize_merges_overlaps(self):
        catalog = EventCatalog([Event(10, 20, 1), Event(0, 5, 2), Event(15, 30, 3)]).normalize()
        assert catalog.events == [Event(0, 5, 2), Event(10, 30, 3)]

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "events.csv"
        write_event_csv(path, self.catalog)
        assert read_event_csv(path).events == self.catalog.events

    def test_csv_end_before_start(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("start,end,g_level\n2015-01-02T00:00:00Z,2015-01-01T00:00:00Z,G2\n")
        with pytest.raises(IngestError, match=":2:"):
            read_event_csv(path)

    def test_summary(self):
        rows = self.catalog.summary()
        assert rows[0] == {"g_level": "G1", "events": 10, "hours": 120.0}
        assert [row["g_level"] for row in rows] == ["G1", "G3", "G5"]

    def test_holdout_counts_per_level(self):
        """Test ceil(f * n) test events and up to as many val events per level."""
        splits = build_splits(self.catalog, holdout_fraction=0.1, seed=0)
        by_level = {}
        for event, split in zip(splits.catalog.events, splits.assignments):
            by_level.setdefault(event.g_level, []).append(split)
        assert by_level[1].count("test") == math.ceil(0.1 * 10)
        assert by_level[1].count("val") == 1
        assert by_level[3].count("test") == 1 and by_level[3].count("val") == 1
        assert by_level[5] == ["test"]

    def test_holdout_is_seeded(self):
        a = build_splits(self.catalog, 0.2, seed=4)
        b = build_splits(self.catalog, 0.2, seed=4)
        assert a.assignments == b.assignments

    def test_train_mask_excludes_held_out_with_margin(self):
        """Test that no training timestamp lies within margin of a held-out event."""
        margin = 6 * HOUR
        splits = build_splits(self.catalog, 0.3, seed=1, margin_seconds=margin)
        timestamps = T0 + HOUR * np.arange(45 * 24)
        mask = splits.train_mask(timestamps)
        for event in splits.held_out():
            near = (timestamps >= event.start - margin) & (timestamps <= event.end + margin)
            assert not mask[near].any()
        assert mask.any()

    def test_split_masks_disjoint(self):
        splits = build_splits(self.catalog, 0.2, seed=2, margin_seconds=HOUR)
        timestamps = T0 + HOUR * np.arange(45 * 24)
        train = splits.split_mask(timestamps, "train")
        val = splits.split_mask(timestamps, "val")
        test = splits.split_mask(timestamps, "test")
        assert not (train & val).any()
        assert not (train & test).any()
        assert not (val & test).any()

    def test_train_window(self):
        splits = build_splits(self.catalog, 0.1, seed=0).with_train_window(T0, T0 + 5 * 86400)
        timestamps = T0 + HOUR * np.arange(45 * 24)
        assert not splits.train_mask(timestamps)[timestamps > T0 + 5 * 86400].any()

    def test_serialization(self):
        splits = build_splits(self.catalog, 0.1, seed=3, margin_seconds=HOUR)
        back = SplitSpec.from_dict(splits.to_dict())
        assert back.assignments == splits.assignments
        assert back.catalog.events == splits.catalog.events
        assert back.margin_seconds == HOUR

    def test_invalid_holdout(self):
        with pytest.raises(SplitError):
            build_splits(self.catalog, 1.0, seed=0)
        with pytest.raises(SplitError):
            build_splits(EventCatalog([]), 0.1, seed=0)


class TestSampling:
    """Test cases for sequence starts and windows."""

    def setup_method(self):
        # 10 hourly frames, a 3-hour gap, then 6 more
        times = np.concatenate([T0 + HOUR * np.arange(10), T0 + HOUR * (13 + np.arange(6))])
        self.dataset = make_dataset(times)

    def test_starts_never_cross_gaps(self):
        starts = sequence_starts(self.dataset, context=3, horizon=2, dilation=1, mask=np.ones(16, bool))
        np.testing.assert_array_equal(starts, [0, 1, 2, 3, 4, 5, 10, 11])

    def test_dilation(self):
        starts = sequence_starts(self.dataset, context=3, horizon=2, dilation=3, mask=np.ones(16, bool))
        np.testing.assert_array_equal(starts, [0, 3, 10])

    def test_mask_respected(self):
        mask = np.ones(16, bool)
        mask[4] = False
        starts = candidate_starts(self.dataset, 5, mask)
        assert not any(s <= 4 < s + 5 for s in starts)

    def test_count_is_exact(self):
        starts = sequence_starts(self.dataset, 3, 2, 1, np.ones(16, bool), count=4)
        assert starts.size == 4

    def test_no_sequences(self):
        with pytest.raises(SamplingError):
            sequence_starts(self.dataset, 8, 4, 1, np.ones(16, bool))

    def test_count_too_large(self):
        with pytest.raises(SamplingError):
            sequence_starts(self.dataset, 3, 2, 1, np.ones(16, bool), count=50)

    def test_load_sequence(self):
        seq = load_sequence(self.dataset, 2, context=3, horizon=2)
        assert seq.context.shape == (3, 2, 2, 4)
        assert seq.targets.shape == (2, 2, 2, 4)
        np.testing.assert_array_equal(seq.targets[0], self.dataset.data[5])
        assert seq.timestamps[0] == T0 + 2 * HOUR

    def test_sample_sequences(self):
        seqs = list(sample_sequences(self.dataset, 2, 1, 2, np.ones(16, bool)))
        assert [s.start for s in seqs] == [0, 2, 4, 6, 10, 12]

    def test_index_of(self):
        assert self.dataset.index_of(T0 + 13 * HOUR) == 10
        with pytest.raises(KeyError):
            self.dataset.index_of(T0 + 11 * HOUR)

    def test_channel_mismatch(self):
        stack = self.dataset.stack
        with pytest.raises(ConfigError):
            Dataset(stack, ChannelSpec.from_names(["tec", "f107"]))


class TestNormalizer:
    """Test cases for per-channel z-scoring."""

    def test_fit_uses_mask_only(self):
        dataset = make_dataset(T0 + HOUR * np.arange(6))
        dataset.data[3:] = 1000.0
        mask = np.array([True, True, True, False, False, False])
        norm = fit_normalizer(dataset, mask)
        expected = dataset.data[:3].astype(np.float64).mean(axis=(0, 2, 3))
        np.testing.assert_allclose(norm.mean, expected, rtol=1e-6)

    def test_apply_invert(self):
        dataset = make_dataset(T0 + HOUR * np.arange(6))
        norm = fit_normalizer(dataset, np.ones(6, bool))
        z = norm.apply(dataset.data.astype(np.float64))
        np.testing.assert_allclose(z.mean(axis=(0, 2, 3)), 0.0, atol=1e-9)
        np.testing.assert_allclose(norm.invert(z), dataset.data, rtol=1e-5, atol=1e-5)

    def test_constant_channel_floored(self):
        dataset = make_dataset(T0 + HOUR * np.arange(4))
        dataset.data[:, 1] = 3.0
        norm = fit_normalizer(dataset, np.ones(4, bool))
        assert norm.std[1] == STD_FLOOR

    def test_channel_subset_and_dict(self):
        norm = Normalizer(["tec", "kp"], np.array([10.0, 2.0]), np.array([5.0, 1.0]))
        out = norm.apply(np.full((1, 2, 2), 12.0), indices=[1])
        np.testing.assert_allclose(out, 10.0)
        back = Normalizer.from_dict(norm.to_dict())
        np.testing.assert_array_equal(back.std, norm.std)

    def test_empty_mask(self):
        with pytest.raises(SamplingError):
            fit_normalizer(make_dataset(T0 + HOUR * np.arange(3)), np.zeros(3, bool))


class TestSynth:
    """Test cases for the synthetic dataset."""

    def test_channels_and_shape(self, synth, tiny_spec):
        dataset = synth.dataset
        assert dataset.spec.names == tiny_spec.names
        assert dataset.data.shape == (12 * 24, len(tiny_spec.names), 8, 16)
        assert np.all(np.diff(dataset.timestamps) == 3600)
        assert np.isfinite(dataset.data).all()

    def test_tec_physical(self, synth):
        tec = synth.dataset.data[:, synth.dataset.spec.target_index]
        assert tec.min() >= 0.0
        assert 5.0 < tec.max() < 200.0

    def test_dayside_brighter(self, synth):
        """Test that sunlit cells carry more TEC than night cells."""
        dataset = synth.dataset
        zenith = dataset.data[:, dataset.spec.index("solar_zenith_cos")]
        tec = dataset.data[:, dataset.spec.target_index]
        assert tec[zenith > 0.5].mean() > 3 * tec[zenith < -0.2].mean()

    def test_forcings_computed_per_timestamp(self, synth):
        """Test that assembled forcing channels equal freshly computed maps."""
        dataset = synth.dataset
        names = dataset.spec.forcing_names
        for i in (0, 1, 137, len(dataset) - 1):
            fresh = forcing_frame(int(dataset.timestamps[i]), dataset.grid, names).stack().astype(np.float32)
            np.testing.assert_array_equal(dataset.data[i, dataset.spec.forcing_indices], fresh)

    def test_drivers_broadcast(self, synth):
        kp = synth.dataset.data[:, synth.dataset.spec.index("kp")]
        assert np.ptp(kp, axis=(1, 2)).max() == 0.0
        assert kp.min() >= 0.0 and kp.max() <= 9.0

    def test_catalog_has_storms(self, synth):
        assert len(synth.catalog) >= 2
        assert max(event.g_level for event in synth.catalog) >= 1

    def test_deterministic(self, synth, run_config, tiny_spec):
        again = synth_dataset(run_config.data, tiny_spec)
        np.testing.assert_array_equal(again.dataset.data, synth.dataset.data)
        assert again.catalog.events == synth.catalog.events

    def test_explicit_storms(self, tiny_spec):
        config = DataConfig.model_validate(
            {
                "synth": {
                    "n_lat": 4,
                    "n_lon": 8,
                    "days": 4,
                    "cadence_seconds": 3600,
                    "storm_count": 0,
                    "storms": [{"start_day": 1.5, "duration_hours": 12, "peak_kp": 8}],
                },
                "channels": {"drivers": ["kp", "f107"], "coordinates": ["maglat"], "forcings": []},
            }
        )
        spec = ChannelSpec.from_config(config.channels)
        result = synth_dataset(config, spec)
        assert any(event.g_level == 4 for event in result.catalog)

    def test_files_reingest(self, synth, tiny_spec, tmp_path, run_config):
        """Test that written raw files ingest back into the same dataset."""
        config = run_config.data.model_copy(
            update={
                "dataset_path": str(tmp_path / "data" / "dataset.iongrid"),
                "events_path": str(tmp_path / "data" / "events.csv"),
            }
        )
        paths = write_synth_files(synth, config)
        assert paths["dataset"].exists()
        drivers = [
            {"name": name, "csv": str(paths["drivers"] / f"{name}.csv"), "schema_path": str(paths["drivers"] / f"{name}.schema")}
            for name in ("kp", "f107")
        ]
        ingest_config = config.model_copy(
            update={
                "source": "files",
                "tec_path": str(paths["tec"]),
                "dataset_path": str(tmp_path / "ingested.iongrid"),
            }
        )
        ingest_config = DataConfig.model_validate({**ingest_config.model_dump(), "drivers": drivers})
        result = ingest_files(ingest_config, tiny_spec)
        np.testing.assert_allclose(result.dataset.data, synth.dataset.data, rtol=1e-5, atol=1e-4)
        assert result.catalog.events == synth.catalog.events
