"""
Synthetic desk-scale dataset.

TEC follows the photo-ionization shape of the dayside ionosphere with an
equatorial enhancement around the magnetic equator:

    TEC = A(t) * max(cos chi_sun, 0)^0.9 * (1 + 0.6 exp(-(maglat / 12)^2)) + noise
    A(t) = 20 * (f107 / 100) * (1 + 0.15 kp)

The noise is a spatially smoothed AR(1) field. Kp is a quiet
Ornstein-Uhlenbeck process at 3-hour blocks with storms imposed on it;
every other driver is derived from Kp and a 27-day F10.7 oscillation so
the series stay mutually consistent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from ioncast.config import DataConfig, StormSpec, SynthConfig
from ioncast.data.channels import ChannelSpec
from ioncast.data.dataset import Dataset
from ioncast.data.drivers import DriverSchema, DriverSeries, write_driver_csv, write_schema
from ioncast.data.events import Event, EventCatalog, g_level_from_kp, write_event_csv
from ioncast.data.ingest import assemble_dataset
from ioncast.data.iongrid import GridStack, write_grid_stack
from ioncast.forcings import mag_coord_maps, zenith_cos_map
from ioncast.logging_config import get_logger
from ioncast.mesh.grid import LatLonGrid
from ioncast.timeutil import parse_time

logger = get_logger(__name__)

KP_BLOCK = 3 * 3600
HOUR = 3600
DAY = 86400

# ap for Kp = 0o, 0+, 1-, 1o, ... 9o (index = 3 * Kp)
AP_TABLE = np.array(
    [0, 2, 3, 4, 5, 6, 7, 9, 12, 15, 18, 22, 27, 32, 39, 48, 56, 67, 80, 94, 111, 132, 154, 179, 207, 236, 300, 400],
    dtype=np.float64,
)

QUIET_KP_MEAN = 2.0
QUIET_KP_CEILING = 4.67
QUIET_EVENT_HOURS = 12.0
NOISE_CORRELATION = 0.9

SCHEMAS: dict[str, DriverSchema] = {
    "kp": DriverSchema(units="", sentinel=99.0, cadence=KP_BLOCK, policy="hold-previous"),
    "ap": DriverSchema(units="nT", sentinel=999.0, cadence=KP_BLOCK, policy="hold-previous"),
    "f107": DriverSchema(units="sfu", sentinel=999.9, cadence=DAY, policy="hold-previous"),
    "s107": DriverSchema(units="sfu", sentinel=999.9, cadence=DAY, policy="hold-previous"),
    "m107": DriverSchema(units="sfu", sentinel=999.9, cadence=DAY, policy="hold-previous"),
    "y107": DriverSchema(units="sfu", sentinel=999.9, cadence=DAY, policy="hold-previous"),
    "symh": DriverSchema(units="nT", sentinel=99999.0, cadence=HOUR, policy="linear"),
    "bx": DriverSchema(units="nT", sentinel=9999.99, cadence=HOUR, policy="linear"),
    "by": DriverSchema(units="nT", sentinel=9999.99, cadence=HOUR, policy="linear"),
    "bz": DriverSchema(units="nT", sentinel=9999.99, cadence=HOUR, policy="linear"),
    "vx": DriverSchema(units="km/s", sentinel=99999.9, cadence=HOUR, policy="linear"),
    "vy": DriverSchema(units="km/s", sentinel=99999.9, cadence=HOUR, policy="linear"),
    "vz": DriverSchema(units="km/s", sentinel=99999.9, cadence=HOUR, policy="linear"),
}


@dataclass
class SynthResult:
    """Raw synthetic inputs plus the dataset assembled from them."""

    tec: GridStack
    drivers: dict[str, DriverSeries]
    schemas: dict[str, DriverSchema]
    catalog: EventCatalog
    dataset: Dataset
    storms: list[StormSpec] = field(default_factory=list)


def _block_axis(start: int, end: int, cadence: int) -> np.ndarray:
    return start + cadence * np.arange((end - start) // cadence + 2, dtype=np.int64)


def _ema(values: np.ndarray, alpha: float) -> np.ndarray:
    out = np.empty_like(values)
    out[0] = values[0]
    for i in range(1, values.size):
        out[i] = alpha * values[i] + (1 - alpha) * out[i - 1]
    return out


def _schedule_storms(cfg: SynthConfig, rng: np.random.Generator) -> list[StormSpec]:
    if cfg.storms:
        return list(cfg.storms)
    storms: list[StormSpec] = []
    margin = min(1.0, cfg.days * 0.1)
    for _ in range(cfg.storm_count):
        duration = float(rng.uniform(12.0, 30.0))
        latest = cfg.days - margin - duration / 24.0
        if latest <= margin:
            logger.warning("synth_storm_skipped", days=cfg.days, duration_hours=duration)
            continue
        storms.append(
            StormSpec(
                start_day=float(rng.uniform(margin, latest)),
                duration_hours=duration,
                peak_kp=float(rng.integers(5, 10)),
            )
        )
    return storms


def _kp_blocks(
    blocks: np.ndarray, start: int, storms: list[StormSpec], rng: np.random.Generator
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Quiet OU Kp with storms imposed; returns Kp per block and the storm windows."""
    kp = np.empty(blocks.size)
    x = QUIET_KP_MEAN
    for i in range(blocks.size):
        x += 0.3 * (QUIET_KP_MEAN - x) + 0.5 * rng.standard_normal()
        kp[i] = np.clip(x, 0.0, QUIET_KP_CEILING)

    windows: list[tuple[int, int]] = []
    for storm in storms:
        s = start + int(round(storm.start_day * DAY / KP_BLOCK)) * KP_BLOCK
        e = s + int(round(storm.duration_hours * HOUR))
        windows.append((s, e))
        middle = blocks + KP_BLOCK // 2
        inside = (middle >= s) & (middle < e)
        frac = (middle[inside] - s) / max(e - s, 1)
        kp[inside] = np.maximum(kp[inside], storm.peak_kp * np.sin(np.pi * frac) ** 0.6)
        peak_block = int(np.searchsorted(blocks, (s + e) // 2, side="right") - 1)
        if 0 <= peak_block < kp.size:
            kp[peak_block] = max(kp[peak_block], storm.peak_kp)
    kp = np.clip(np.round(kp * 3.0) / 3.0, 0.0, 9.0)
    return kp, windows


def _max_kp(kp: np.ndarray, blocks: np.ndarray, s: int, e: int) -> float:
    overlap = (blocks < e) & (blocks + KP_BLOCK > s)
    return float(kp[overlap].max()) if overlap.any() else 0.0


def _catalog(
    kp: np.ndarray,
    blocks: np.ndarray,
    windows: list[tuple[int, int]],
    start: int,
    end: int,
    quiet_count: int,
    rng: np.random.Generator,
) -> EventCatalog:
    events = [Event(s, e, g_level_from_kp(_max_kp(kp, blocks, s, e))) for s, e in windows]
    length = int(QUIET_EVENT_HOURS * HOUR)
    margin = DAY // 2
    placed = 0
    for _ in range(100 * max(quiet_count, 1)):
        if placed >= quiet_count or end - start - 2 * margin <= length:
            break
        s = start + margin + int(rng.integers(0, (end - start - 2 * margin - length) // KP_BLOCK + 1)) * KP_BLOCK
        candidate = Event(s, s + length, 0)
        clear = all(abs(s - o.start) > DAY and not candidate.overlaps(o) for o in events)
        if clear and _max_kp(kp, blocks, s, s + length) < 5.0:
            events.append(candidate)
            placed += 1
    return EventCatalog(events=events).normalize()


def _tec_frames(
    timestamps: np.ndarray,
    grid: LatLonGrid,
    maglat: np.ndarray,
    amplitude: np.ndarray,
    noise_std: float,
    rng: np.random.Generator,
) -> np.ndarray:
    enhancement = 1.0 + 0.6 * np.exp(-((maglat / 12.0) ** 2))
    rho = NOISE_CORRELATION
    noise = np.zeros(grid.shape)
    frames = np.empty((timestamps.size, 1) + grid.shape, dtype=np.float32)
    for i, t in enumerate(timestamps):
        cos_chi = zenith_cos_map(int(t), grid, "sun")
        field_ = gaussian_filter(rng.standard_normal(grid.shape), sigma=1.5, mode=("nearest", "wrap"))
        field_ /= max(float(field_.std()), 1e-12)
        noise = rho * noise + math.sqrt(1 - rho**2) * field_
        tec = amplitude[i] * np.maximum(cos_chi, 0.0) ** 0.9 * enhancement + noise_std * noise
        frames[i, 0] = np.maximum(tec, 0.0)
    return frames


def synth_dataset(config: DataConfig, spec: ChannelSpec) -> SynthResult:
    """
    Generate TEC maps, drivers and the event catalog, and assemble them.

    The same ``config.synth.seed`` always yields a bit-identical result.
    """
    cfg = config.synth
    rng = np.random.default_rng(cfg.seed)
    grid = LatLonGrid(cfg.n_lat, cfg.n_lon)
    start = parse_time(cfg.start)
    n_frames = int(cfg.days * DAY // cfg.cadence_seconds)
    timestamps = start + cfg.cadence_seconds * np.arange(n_frames, dtype=np.int64)
    end = int(timestamps[-1])

    storms = _schedule_storms(cfg, rng)
    blocks = _block_axis(start, end, KP_BLOCK)
    kp, windows = _kp_blocks(blocks, start, storms, rng)
    ap = AP_TABLE[np.round(kp * 3).astype(int)]

    days = _block_axis(start, end, DAY)
    day_index = np.arange(days.size)
    phase = rng.uniform(0, 2 * np.pi)
    f107 = 100.0 + 30.0 * np.sin(2 * np.pi * day_index / 27.0 + phase) + 5.0 * rng.standard_normal(days.size)
    f107 = np.maximum(f107, 60.0)

    hours = _block_axis(start, end, HOUR)
    kp_hourly = kp[(hours - start) // KP_BLOCK]
    speed = 350.0 + 60.0 * kp_hourly + 20.0 * rng.standard_normal(hours.size)
    hourly = {
        "symh": -3.0 * kp_hourly**2 + 5.0 * rng.standard_normal(hours.size),
        "bx": 3.0 * rng.standard_normal(hours.size),
        "by": 3.0 * rng.standard_normal(hours.size),
        "bz": -0.8 * (kp_hourly - QUIET_KP_MEAN) + 1.5 * rng.standard_normal(hours.size),
        "vx": -speed,
        "vy": 10.0 * rng.standard_normal(hours.size),
        "vz": 10.0 * rng.standard_normal(hours.size),
    }

    drivers: dict[str, DriverSeries] = {
        "kp": DriverSeries("kp", blocks, kp, units="", cadence=KP_BLOCK),
        "ap": DriverSeries("ap", blocks, ap, units="nT", cadence=KP_BLOCK),
        "f107": DriverSeries("f107", days, f107, units="sfu", cadence=DAY),
        "s107": DriverSeries("s107", days, _ema(f107, 0.3), units="sfu", cadence=DAY),
        "m107": DriverSeries("m107", days, _ema(f107, 0.1), units="sfu", cadence=DAY),
        "y107": DriverSeries("y107", days, _ema(f107, 0.025), units="sfu", cadence=DAY),
    }
    for name, values in hourly.items():
        drivers[name] = DriverSeries(name, hours, values, units=SCHEMAS[name].units, cadence=HOUR)

    quiet_count = max(1, len(storms) // 2)
    catalog = _catalog(kp, blocks, windows, start, end, quiet_count, rng)

    mag = mag_coord_maps(grid, config)
    frame_kp = kp[(timestamps - start) // KP_BLOCK]
    frame_f107 = f107[(timestamps - start) // DAY]
    amplitude = 20.0 * (frame_f107 / 100.0) * (1.0 + 0.15 * frame_kp)
    frames = _tec_frames(timestamps, grid, mag.maglat, amplitude, cfg.noise_std, rng)
    tec = GridStack(channels=["tec"], cadence=cfg.cadence_seconds, timestamps=timestamps, data=frames)

    policies = {name: schema.policy for name, schema in SCHEMAS.items()}
    dataset = assemble_dataset(tec, drivers, policies, spec, mag, config.max_gap_seconds)
    logger.info(
        "synth_generated",
        frames=n_frames,
        grid=f"{cfg.n_lat}x{cfg.n_lon}",
        storms=len(storms),
        events=len(catalog),
        seed=cfg.seed,
    )
    return SynthResult(
        tec=tec,
        drivers=drivers,
        schemas=dict(SCHEMAS),
        catalog=catalog,
        dataset=dataset,
        storms=storms,
    )


def write_synth_files(result: SynthResult, config: DataConfig) -> dict[str, Path]:
    """
    Write the raw inputs (TEC stack, driver CSV + schema pairs), the event
    catalog and the assembled dataset. Raw files go next to the dataset.
    """
    dataset_path = Path(config.dataset_path)
    root = dataset_path.parent
    paths: dict[str, Path] = {"dataset": dataset_path, "events": Path(config.events_path), "tec": root / "tec.iongrid"}
    write_grid_stack(paths["tec"], result.tec)
    for name, series in result.drivers.items():
        schema = result.schemas[name]
        write_driver_csv(root / "drivers" / f"{name}.csv", series, sentinel=schema.sentinel)
        write_schema(root / "drivers" / f"{name}.schema", schema)
    paths["drivers"] = root / "drivers"
    write_event_csv(paths["events"], result.catalog)
    write_grid_stack(dataset_path, result.dataset.stack)
    return paths
