"""
Dataset assembly: TEC maps + aligned drivers + computed channels.

The assembled frames carry the full channel table of the run, so models
and evaluation never touch the raw driver files again.
"""
from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ioncast.config import TARGET_CHANNEL, DataConfig
from ioncast.data.channels import ChannelSpec
from ioncast.data.dataset import Dataset
from ioncast.data.drivers import AlignmentPolicy, DriverSeries, align_drivers, read_driver_csv, read_schema
from ioncast.data.events import EventCatalog, read_event_csv
from ioncast.data.iongrid import GridStack, read_grid_stack, write_grid_stack
from ioncast.errors import ConfigError, FormatError
from ioncast.forcings import MagCoordMaps, forcing_frame, mag_coord_maps
from ioncast.logging_config import get_logger
from ioncast.mesh.grid import LatLonGrid

logger = get_logger(__name__)


@dataclass
class IngestResult:
    dataset: Dataset
    catalog: EventCatalog


def assemble_dataset(
    tec: GridStack,
    drivers: Mapping[str, DriverSeries],
    policies: Mapping[str, AlignmentPolicy],
    spec: ChannelSpec,
    mag_maps: MagCoordMaps,
    max_gap: int,
) -> Dataset:
    """
    Stack every channel of ``spec`` onto the TEC frames' time axis.

    Drivers become spatially constant maps; forcing and coordinate maps are
    computed per timestamp.

    Raises:
        FormatError: the TEC stack lacks a ``tec`` channel.
        ConfigError: a driver channel has no series.
        AlignmentError: a driver gap exceeds ``max_gap``.
    """
    if TARGET_CHANNEL not in tec.channels:
        raise FormatError(f"TEC stack has channels {tec.channels}, expected {TARGET_CHANNEL!r}")
    driver_names = spec.names_of("driver")
    missing = [name for name in driver_names if name not in drivers]
    if missing:
        raise ConfigError(f"no driver series for channel(s) {missing}", key="data.drivers")

    _, h, w = tec.shape
    grid = LatLonGrid(h, w)
    n = tec.n_frames
    aligned = align_drivers({name: drivers[name] for name in driver_names}, tec.timestamps, policies, max_gap)

    data = np.empty((n, len(spec.names), h, w), dtype=np.float32)
    for c, descriptor in enumerate(spec.channels):
        if descriptor.kind == "target":
            data[:, c] = tec.channel(TARGET_CHANNEL)
        elif descriptor.kind == "driver":
            data[:, c] = aligned.column(descriptor.name)[:, None, None]
        elif descriptor.kind == "coordinate":
            data[:, c] = mag_maps.channel(descriptor.name)[None]
    forcing = spec.forcing_indices
    if forcing:
        for i, t in enumerate(tec.timestamps):
            data[i, forcing] = forcing_frame(int(t), grid, spec.forcing_names).stack()

    if not np.isfinite(data).all():
        bad = sorted({spec.names[c] for c in np.argwhere(~np.isfinite(data))[:, 1]})
        raise FormatError(f"non-finite values in assembled channel(s) {bad}")
    stack = GridStack(channels=spec.names, cadence=tec.cadence, timestamps=tec.timestamps, data=data)
    logger.info("dataset_assembled", frames=n, channels=len(spec.names), height=h, width=w)
    return Dataset(stack, spec)


def ingest_files(config: DataConfig, spec: ChannelSpec) -> IngestResult:
    """
    Build the model-ready dataset from a TEC IONGRID, driver CSV/schema
    pairs and an event catalog, and write it to ``config.dataset_path``.
    """
    if not config.tec_path:
        raise ConfigError("ingest requires data.tec_path", key="data.tec_path")
    tec = read_grid_stack(Path(config.tec_path))
    series: dict[str, DriverSeries] = {}
    policies: dict[str, AlignmentPolicy] = {}
    for source in config.drivers:
        schema = read_schema(Path(source.schema_path))
        series[source.name] = read_driver_csv(Path(source.csv), schema, name=source.name)
        policies[source.name] = schema.policy
    grid = LatLonGrid(tec.shape[1], tec.shape[2])
    dataset = assemble_dataset(tec, series, policies, spec, mag_coord_maps(grid, config), config.max_gap_seconds)
    catalog = read_event_csv(Path(config.events_path))
    write_grid_stack(Path(config.dataset_path), dataset.stack)
    logger.info("ingest_complete", dataset=config.dataset_path, events=len(catalog))
    return IngestResult(dataset=dataset, catalog=catalog)
