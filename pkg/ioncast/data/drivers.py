"""
Driver time series: CSV ingestion, schema files and cadence alignment.

Driver CSV:
    header ``timestamp,value``; ISO-8601 UTC timestamps, strictly increasing.

Schema file (key = value per line, ``#`` comments):
    units     = nT
    sentinel  = 9999.99
    cadence   = 3600
    policy    = linear | hold-previous

Alignment maps every series onto the map cadence. hold-previous only ever
reads samples at or before the query time, which keeps daily and 3-hourly
indices causal; linear interpolates between the bracketing valid samples.
"""
from __future__ import annotations

import csv
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ioncast.errors import AlignmentError, ArgumentError, FormatError, IngestError
from ioncast.logging_config import get_logger
from ioncast.metrics import record_format_error
from ioncast.timeutil import format_time, parse_time

logger = get_logger(__name__)

AlignmentPolicy = Literal["hold-previous", "linear"]


class DriverSchema(BaseModel):
    """Per-series metadata read from a schema file."""

    model_config = ConfigDict(extra="forbid")

    units: str = ""
    sentinel: float | None = None
    cadence: int = Field(default=3600, gt=0)
    policy: AlignmentPolicy = "hold-previous"


@dataclass
class DriverSeries:
    """One scalar driver; gaps are NaN."""

    name: str
    timestamps: np.ndarray  # int64, strictly increasing
    values: np.ndarray  # float64
    units: str = ""
    cadence: int = 3600

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])


@dataclass
class AlignedDrivers:
    """Driver vectors on a regular time axis."""

    names: list[str]
    timestamps: np.ndarray  # int64 [T]
    values: np.ndarray  # float64 [T x D]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def read_schema(path: Path) -> DriverSchema:
    """Parse a key = value schema file."""
    entries: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise IngestError(f"{path}:{line_no}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in text.split("=", 1))
        entries[key] = value
    try:
        return DriverSchema.model_validate(entries)
    except ValidationError as exc:
        raise IngestError(f"{path}: invalid schema: {exc.errors()[0]['msg']}") from exc


def write_schema(path: Path, schema: DriverSchema) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"units = {schema.units}", f"cadence = {schema.cadence}", f"policy = {schema.policy}"]
    if schema.sentinel is not None:
        lines.insert(1, f"sentinel = {schema.sentinel}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_driver_csv(path: Path, schema: DriverSchema, name: str | None = None) -> DriverSeries:
    """
    Read a ``timestamp,value`` CSV.

    Sentinel values and empty cells become NaN gaps.

    Raises:
        IngestError: a row cannot be parsed (message carries the line number).
        FormatError: missing header or timestamps not strictly increasing.
    """
    path = Path(path)
    times: list[int] = []
    values: list[float] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["timestamp", "value"]:
            record_format_error("driver_csv")
            raise FormatError(f"{path}: expected header 'timestamp,value', got {header}")
        for row in reader:
            line_no = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise IngestError(f"{path}:{line_no}: expected 2 columns, got {len(row)}")
            try:
                t = parse_time(row[0])
                text = row[1].strip()
                value = float(text) if text else float("nan")
            except (ValueError, ArgumentError) as exc:
                raise IngestError(f"{path}:{line_no}: cannot parse row {row!r}: {exc}") from exc
            if schema.sentinel is not None and np.isclose(value, schema.sentinel):
                value = float("nan")
            if times and t <= times[-1]:
                record_format_error("driver_csv")
                raise FormatError(
                    f"{path}:{line_no}: timestamp {format_time(t)} not after previous {format_time(times[-1])}"
                )
            times.append(t)
            values.append(value)
    series = DriverSeries(
        name=name or path.stem,
        timestamps=np.asarray(times, dtype=np.int64),
        values=np.asarray(values, dtype=np.float64),
        units=schema.units,
        cadence=schema.cadence,
    )
    logger.debug("driver_series_read", name=series.name, rows=len(series), gaps=int(np.isnan(series.values).sum()))
    return series


def write_driver_csv(path: Path, series: DriverSeries, sentinel: float | None = None) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["timestamp", "value"])
        for t, value in zip(series.timestamps, series.values):
            if np.isnan(value):
                cell = "" if sentinel is None else repr(float(sentinel))
            else:
                cell = repr(float(value))
            writer.writerow([format_time(int(t)), cell])


def _align_one(
    series: DriverSeries,
    grid_times: np.ndarray,
    policy: AlignmentPolicy,
    max_gap: int,
) -> np.ndarray:
    valid = ~np.isnan(series.values)
    times = series.timestamps[valid]
    values = series.values[valid]
    if times.size == 0:
        raise AlignmentError(f"driver {series.name!r} has no valid samples")

    # last valid sample at or before each query time
    prev = np.searchsorted(times, grid_times, side="right") - 1
    before_start = prev < 0
    if before_start.any():
        first_bad = grid_times[before_start][0]
        raise AlignmentError(
            f"driver {series.name!r} has no sample at or before {format_time(first_bad)}; "
            f"first valid sample is {format_time(times[0])}"
        )
    age = grid_times - times[prev]

    if policy == "hold-previous":
        stale = age > max_gap
        if stale.any():
            i = int(np.flatnonzero(stale)[0])
            raise AlignmentError(
                f"driver {series.name!r}: gap from {format_time(times[prev[i]])} to "
                f"{format_time(grid_times[i])} exceeds {max_gap} s"
            )
        return values[prev]

    # past the last sample there is nothing to interpolate towards: hold it
    nxt = np.minimum(prev + 1, times.size - 1)
    exact = (age == 0) | (prev == times.size - 1)
    span = np.where(prev == times.size - 1, age, times[nxt] - times[prev])
    too_wide = (span > max_gap) & (age != 0)
    if too_wide.any():
        i = int(np.flatnonzero(too_wide)[0])
        raise AlignmentError(
            f"driver {series.name!r}: gap from {format_time(times[prev[i]])} to "
            f"{format_time(times[nxt[i]])} exceeds {max_gap} s"
        )
    frac = np.where(exact, 0.0, age / np.where(span == 0, 1, span))
    return values[prev] + frac * (values[nxt] - values[prev])


def align_drivers(
    series: Mapping[str, DriverSeries],
    timestamps: Sequence[int] | np.ndarray,
    policies: Mapping[str, AlignmentPolicy],
    max_gap: int,
) -> AlignedDrivers:
    """
    Resample every series onto ``timestamps``.

    Args:
        series: Driver series keyed by channel name.
        timestamps: Target time axis (the map cadence).
        policies: Alignment policy per series (default hold-previous).
        max_gap: Longest tolerated distance in seconds between the query
            and the sample it uses (hold) or between bracketing samples (linear).

    Raises:
        AlignmentError: a gap exceeds ``max_gap``; the message names the interval.
    """
    grid_times = np.asarray(timestamps, dtype=np.int64)
    names = list(series)
    columns = [
        _align_one(series[name], grid_times, policies.get(name, "hold-previous"), max_gap) for name in names
    ]
    values = np.stack(columns, axis=1) if columns else np.zeros((grid_times.size, 0))
    return AlignedDrivers(names=names, timestamps=grid_times, values=values)
