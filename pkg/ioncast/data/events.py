"""
Geomagnetic event catalog and storm-event holdout splits.

Catalog CSV: ``start,end,g_level`` with ISO-8601 UTC times and levels
written ``G0``..``G5`` (bare integers are accepted on read).

Holdout: per G-level, ceil(fraction * n) events go to test and, when
enough events remain, the same number to validation; the rest train.
Training masks exclude every held-out event widened by a margin on both
sides, so no training sequence context touches a held-out storm.
"""
from __future__ import annotations

import csv
import math
from collections import Counter
from collections.abc import Iterator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from ioncast.errors import ArgumentError, FormatError, IngestError, SplitError
from ioncast.logging_config import get_logger
from ioncast.timeutil import format_time, parse_time

logger = get_logger(__name__)

SplitName = Literal["train", "val", "test"]
G_LEVELS = range(6)


def g_level_from_kp(kp: float) -> int:
    """NOAA G-scale from a Kp value (Kp 5 -> G1 ... Kp 9 -> G5)."""
    return int(np.clip(math.floor(kp + 1e-9) - 4, 0, 5))


@dataclass(frozen=True, order=True)
class Event:
    start: int
    end: int
    g_level: int

    @property
    def duration(self) -> int:
        return self.end - self.start

    def overlaps(self, other: Event) -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass
class EventCatalog:
    """Events sorted by start time, non-overlapping after normalize()."""

    events: list[Event] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def normalize(self) -> EventCatalog:
        """Sort and merge overlapping events, keeping the higher G-level."""
        merged: list[Event] = []
        for event in sorted(self.events):
            if merged and merged[-1].overlaps(event):
                last = merged[-1]
                merged[-1] = Event(last.start, max(last.end, event.end), max(last.g_level, event.g_level))
            else:
                merged.append(event)
        return EventCatalog(events=merged)

    def by_level(self) -> dict[int, list[int]]:
        """Event indices per G-level, in catalog order."""
        levels: dict[int, list[int]] = {}
        for index, event in enumerate(self.events):
            levels.setdefault(event.g_level, []).append(index)
        return levels

    def summary(self) -> list[dict[str, float]]:
        """Count and total duration (hours) per G-level present."""
        counts = Counter(e.g_level for e in self.events)
        hours: dict[int, float] = {}
        for event in self.events:
            hours[event.g_level] = hours.get(event.g_level, 0.0) + event.duration / 3600.0
        return [
            {"g_level": f"G{level}", "events": counts[level], "hours": round(hours[level], 3)}
            for level in sorted(counts)
        ]

    def within(self, start: int, end: int) -> EventCatalog:
        """Events fully inside [start, end]."""
        return EventCatalog(events=[e for e in self.events if e.start >= start and e.end <= end])


def _parse_level(text: str) -> int:
    cleaned = text.strip().upper()
    if cleaned.startswith("G"):
        cleaned = cleaned[1:]
    level = int(cleaned)
    if level not in G_LEVELS:
        raise ValueError(f"G-level {text!r} outside G0..G5")
    return level


def read_event_csv(path: Path) -> EventCatalog:
    """
    Read a ``start,end,g_level`` catalog.

    Raises:
        FormatError: missing header.
        IngestError: unparseable row or end before start (with line number).
    """
    events: list[Event] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["start", "end", "g_level"]:
            raise FormatError(f"{path}: expected header 'start,end,g_level', got {header}")
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                event = Event(parse_time(row[0]), parse_time(row[1]), _parse_level(row[2]))
            except (ValueError, IndexError, ArgumentError) as exc:
                raise IngestError(f"{path}:{reader.line_num}: cannot parse event {row!r}: {exc}") from exc
            if event.end < event.start:
                raise IngestError(f"{path}:{reader.line_num}: event ends before it starts")
            events.append(event)
    return EventCatalog(events=events).normalize()


def write_event_csv(path: Path, catalog: EventCatalog) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["start", "end", "g_level"])
        for event in catalog.events:
            writer.writerow([format_time(event.start), format_time(event.end), f"G{event.g_level}"])


@dataclass
class SplitSpec:
    """Per-event split assignment plus the timestamp masks derived from it."""

    catalog: EventCatalog
    assignments: list[SplitName]
    margin_seconds: int
    seed: int
    holdout_fraction: float
    train_window: tuple[int, int] | None = None

    def events_in(self, split: SplitName) -> list[Event]:
        return [e for e, a in zip(self.catalog.events, self.assignments) if a == split]

    def event_indices(self, split: SplitName) -> list[int]:
        return [i for i, a in enumerate(self.assignments) if a == split]

    def held_out(self) -> list[Event]:
        return [e for e, a in zip(self.catalog.events, self.assignments) if a != "train"]

    def train_mask(self, timestamps: np.ndarray) -> np.ndarray:
        """True where a timestamp may be used for training."""
        t = np.asarray(timestamps, dtype=np.int64)
        mask = np.ones(t.shape, dtype=bool)
        for event in self.held_out():
            mask &= ~((t >= event.start - self.margin_seconds) & (t <= event.end + self.margin_seconds))
        if self.train_window is not None:
            mask &= (t >= self.train_window[0]) & (t <= self.train_window[1])
        return mask

    def split_mask(self, timestamps: np.ndarray, split: SplitName) -> np.ndarray:
        """True inside the events of a held-out split (no margin)."""
        if split == "train":
            return self.train_mask(timestamps)
        t = np.asarray(timestamps, dtype=np.int64)
        mask = np.zeros(t.shape, dtype=bool)
        for event in self.events_in(split):
            mask |= (t >= event.start) & (t <= event.end)
        return mask

    def with_train_window(self, start: int, end: int) -> SplitSpec:
        return SplitSpec(
            catalog=self.catalog,
            assignments=list(self.assignments),
            margin_seconds=self.margin_seconds,
            seed=self.seed,
            holdout_fraction=self.holdout_fraction,
            train_window=(start, end),
        )

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "holdout_fraction": self.holdout_fraction,
            "margin_seconds": self.margin_seconds,
            "train_window": list(self.train_window) if self.train_window else None,
            "events": [
                {"start": format_time(e.start), "end": format_time(e.end), "g_level": f"G{e.g_level}", "split": a}
                for e, a in zip(self.catalog.events, self.assignments)
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> SplitSpec:
        events = [
            Event(parse_time(item["start"]), parse_time(item["end"]), _parse_level(item["g_level"]))
            for item in payload["events"]
        ]
        window = payload.get("train_window")
        return cls(
            catalog=EventCatalog(events=events),
            assignments=[item["split"] for item in payload["events"]],
            margin_seconds=int(payload["margin_seconds"]),
            seed=int(payload["seed"]),
            holdout_fraction=float(payload["holdout_fraction"]),
            train_window=(int(window[0]), int(window[1])) if window else None,
        )


def build_splits(
    catalog: EventCatalog,
    holdout_fraction: float,
    seed: int,
    margin_seconds: int = 0,
) -> SplitSpec:
    """
    Assign events to train/val/test per G-level.

    Args:
        catalog: Events (normalized internally).
        holdout_fraction: Fraction of each level's events sent to test.
        seed: Seed of the per-level shuffle.
        margin_seconds: Widening of held-out events in the training mask,
            normally (context + horizon) x cadence.

    Raises:
        SplitError: empty catalog or fraction outside (0, 1).
    """
    if not 0 < holdout_fraction < 1:
        raise SplitError(f"holdout_fraction must be in (0, 1), got {holdout_fraction}")
    catalog = catalog.normalize()
    if len(catalog) == 0:
        raise SplitError("event catalog is empty; cannot derive storm holdout splits")

    rng = np.random.default_rng(seed)
    assignments: list[SplitName] = ["train"] * len(catalog)
    for level, indices in sorted(catalog.by_level().items()):
        order = [indices[i] for i in rng.permutation(len(indices))]
        n = len(order)
        n_test = math.ceil(holdout_fraction * n - 1e-9)
        n_val = max(0, min(n_test, n - n_test - 1))
        for index in order[:n_test]:
            assignments[index] = "test"
        for index in order[n_test : n_test + n_val]:
            assignments[index] = "val"
        if n_val < n_test:
            logger.warning("validation_holdout_short", g_level=f"G{level}", events=n, test=n_test, val=n_val)
        logger.debug("split_level", g_level=f"G{level}", events=n, test=n_test, val=n_val)

    return SplitSpec(
        catalog=catalog,
        assignments=assignments,
        margin_seconds=margin_seconds,
        seed=seed,
        holdout_fraction=holdout_fraction,
    )
