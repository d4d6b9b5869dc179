"""
Experiment runners built on ``train`` and ``evaluate``.

    run_ablation               one model per input group and seed, 12-hour
                               rollouts on validation events, mean +- std
                               pooled over seeds and events
    run_date_range_experiment  one model per training window with equal
                               sequence counts, per-G-level RMSE on test events

Jobs are independent; with more than one worker they run in separate
processes and results are collected in submission order.
"""
from __future__ import annotations

import re
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ioncast.config import (
    COORDINATE_CHANNELS,
    DRIVER_CHANNELS,
    FORCING_CHANNELS,
    DateRange,
    RunConfig,
    parse_run_config,
)
from ioncast.data.dataset import Dataset, select_channels, sequence_starts
from ioncast.data.events import EventCatalog, SplitName
from ioncast.data.iongrid import GridStack
from ioncast.errors import ConfigError, SamplingError
from ioncast.logging_config import get_logger
from ioncast.models import load_checkpoint, model_from_checkpoint
from ioncast.services.evaluation import evaluate, lead_steps_for_hours, model_forecast
from ioncast.services.reports import write_table
from ioncast.services.training import make_splits, run_channel_spec, train, training_starts

logger = get_logger(__name__)

ABLATION_HOURS = 12.0


@dataclass(frozen=True)
class AblationGroup:
    """Input channels of one ablation row; the target is always included."""

    name: str
    drivers: tuple[str, ...] = ()
    coordinates: tuple[str, ...] = ()
    forcings: tuple[str, ...] = ()
    residual_target: bool = True

    @property
    def slug(self) -> str:
        return re.sub(r"[^a-z0-9]+", "_", self.name.lower()).strip("_")


ABLATION_PLAN: list[AblationGroup] = [
    AblationGroup("JPLD"),
    AblationGroup("JPLD + F10.7", drivers=("f107",)),
    AblationGroup("JPLD + F10.7, S10.7, M10.7, JB2008", drivers=("f107", "s107", "m107", "y107")),
    AblationGroup("JPLD + Ap & Kp", drivers=("kp", "ap")),
    AblationGroup("JPLD + Bx/By/Bz & vx/vy/vz (Omniweb)", drivers=("bx", "by", "bz", "vx", "vy", "vz")),
    AblationGroup(
        "JPLD + Orbital Mechanics + Quasi-Dipole",
        coordinates=tuple(COORDINATE_CHANNELS),
        forcings=tuple(FORCING_CHANNELS),
    ),
    AblationGroup(
        "JPLD + All (Non-Residual Target)",
        drivers=tuple(DRIVER_CHANNELS),
        coordinates=tuple(COORDINATE_CHANNELS),
        forcings=tuple(FORCING_CHANNELS),
        residual_target=False,
    ),
    AblationGroup(
        "JPLD + All",
        drivers=tuple(DRIVER_CHANNELS),
        coordinates=tuple(COORDINATE_CHANNELS),
        forcings=tuple(FORCING_CHANNELS),
    ),
]

ABLATION_COLUMNS = ["group", "residual_target", "channels", "seeds", "events", "rmse_mean", "rmse_std"]
DATE_RANGE_COLUMNS = ["range", "start", "end", "sequences", "g_level", "events", "rmse"]


def select_groups(names: Sequence[str]) -> list[AblationGroup]:
    """Plan rows by name (all rows when ``names`` is empty)."""
    if not names:
        return list(ABLATION_PLAN)
    known = {group.name: group for group in ABLATION_PLAN}
    unknown = [name for name in names if name not in known]
    if unknown:
        raise ConfigError(f"unknown ablation group(s) {unknown}; known: {list(known)}", key="eval.ablation_groups")
    return [known[name] for name in names]


def _ordered(names: Sequence[str], canonical: list[str]) -> list[str]:
    return [name for name in canonical if name in names]


def group_config(run: RunConfig, group: AblationGroup, seed: int) -> RunConfig:
    """Run config of one ablation job: the group's channels, residual flag and seed."""
    raw = run.echo()
    raw["data"]["channels"] = {
        "drivers": _ordered(group.drivers, DRIVER_CHANNELS),
        "coordinates": _ordered(group.coordinates, COORDINATE_CHANNELS),
        "forcings": _ordered(group.forcings, FORCING_CHANNELS),
    }
    raw["model"]["residual_target"] = group.residual_target
    raw["train"]["seed"] = seed
    return parse_run_config(raw)


@dataclass
class ExperimentJob:
    name: str
    run: RunConfig
    stack: GridStack
    catalog: EventCatalog
    out_dir: Path
    split: SplitName
    horizon: int | None = None


@dataclass
class JobResult:
    name: str
    seed: int
    sequences: int
    event_rmse: list[float] = field(default_factory=list)
    event_levels: list[int] = field(default_factory=list)


def run_job(job: ExperimentJob) -> JobResult:
    """Train and score one model. Top-level so worker processes can import it."""
    spec = run_channel_spec(job.run)
    dataset = Dataset(select_channels(job.stack, spec.names), spec)
    result = train(job.run, dataset, job.catalog, job.out_dir)
    model = result.model
    if result.best_path is not None:
        model = model_from_checkpoint(load_checkpoint(result.best_path, expected_spec=spec), dataset.grid)

    split = job.split
    if not result.splits.event_indices(split):
        logger.warning("experiment_split_empty", job=job.name, split=split, fallback="test")
        split = "test"
    config = job.run.eval.model_copy(update={"hexbin_max": 0, "events": []})
    report = evaluate(
        model_forecast(model),
        dataset,
        result.splits,
        model.context_len,
        config,
        split=split,
        horizon=job.horizon,
        baseline=False,
        seed=job.run.train.seed,
    )
    return JobResult(
        name=job.name,
        seed=job.run.train.seed,
        sequences=int(training_starts(job.run, dataset, result.splits).size),
        event_rmse=[score.rmse for score in report.events],
        event_levels=[score.event.g_level for score in report.events],
    )


def run_jobs(jobs: list[ExperimentJob], threads: int = 1) -> list[JobResult]:
    if threads <= 1 or len(jobs) <= 1:
        return [run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        return list(pool.map(run_job, jobs))


def run_ablation(
    run: RunConfig,
    dataset: Dataset,
    catalog: EventCatalog,
    out_dir: Path,
    groups: Sequence[AblationGroup] | None = None,
    seeds: Sequence[int] | None = None,
    threads: int = 1,
) -> list[dict[str, Any]]:
    """
    Train every group under every seed and score 12-hour rollouts on validation events.

    Args:
        dataset: Dataset holding every channel any group needs.
        groups: Plan rows; the configured ``eval.ablation_groups`` (or all) by default.
        seeds: Training seeds; ``eval.ablation_seeds`` by default.
        threads: Worker processes.

    Returns:
        One row per group, in plan order; also written to ``ablation.csv``.
    """
    groups = list(groups) if groups is not None else select_groups(run.eval.ablation_groups)
    seeds = list(seeds) if seeds is not None else list(run.eval.ablation_seeds)
    horizon = lead_steps_for_hours(ABLATION_HOURS, dataset.cadence)
    jobs = [
        ExperimentJob(
            name=group.name,
            run=group_config(run, group, seed),
            stack=dataset.stack,
            catalog=catalog,
            out_dir=out_dir / group.slug / f"seed_{seed}",
            split="val",
            horizon=horizon,
        )
        for group in groups
        for seed in seeds
    ]
    logger.info("ablation_started", groups=len(groups), seeds=len(seeds), jobs=len(jobs), threads=threads)
    results = run_jobs(jobs, threads)

    rows = []
    for group in groups:
        pooled = [value for r in results if r.name == group.name for value in r.event_rmse]
        spec = run_channel_spec(group_config(run, group, seeds[0]))
        rows.append(
            {
                "group": group.name,
                "residual_target": group.residual_target,
                "channels": ";".join(spec.names),
                "seeds": len(seeds),
                "events": len(pooled),
                "rmse_mean": float(np.mean(pooled)) if pooled else float("nan"),
                "rmse_std": float(np.std(pooled)) if pooled else float("nan"),
            }
        )
        logger.info("ablation_row", group=group.name, rmse_mean=rows[-1]["rmse_mean"], rmse_std=rows[-1]["rmse_std"])
    write_table(out_dir / "ablation.csv", ABLATION_COLUMNS, rows)
    return rows


def equal_sample_count(run: RunConfig, dataset: Dataset, catalog: EventCatalog, ranges: Sequence[DateRange | None]) -> int:
    """
    Largest sequence count every training window can supply.

    Raises:
        ConfigError: a window holds no training sequence.
    """
    counts = []
    for date_range in ranges:
        raw = run.echo()
        raw["train"]["date_range"] = date_range.model_dump() if date_range else None
        raw["train"]["sample_count"] = None
        raw["train"]["dilation"] = 1
        candidate = parse_run_config(raw)
        splits = make_splits(candidate, dataset, catalog)
        try:
            starts = sequence_starts(
                dataset,
                context=candidate.model.context_len,
                horizon=1,
                dilation=1,
                mask=splits.train_mask(dataset.timestamps),
            )
        except SamplingError as exc:
            name = date_range.name if date_range else "full"
            raise ConfigError(f"date range {name!r} has no training sequences: {exc}", key="eval.date_ranges") from exc
        counts.append(int(starts.size))
    count = min(counts)
    if run.train.sample_count is not None:
        count = min(count, run.train.sample_count)
    return count


def run_date_range_experiment(
    run: RunConfig,
    dataset: Dataset,
    catalog: EventCatalog,
    out_dir: Path,
    ranges: Sequence[DateRange] | None = None,
    threads: int = 1,
) -> list[dict[str, Any]]:
    """
    One model per training window plus a full-range model, each trained on
    the same number of sequences, scored per G-level on test events.

    Returns:
        Rows (range x G-level, plus an "all" level per range); also written
        to ``date_ranges.csv``.
    """
    ranges = list(ranges) if ranges is not None else list(run.eval.date_ranges)
    windows: list[DateRange | None] = [None, *ranges]
    count = equal_sample_count(run, dataset, catalog, windows)

    jobs = []
    for window in windows:
        raw = run.echo()
        raw["train"]["date_range"] = window.model_dump() if window else None
        raw["train"]["sample_count"] = count
        name = window.name if window else "full"
        jobs.append(
            ExperimentJob(
                name=name,
                run=parse_run_config(raw),
                stack=dataset.stack,
                catalog=catalog,
                out_dir=out_dir / re.sub(r"[^A-Za-z0-9]+", "_", name),
                split="test",
            )
        )
    logger.info("date_range_experiment_started", ranges=len(jobs), sequences=count, threads=threads)
    results = run_jobs(jobs, threads)

    rows = []
    for window, result in zip(windows, results):
        base = {
            "range": result.name,
            "start": window.start if window else "",
            "end": window.end if window else "",
            "sequences": result.sequences,
        }
        levels = sorted(set(result.event_levels))
        for level in levels:
            values = [v for v, lv in zip(result.event_rmse, result.event_levels) if lv == level]
            rows.append({**base, "g_level": f"G{level}", "events": len(values), "rmse": float(np.mean(values))})
        rows.append(
            {
                **base,
                "g_level": "all",
                "events": len(result.event_rmse),
                "rmse": float(np.mean(result.event_rmse)) if result.event_rmse else float("nan"),
            }
        )
    write_table(out_dir / "date_ranges.csv", DATE_RANGE_COLUMNS, rows)
    return rows
