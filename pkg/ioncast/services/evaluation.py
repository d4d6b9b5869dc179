"""
Forecast verification over held-out storm events.

Every event of the evaluated split is forecast from each admissible start:
a timestamp inside the event window whose context frames and horizon
frames all exist at exactly the cadence. Errors are taken on the target
channel in physical units (TECU) and accumulated per lead, per latitude
band, per event and per G-level. Scoring any frame that the training
mask admits is refused.
"""
from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from ioncast.config import EvalConfig
from ioncast.data.dataset import Dataset, candidate_starts
from ioncast.data.events import Event, SplitName, SplitSpec
from ioncast.errors import EvaluationError
from ioncast.forcings.maps import ForcingProvider
from ioncast.logging_config import get_logger
from ioncast.mesh.grid import LatLonGrid
from ioncast.models.base import Forecaster, RolloutPlan, persistence_forecast
from ioncast.timeutil import format_time

logger = get_logger(__name__)

Forecast = Callable[[RolloutPlan], np.ndarray]

# (lower exclusive, upper inclusive) bounds on |latitude|; the low band includes the equator
BANDS: dict[str, tuple[float, float]] = {"low": (-1.0, 30.0), "mid": (30.0, 60.0), "high": (60.0, 90.0)}


def band_rows(grid: LatLonGrid) -> dict[str, np.ndarray]:
    """Boolean row masks [n_lat] of the three latitude bands."""
    lat = np.abs(grid.latitudes)
    return {name: (lat > lo) & (lat <= hi) for name, (lo, hi) in BANDS.items()}


def row_weights(grid: LatLonGrid, area_weighted: bool) -> np.ndarray:
    """Per-row weights [n_lat]: cos(latitude) when area weighting, ones otherwise."""
    if area_weighted:
        return np.cos(np.radians(grid.latitudes))
    return np.ones(grid.n_lat)


def lead_steps_for_hours(hours: float, cadence: int) -> int:
    return max(1, int(round(hours * 3600.0 / cadence)))


def model_forecast(model: Forecaster) -> Forecast:
    """Rollout function of a model in evaluation mode."""
    model.eval()
    return model.rollout


def persistence(dataset: Dataset) -> Forecast:
    spec = dataset.spec
    return lambda plan: persistence_forecast(plan, spec)


@dataclass
class ErrorAccumulator:
    """Weighted squared-error sums of the target channel."""

    horizon: int
    n_bands: int = len(BANDS)
    sse: np.ndarray = field(init=False)
    weight: np.ndarray = field(init=False)
    band_sse: np.ndarray = field(init=False)
    band_weight: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.sse = np.zeros(self.horizon)
        self.weight = np.zeros(self.horizon)
        self.band_sse = np.zeros((self.n_bands, self.horizon))
        self.band_weight = np.zeros((self.n_bands, self.horizon))

    def add(self, pred: np.ndarray, truth: np.ndarray, weights: np.ndarray, bands: list[np.ndarray]) -> None:
        """pred/truth [k x H x W]; weights [H]; bands are row masks."""
        err = (pred.astype(np.float64) - truth.astype(np.float64)) ** 2
        rows = err.sum(axis=2)  # [k x H]
        n_lon = err.shape[2]
        self.sse += rows @ weights
        self.weight += weights.sum() * n_lon
        for b, mask in enumerate(bands):
            self.band_sse[b] += rows[:, mask] @ weights[mask]
            self.band_weight[b] += weights[mask].sum() * n_lon

    def merge(self, other: ErrorAccumulator) -> None:
        self.sse += other.sse
        self.weight += other.weight
        self.band_sse += other.band_sse
        self.band_weight += other.band_weight

    def rmse_by_lead(self) -> np.ndarray:
        return np.sqrt(self.sse / np.maximum(self.weight, 1e-300))

    def rmse_by_band(self) -> np.ndarray:
        return np.sqrt(self.band_sse / np.maximum(self.band_weight, 1e-300))

    def rmse(self) -> float:
        """Pooled over every lead."""
        return float(np.sqrt(self.sse.sum() / max(self.weight.sum(), 1e-300)))


@dataclass
class EventScore:
    index: int
    event: Event
    starts: int
    rmse: float  # pooled over all leads
    rmse_by_lead: np.ndarray


@dataclass
class MetricReport:
    """Lead-time and latitude-band RMSE of one forecaster over a set of events (TECU)."""

    cadence: int
    leads: np.ndarray  # [k] lead steps 1..k
    rmse_by_lead: np.ndarray  # [k]
    rmse_by_band: dict[str, np.ndarray]  # band -> [k]
    events: list[EventScore]
    hexbin: np.ndarray  # [n x 3] truth, prediction, lead
    n_starts: int
    area_weighted: bool
    persistence_by_lead: np.ndarray | None = None
    persistence_by_band: dict[str, np.ndarray] | None = None

    @property
    def lead_hours(self) -> np.ndarray:
        return self.leads * self.cadence / 3600.0

    def rmse_at_hours(self, hours: float) -> float:
        k = lead_steps_for_hours(hours, self.cadence)
        if k > len(self.leads):
            return float("nan")
        return float(self.rmse_by_lead[k - 1])

    def mean_rmse(self, first_lead: int = 1, last_lead: int | None = None) -> float:
        """Mean of the per-lead RMSE over leads first..last (1-based, inclusive)."""
        last = last_lead or len(self.leads)
        return float(np.mean(self.rmse_by_lead[first_lead - 1 : last]))

    def by_level(self) -> dict[int, dict[str, float]]:
        """Per-G-level event count, start count and mean per-event RMSE."""
        levels: dict[int, list[EventScore]] = {}
        for score in self.events:
            levels.setdefault(score.event.g_level, []).append(score)
        return {
            level: {
                "events": float(len(scores)),
                "starts": float(sum(s.starts for s in scores)),
                "rmse": float(np.mean([s.rmse for s in scores])),
            }
            for level, scores in sorted(levels.items())
        }


def event_starts(
    dataset: Dataset,
    event: Event,
    context: int,
    horizon: int,
    stride: int = 1,
) -> np.ndarray:
    """Indices of the first context frame of every admissible rollout for an event."""
    first = candidate_starts(dataset, context + horizon, np.ones(len(dataset), dtype=bool))
    if first.size == 0:
        return first
    last_context = dataset.timestamps[first + context - 1]
    inside = (last_context >= event.start) & (last_context <= event.end)
    return first[inside][::stride]


def _check_leaks(dataset: Dataset, train_mask: np.ndarray, start: int, length: int, event: Event) -> None:
    leaked = np.flatnonzero(train_mask[start : start + length])
    if leaked.size:
        t = int(dataset.timestamps[start + leaked[0]])
        raise EvaluationError(
            f"evaluation window of event {format_time(event.start)}..{format_time(event.end)} "
            f"uses {format_time(t)}, which the training mask admits"
        )


def select_events(splits: SplitSpec, split: SplitName, requested: list[int] | None) -> list[int]:
    """
    Event indices to score.

    Raises:
        EvaluationError: a requested event is not part of ``split``.
    """
    allowed = splits.event_indices(split)
    if not requested:
        return allowed
    foreign = [i for i in requested if i not in allowed]
    if foreign:
        raise EvaluationError(f"event(s) {foreign} are not in the {split} split (allowed: {allowed})")
    return sorted(set(requested))


def evaluate(
    forecast: Forecast,
    dataset: Dataset,
    splits: SplitSpec,
    context: int,
    config: EvalConfig,
    split: SplitName = "test",
    events: list[int] | None = None,
    horizon: int | None = None,
    baseline: bool = True,
    seed: int = 0,
) -> MetricReport:
    """
    Score ``forecast`` on held-out events.

    Args:
        forecast: Rollout function (see ``model_forecast`` and ``persistence``).
        context: Context frames the forecaster consumes.
        config: Horizon, area weighting, start stride/limit and hexbin size.
        split: Held-out split the events must belong to.
        events: Event indices of the split; all of them when empty.
        horizon: Overrides ``config.horizon``.
        baseline: Also score persistence on the same starts.
        seed: Seed of the hexbin subsample.

    Raises:
        EvaluationError: an event outside the split, a window touching the
            training mask, or no admissible start at all.
    """
    horizon = horizon or config.horizon
    indices = select_events(splits, split, events if events is not None else config.events)
    train_mask = splits.train_mask(dataset.timestamps)
    grid = dataset.grid
    weights = row_weights(grid, config.area_weighted)
    bands = list(band_rows(grid).values())
    target = dataset.spec.target_index
    provider = ForcingProvider(grid, dataset.spec.forcing_names)
    baseline_forecast = persistence(dataset) if baseline else None

    plans: list[tuple[int, Event, np.ndarray]] = []
    for index in indices:
        event = splits.catalog.events[index]
        starts = event_starts(dataset, event, context, horizon, config.start_stride)
        if config.max_starts is not None:
            starts = starts[: config.max_starts]
        if starts.size == 0:
            logger.warning("event_without_starts", event_index=index, start=format_time(event.start))
            continue
        for start in starts:
            _check_leaks(dataset, train_mask, int(start), context + horizon, event)
        plans.append((index, event, starts))
    total_starts = sum(int(s.size) for _, _, s in plans)
    if total_starts == 0:
        raise EvaluationError(f"no admissible forecast start in {len(indices)} {split} event(s)")

    rng = np.random.default_rng(seed)
    quota = math.ceil(config.hexbin_max / total_starts) if config.hexbin_max else 0
    overall = ErrorAccumulator(horizon)
    reference = ErrorAccumulator(horizon)
    scores: list[EventScore] = []
    hexbin: list[np.ndarray] = []
    lead_grid = np.broadcast_to(np.arange(1, horizon + 1)[:, None, None], (horizon, *grid.shape))

    for index, event, starts in plans:
        acc = ErrorAccumulator(horizon)
        for start in starts:
            start = int(start)
            window = dataset.window(start, context)
            truth = dataset.window(start + context, horizon)[:, target]
            plan = RolloutPlan(
                window=window,
                last_timestamp=int(dataset.timestamps[start + context - 1]),
                cadence=dataset.cadence,
                horizon=horizon,
                forcings=provider,
            )
            pred = forecast(plan)[:, target]
            acc.add(pred, truth, weights, bands)
            if baseline_forecast is not None:
                reference.add(baseline_forecast(plan)[:, target], truth, weights, bands)
            if quota:
                pick = rng.choice(truth.size, size=min(quota, truth.size), replace=False)
                hexbin.append(
                    np.stack([truth.ravel()[pick], pred.ravel()[pick], lead_grid.ravel()[pick]], axis=1)
                )
        overall.merge(acc)
        scores.append(EventScore(index, event, int(starts.size), acc.rmse(), acc.rmse_by_lead()))
        logger.debug("event_scored", event_index=index, g_level=f"G{event.g_level}", starts=int(starts.size),
                     rmse=round(acc.rmse(), 4))

    triples = np.concatenate(hexbin)[: config.hexbin_max] if hexbin else np.zeros((0, 3))
    band_names = list(BANDS)
    report = MetricReport(
        cadence=dataset.cadence,
        leads=np.arange(1, horizon + 1),
        rmse_by_lead=overall.rmse_by_lead(),
        rmse_by_band=dict(zip(band_names, overall.rmse_by_band())),
        events=scores,
        hexbin=triples,
        n_starts=total_starts,
        area_weighted=config.area_weighted,
    )
    if baseline_forecast is not None:
        report.persistence_by_lead = reference.rmse_by_lead()
        report.persistence_by_band = dict(zip(band_names, reference.rmse_by_band()))
    logger.info("evaluation_completed", split=split, events=len(scores), starts=total_starts,
                mean_rmse=round(report.mean_rmse(), 4))
    return report
