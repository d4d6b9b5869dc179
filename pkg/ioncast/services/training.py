"""
Single-step supervised training.

Pipeline:
    1. Split the event catalog per G-level; held-out events (widened by
       the context + horizon margin) are removed from the training mask
    2. Fit the normalizer on training frames only
    3. Pick training sequences (context + one target frame) under the
       mask, thinned by the dilation or forced to an exact count
    4. Adam on the channel-weighted MSE of the one-step target (residual
       or direct), batches drawn in a seeded order
    5. Every ``val_every`` steps: short rollouts on validation events,
       a log row with RMSE at 1, 6 and 12 hours, checkpoints (latest and
       best validation)

The log CSV has the fixed columns of ``TRAIN_LOG_COLUMNS``; validation
columns are empty on rows without validation.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ioncast.config import RunConfig
from ioncast.data.channels import ChannelSpec
from ioncast.data.dataset import Dataset, sequence_starts
from ioncast.data.events import EventCatalog, SplitSpec, build_splits
from ioncast.data.normalizer import Normalizer, fit_normalizer
from ioncast.errors import ConfigError, EvaluationError, TrainingError
from ioncast.logging_config import get_logger, log_training_step
from ioncast.metrics import record_training_step
from ioncast.models import Checkpoint, Forecaster, build_model, save_checkpoint
from ioncast.models.layers import bind
from ioncast.services.evaluation import evaluate, lead_steps_for_hours, model_forecast
from ioncast.services.losses import loss_weights, weighted_mse
from ioncast.tensor import AdamState, Tensor, adam_step, backward, ops, trace
from ioncast.timeutil import parse_time

logger = get_logger(__name__)

TRAIN_LOG_COLUMNS = ("step", "loss", "val_rmse_1h", "val_rmse_6h", "val_rmse_12h")
VAL_LEAD_HOURS = (1.0, 6.0, 12.0)
CHECKPOINT_NAME = "checkpoint.npz"
BEST_CHECKPOINT_NAME = "best.npz"
# checkpoint "extra" entry holding the dropout generator state
RNG_STATE_KEY = "dropout_rng_state"


def run_channel_spec(run: RunConfig) -> ChannelSpec:
    """Channel spec of a run, loss weights resolved against the architecture defaults."""
    return ChannelSpec.from_config(
        run.data.channels,
        target_weight=run.target_weight,
        driver_weight=run.train.driver_weight,
    )


def split_margin(run: RunConfig, cadence: int) -> int:
    """Seconds by which held-out events are widened in the training mask."""
    val_horizon = lead_steps_for_hours(max(VAL_LEAD_HOURS), cadence)
    return (run.model.context_len + max(run.eval.horizon, val_horizon)) * cadence


def make_splits(run: RunConfig, dataset: Dataset, catalog: EventCatalog) -> SplitSpec:
    splits = build_splits(
        catalog,
        holdout_fraction=run.train.holdout_fraction,
        seed=run.train.seed,
        margin_seconds=split_margin(run, dataset.cadence),
    )
    if run.train.date_range is not None:
        splits = splits.with_train_window(
            parse_time(run.train.date_range.start), parse_time(run.train.date_range.end)
        )
    return splits


def training_starts(run: RunConfig, dataset: Dataset, splits: SplitSpec) -> np.ndarray:
    """First-frame indices of the training sequences (context + 1 frames each)."""
    return sequence_starts(
        dataset,
        context=run.model.context_len,
        horizon=1,
        dilation=run.train.dilation,
        mask=splits.train_mask(dataset.timestamps),
        count=run.train.sample_count,
    )


class BatchSchedule:
    """Seeded epoch permutations of the training starts, consumed batch by batch."""

    def __init__(self, starts: np.ndarray, batch_size: int, seed: int) -> None:
        self.starts = np.asarray(starts)
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._order = np.zeros(0, dtype=np.int64)
        self._cursor = 0

    def _take(self) -> int:
        if self._cursor >= self._order.size:
            self._order = self.rng.permutation(self.starts.size)
            self._cursor = 0
        value = int(self.starts[self._order[self._cursor]])
        self._cursor += 1
        return value

    def next_batch(self) -> list[int]:
        return [self._take() for _ in range(self.batch_size)]

    def skip(self, batches: int) -> None:
        for _ in range(batches):
            self.next_batch()


@dataclass
class TrainResult:
    model: Forecaster
    splits: SplitSpec
    checkpoint_path: Path
    log_path: Path
    step: int
    best_path: Path | None = None
    best_val: float | None = None
    rows: list[dict[str, Any]] = field(default_factory=list)


def _format(value: float | None) -> str:
    if value is None or not math.isfinite(value):
        return ""
    return f"{value:.9g}"


class Trainer:
    """
    One training run over a dataset.

    Args:
        run: Validated run configuration.
        dataset: Model-ready dataset whose channels match the run.
        catalog: Storm event catalog used for the holdout splits.
        out_dir: Receives checkpoints, the log, normalizer.json and splits.json.
        resume: Checkpoint to continue from; its step counter, optimizer
            moments, normalizer, splits and dropout generator state are reused.
    """

    def __init__(
        self,
        run: RunConfig,
        dataset: Dataset,
        catalog: EventCatalog,
        out_dir: Path,
        resume: Checkpoint | None = None,
    ) -> None:
        self.run = run
        self.dataset = dataset
        self.out_dir = out_dir
        self.spec = dataset.spec
        self.weights = loss_weights(self.spec)
        self.checkpoint_path = out_dir / CHECKPOINT_NAME
        self.best_path = out_dir / BEST_CHECKPOINT_NAME
        self.log_path = out_dir / "train_log.csv"
        self.last_saved: Path | None = None
        self.best_val: float | None = None
        self.start_step = 0

        if resume is not None:
            if resume.architecture != run.model.architecture:
                raise ConfigError(
                    f"cannot resume a {resume.architecture} checkpoint as {run.model.architecture}",
                    key="model.architecture",
                )
            self.splits = (
                SplitSpec.from_dict(resume.splits) if resume.splits else make_splits(run, dataset, catalog)
            )
            normalizer: Normalizer = resume.normalizer
            params = resume.params
            self.adam = resume.adam or AdamState(lr=run.lr)
            self.start_step = resume.step
            self.best_val = resume.best_val
        else:
            self.splits = make_splits(run, dataset, catalog)
            normalizer = fit_normalizer(dataset, self.splits.train_mask(dataset.timestamps))
            params = None
            self.adam = AdamState(lr=run.lr)

        self.model = build_model(run.model, self.spec, dataset.grid, normalizer, params=params, seed=run.train.seed)
        if resume is not None and RNG_STATE_KEY in resume.extra:
            self.model.rng.bit_generator.state = resume.extra[RNG_STATE_KEY]
        self.starts = training_starts(run, dataset, self.splits)
        self.schedule = BatchSchedule(self.starts, run.batch_size, run.train.seed)
        self.schedule.skip(self.start_step)
        logger.info(
            "training_prepared",
            architecture=run.model.architecture,
            parameters=self.model.parameter_count(),
            sequences=int(self.starts.size),
            batch_size=run.batch_size,
            lr=run.lr,
            start_step=self.start_step,
            val_events=len(self.splits.event_indices("val")),
            test_events=len(self.splits.event_indices("test")),
        )

    # ── Steps ──────────────────────────────────────────────────────

    def batch_loss(self, starts: list[int], p: dict[str, Tensor]) -> Tensor:
        """Mean weighted MSE of one-step predictions over a batch."""
        context = self.model.context_len
        losses = []
        for start in starts:
            window = self.dataset.window(start, context)
            next_frame = self.dataset.data[start + context]
            output = self.model.forward(window, next_frame[self.spec.forcing_indices], p)
            losses.append(weighted_mse(output, self.model.target_of(window, next_frame), self.weights))
        total = losses[0]
        for loss in losses[1:]:
            total = ops.add(total, loss)
        return ops.scale(total, 1.0 / len(losses))

    def train_step(self, step: int) -> float:
        p = bind(self.model.params, requires_grad=True)
        self.model.train()
        with trace() as graph:
            loss = self.batch_loss(self.schedule.next_batch(), p)
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingError(
                f"training loss became {value} at step {step}; last good checkpoint: {self.last_saved}",
                checkpoint_path=str(self.last_saved) if self.last_saved else None,
            )
        grads = backward(graph, loss, p)
        try:
            adam_step(self.model.params, grads, self.adam)
        except TrainingError as exc:
            raise TrainingError(
                f"{exc} at step {step}; last good checkpoint: {self.last_saved}",
                checkpoint_path=str(self.last_saved) if self.last_saved else None,
            ) from exc
        record_training_step(self.run.model.architecture, value)
        log_training_step(logger, step, value, architecture=self.run.model.architecture)
        return value

    def validate(self) -> dict[float, float] | None:
        """RMSE (TECU) at the validation leads, or None without usable validation events."""
        if not self.splits.event_indices("val"):
            return None
        cadence = self.dataset.cadence
        horizon = lead_steps_for_hours(max(VAL_LEAD_HOURS), cadence)
        config = self.run.eval.model_copy(
            update={
                "hexbin_max": 0,
                "max_starts": self.run.train.val_starts,
                "start_stride": lead_steps_for_hours(1.0, cadence),
                "events": [],
            }
        )
        try:
            report = evaluate(
                model_forecast(self.model),
                self.dataset,
                self.splits,
                self.model.context_len,
                config,
                split="val",
                horizon=horizon,
                baseline=False,
            )
        except EvaluationError as exc:
            logger.warning("validation_skipped", reason=str(exc))
            return None
        finally:
            self.model.train()
        return {hours: report.rmse_at_hours(hours) for hours in VAL_LEAD_HOURS}

    def save(self, path: Path, step: int) -> Path:
        checkpoint = Checkpoint(
            architecture=self.run.model.architecture,
            config=self.run,
            spec=self.spec,
            normalizer=self.model.normalizer,
            params=self.model.params,
            step=step,
            adam=self.adam,
            best_val=self.best_val,
            splits=self.splits.to_dict(),
            extra={RNG_STATE_KEY: self.model.rng.bit_generator.state},
        )
        return save_checkpoint(path, checkpoint)

    # ── Loop ───────────────────────────────────────────────────────

    def _write_artifacts(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "normalizer.json").write_text(
            json.dumps(self.model.normalizer.to_dict(), indent=2), encoding="utf-8"
        )
        (self.out_dir / "splits.json").write_text(json.dumps(self.splits.to_dict(), indent=2), encoding="utf-8")

    def run_loop(self) -> TrainResult:
        self._write_artifacts()
        append = self.start_step > 0 and self.log_path.exists()
        rows: list[dict[str, Any]] = []
        steps = self.run.train.steps
        with open(self.log_path, "a" if append else "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            if not append:
                writer.writerow(TRAIN_LOG_COLUMNS)
            for step in range(self.start_step + 1, steps + 1):
                loss = self.train_step(step)
                val = None
                if step % self.run.train.val_every == 0 or step == steps:
                    val = self.validate()
                    score = None if val is None else float(np.mean(list(val.values())))
                    if score is not None and math.isfinite(score) and (self.best_val is None or score < self.best_val):
                        self.best_val = score
                        self.save(self.best_path, step)
                        logger.info("best_checkpoint", step=step, val_rmse=round(score, 4))
                    self.last_saved = self.save(self.checkpoint_path, step)
                row = {"step": step, "loss": loss}
                for hours, column in zip(VAL_LEAD_HOURS, TRAIN_LOG_COLUMNS[2:]):
                    row[column] = None if val is None else val[hours]
                writer.writerow([step, _format(loss), *(_format(row[c]) for c in TRAIN_LOG_COLUMNS[2:])])
                f.flush()
                rows.append(row)

        final_step = max(steps, self.start_step)
        if self.last_saved is None:
            self.last_saved = self.save(self.checkpoint_path, final_step)
        logger.info("training_completed", steps=final_step, best_val=self.best_val, log=str(self.log_path))
        return TrainResult(
            model=self.model,
            splits=self.splits,
            checkpoint_path=self.last_saved,
            log_path=self.log_path,
            step=final_step,
            best_path=self.best_path if self.best_path.exists() else None,
            best_val=self.best_val,
            rows=rows,
        )


def train(
    run: RunConfig,
    dataset: Dataset,
    catalog: EventCatalog,
    out_dir: Path,
    resume: Checkpoint | None = None,
) -> TrainResult:
    """Train one model; see ``Trainer``."""
    return Trainer(run, dataset, catalog, out_dir, resume).run_loop()
