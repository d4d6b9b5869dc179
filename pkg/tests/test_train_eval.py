"""Tests for the loss, the evaluator, the training loop and the experiment plan."""
import csv

import numpy as np
import pytest
from conftest import tiny_run, tiny_run_dict

from ioncast.config import EvalConfig, parse_run_config
from ioncast.data.channels import ChannelSpec
from ioncast.data.events import Event, EventCatalog, SplitSpec, build_splits
from ioncast.errors import ConfigError, DimensionError, EvaluationError
from ioncast.mesh import LatLonGrid
from ioncast.models import load_checkpoint
from ioncast.models.layers import bind
from ioncast.services.evaluation import (
    ErrorAccumulator,
    band_rows,
    evaluate,
    event_starts,
    lead_steps_for_hours,
    persistence,
    select_events,
)
from ioncast.services.experiments import ABLATION_PLAN, group_config, select_groups
from ioncast.services.losses import loss_weights, weighted_mse
from ioncast.services.reports import write_report
from ioncast.services.training import (
    TRAIN_LOG_COLUMNS,
    RNG_STATE_KEY,
    Trainer,
    split_margin,
    train,
)
from ioncast.tensor import Tensor

DAY = 86400
HOUR = 3600


def storm_catalog(t0: int) -> EventCatalog:
    """Six 6-hour G1 events on odd days, enough for one test and one val event."""
    return EventCatalog(events=[Event(t0 + d * DAY, t0 + d * DAY + 6 * HOUR, 1) for d in (1, 3, 5, 7, 9, 11)])


def offset_forecast(dataset, offset: float):
    """Forecast that returns the true future frames shifted by ``offset`` on the target."""
    target = dataset.spec.target_index

    def forecast(plan):
        first = dataset.index_of(plan.last_timestamp) + 1
        frames = dataset.data[first : first + plan.horizon].astype(np.float64).copy()
        frames[:, target] += offset
        return frames

    return forecast


class TestWeightedMse:
    """Test cases for the channel-weighted loss."""

    def test_zero_for_exact_prediction(self):
        pred = Tensor(np.ones((2, 3, 4)))
        assert float(weighted_mse(pred, np.ones((2, 3, 4)), [1.0, 1.0]).data) == 0.0

    def test_uniform_error(self):
        """Test that a uniform error of 2 gives 4 whatever the weight."""
        pred = Tensor(np.full((1, 3, 4), 2.0))
        assert float(weighted_mse(pred, np.zeros((1, 3, 4)), [5.0]).data) == pytest.approx(4.0)

    def test_channel_weights(self):
        """Test (2 * mse_a + 1 * mse_b) / 3."""
        pred = np.zeros((2, 3, 4))
        pred[0] = 1.0
        pred[1] = 3.0
        loss = weighted_mse(Tensor(pred), np.zeros((2, 3, 4)), [2.0, 1.0])
        assert float(loss.data) == pytest.approx((2 * 1.0 + 9.0) / 3)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            weighted_mse(Tensor(np.zeros((2, 3, 4))), np.zeros((2, 3, 5)), [1.0, 1.0])
        with pytest.raises(DimensionError):
            weighted_mse(Tensor(np.zeros((2, 3, 4))), np.zeros((2, 3, 4)), [1.0])

    def test_all_zero_weights(self):
        spec = ChannelSpec.from_names(["tec", "kp"], target_weight=0.0, driver_weight=0.0)
        with pytest.raises(ConfigError) as exc:
            loss_weights(spec)
        assert exc.value.key == "train.target_weight"

    def test_default_weights_by_architecture(self):
        assert tiny_run().target_weight == 2.0
        assert tiny_run(architecture="lstm").target_weight == 20.0


class TestEvaluation:
    """Test cases for event-based verification."""

    @pytest.fixture(autouse=True)
    def _dataset(self, synth):
        self.dataset = synth.dataset
        self.t0 = int(self.dataset.timestamps[0])
        self.catalog = storm_catalog(self.t0)
        self.config = EvalConfig(horizon=6, max_starts=3, hexbin_max=50, svg=False)
        assignments = ["train", "test", "train", "val", "train", "train"]
        self.splits = SplitSpec(self.catalog, assignments, margin_seconds=8 * HOUR, seed=0, holdout_fraction=0.2)

    def test_offset_forecast_rmse(self):
        """Test that a forecast off by 2 TECU everywhere scores 2 at every lead."""
        report = evaluate(offset_forecast(self.dataset, 2.0), self.dataset, self.splits, 2, self.config)
        np.testing.assert_allclose(report.rmse_by_lead, 2.0, rtol=1e-4)
        for values in report.rmse_by_band.values():
            np.testing.assert_allclose(values, 2.0, rtol=1e-4)
        assert report.events[0].rmse == pytest.approx(2.0, rel=1e-4)
        assert report.n_starts == 3
        assert report.hexbin.shape[1] == 3
        assert report.hexbin.shape[0] <= 50

    def test_area_weighting_keeps_uniform_error(self):
        config = self.config.model_copy(update={"area_weighted": True})
        report = evaluate(offset_forecast(self.dataset, 2.0), self.dataset, self.splits, 2, config)
        np.testing.assert_allclose(report.rmse_by_lead, 2.0, rtol=1e-4)

    def test_persistence_baseline(self):
        """Test that scoring persistence reproduces the baseline column."""
        report = evaluate(persistence(self.dataset), self.dataset, self.splits, 2, self.config)
        np.testing.assert_allclose(report.rmse_by_lead, report.persistence_by_lead, rtol=1e-10)

    def test_starts_inside_event(self):
        """Test that the last context frame of every start lies inside the event."""
        event = self.catalog.events[1]
        starts = event_starts(self.dataset, event, context=2, horizon=6)
        last_context = self.dataset.timestamps[starts + 1]
        assert starts.size == 7
        assert np.all((last_context >= event.start) & (last_context <= event.end))
        assert event_starts(self.dataset, event, 2, 6, stride=3).size == 3

    def test_leak_guard(self):
        """Test that a window reaching into training time is refused."""
        splits = SplitSpec(self.catalog, self.splits.assignments, margin_seconds=0, seed=0, holdout_fraction=0.2)
        with pytest.raises(EvaluationError, match="training mask"):
            evaluate(persistence(self.dataset), self.dataset, splits, 2, self.config)

    def test_foreign_event(self):
        with pytest.raises(EvaluationError):
            select_events(self.splits, "test", [0])
        assert select_events(self.splits, "test", None) == [1]
        assert select_events(self.splits, "val", []) == [3]

    def test_by_level(self):
        report = evaluate(offset_forecast(self.dataset, 1.0), self.dataset, self.splits, 2, self.config)
        levels = report.by_level()
        assert list(levels) == [1]
        assert levels[1]["events"] == 1.0
        assert levels[1]["rmse"] == pytest.approx(1.0, rel=1e-4)

    def test_report_files(self, tmp_path):
        report = evaluate(offset_forecast(self.dataset, 2.0), self.dataset, self.splits, 2, self.config)
        paths = write_report(report, tmp_path, svg=False)
        assert set(paths) == {"rmse_by_lead", "rmse_by_band", "events", "g_levels", "hexbin"}
        with open(paths["rmse_by_lead"], newline="") as f:
            rows = list(csv.DictReader(f))
        assert len(rows) == 6
        assert float(rows[0]["rmse_model"]) == pytest.approx(2.0, rel=1e-4)


class TestAccumulator:
    """Test cases for band decomposition and pooled RMSE."""

    def test_bands_partition_rows(self):
        grid = LatLonGrid(8, 16)
        masks = band_rows(grid)
        total = sum(m.astype(int) for m in masks.values())
        assert np.all(total == 1)
        assert masks["low"].tolist() == [False, False, False, True, True, False, False, False]

    def test_band_errors(self):
        """Test that an error confined to the high band leaves the other bands at zero."""
        grid = LatLonGrid(8, 16)
        masks = band_rows(grid)
        truth = np.zeros((2, 8, 16))
        pred = truth.copy()
        pred[:, masks["high"]] = 3.0
        acc = ErrorAccumulator(2)
        acc.add(pred, truth, np.ones(8), list(masks.values()))
        by_band = acc.rmse_by_band()
        np.testing.assert_allclose(by_band[0], 0.0)
        np.testing.assert_allclose(by_band[1], 0.0)
        np.testing.assert_allclose(by_band[2], 3.0)
        assert acc.rmse() == pytest.approx(1.5)

    def test_lead_steps(self):
        assert lead_steps_for_hours(12.0, 3600) == 12
        assert lead_steps_for_hours(1.0, 900) == 4
        assert lead_steps_for_hours(0.1, 3600) == 1


class TestTraining:
    """Test cases for the single-step training loop."""

    @pytest.fixture(autouse=True)
    def _dataset(self, synth):
        self.dataset = synth.dataset
        self.catalog = storm_catalog(int(self.dataset.timestamps[0]))

    def test_split_margin(self):
        run = tiny_run()
        assert split_margin(run, 3600) == (2 + 12) * 3600

    def test_batch_loss_matches_weighted_mse(self, tmp_path):
        """Test the step loss against a direct one-step prediction."""
        run = tiny_run(tmp_path)
        trainer = Trainer(run, self.dataset, self.catalog, tmp_path)
        start = int(trainer.starts[0])
        p = bind(trainer.model.params)
        window = self.dataset.window(start, 2)
        next_frame = self.dataset.data[start + 2]
        output = trainer.model.forward(window, next_frame[self.dataset.spec.forcing_indices], p)
        expected = weighted_mse(output, trainer.model.target_of(window, next_frame), trainer.weights)
        assert float(trainer.batch_loss([start], p).data) == pytest.approx(float(expected.data))

    def test_training_starts_respect_mask(self, tmp_path):
        trainer = Trainer(tiny_run(tmp_path), self.dataset, self.catalog, tmp_path)
        mask = trainer.splits.train_mask(self.dataset.timestamps)
        for start in trainer.starts:
            assert mask[start : start + 3].all()

    def test_deterministic(self, tmp_path):
        """Test that the same seed gives the same losses."""
        run = tiny_run(tmp_path)
        a = Trainer(run, self.dataset, self.catalog, tmp_path / "a")
        b = Trainer(run, self.dataset, self.catalog, tmp_path / "b")
        assert [a.train_step(s) for s in (1, 2)] == [b.train_step(s) for s in (1, 2)]

    def test_train_writes_artifacts(self, tmp_path):
        """Test the log columns, checkpoints and side files of a short run."""
        run = tiny_run(tmp_path)
        result = train(run, self.dataset, self.catalog, tmp_path)
        with open(result.log_path, newline="") as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == TRAIN_LOG_COLUMNS
        assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
        assert rows[1][2] == ""
        assert rows[2][2] != ""
        assert result.checkpoint_path.name == "checkpoint.npz"
        assert result.best_path is not None and result.best_path.exists()
        assert (tmp_path / "normalizer.json").exists()
        assert (tmp_path / "splits.json").exists()
        checkpoint = load_checkpoint(result.checkpoint_path, expected_spec=self.dataset.spec)
        assert checkpoint.step == 3
        assert checkpoint.splits is not None

    def test_resume_continues_step(self, tmp_path):
        run = tiny_run(tmp_path)
        first = train(run, self.dataset, self.catalog, tmp_path)
        longer = tiny_run(tmp_path, train={"steps": 4})
        resumed = train(longer, self.dataset, self.catalog, tmp_path, resume=load_checkpoint(first.checkpoint_path))
        assert resumed.step == 4
        assert [row["step"] for row in resumed.rows] == [4]

    def test_resume_with_dropout_matches_uninterrupted_run(self, tmp_path):
        """Test that a 2+2 step resumed run reproduces the losses of a 4-step run."""

        def dropout_run(root, steps):
            raw = tiny_run_dict(root)
            raw["model"]["gnn"]["dropout"] = 0.3
            raw["train"]["steps"] = steps
            return parse_run_config(raw)

        straight = train(dropout_run(tmp_path / "a", 4), self.dataset, self.catalog, tmp_path / "a")
        first = train(dropout_run(tmp_path / "b", 2), self.dataset, self.catalog, tmp_path / "b")
        checkpoint = load_checkpoint(first.checkpoint_path)
        assert RNG_STATE_KEY in checkpoint.extra
        resumed = train(dropout_run(tmp_path / "b", 4), self.dataset, self.catalog, tmp_path / "b", resume=checkpoint)
        losses = [row["loss"] for row in first.rows + resumed.rows]
        assert losses == [row["loss"] for row in straight.rows]

    def test_resume_wrong_architecture(self, tmp_path):
        first = train(tiny_run(tmp_path), self.dataset, self.catalog, tmp_path)
        with pytest.raises(ConfigError):
            Trainer(tiny_run(tmp_path, "lstm"), self.dataset, self.catalog, tmp_path,
                    resume=load_checkpoint(first.checkpoint_path))

    def test_lstm_trains(self, tmp_path):
        result = train(tiny_run(tmp_path, "lstm"), self.dataset, self.catalog, tmp_path)
        assert all(np.isfinite(row["loss"]) for row in result.rows)

    def test_holdout_splits_reproducible(self):
        a = build_splits(self.catalog, 0.2, seed=4)
        b = build_splits(self.catalog, 0.2, seed=4)
        assert a.assignments == b.assignments


class TestExperiments:
    """Test cases for the ablation plan."""

    def test_plan_rows(self):
        assert len(ABLATION_PLAN) == 8
        assert ABLATION_PLAN[0].name == "JPLD"
        assert sum(not g.residual_target for g in ABLATION_PLAN) == 1

    def test_group_config(self):
        """Test that a group sets channels, residual flag and seed."""
        group = ABLATION_PLAN[3]
        run = group_config(tiny_run(), group, seed=7)
        assert run.data.channels.drivers == ["kp", "ap"]
        assert run.data.channels.forcings == []
        assert run.train.seed == 7
        assert run.model.residual_target is True

    def test_unknown_group(self):
        with pytest.raises(ConfigError):
            select_groups(["JPLD + Everything"])
        assert select_groups([]) == ABLATION_PLAN
