"""
Desk-scale acceptance runs on synthetic data.

Everything except the split scan is marked slow and deselected by default;
run with ``pytest -m slow``.
"""
import math
from pathlib import Path

import numpy as np
import pytest

from ioncast.config import RunConfig, load_run_config, parse_run_config
from ioncast.data.events import Event, EventCatalog, build_splits
from ioncast.data.synth import synth_dataset
from ioncast.mesh import build_icosphere
from ioncast.mesh.icosphere import spherical_triangle_areas
from ioncast.services.evaluation import evaluate, model_forecast
from ioncast.services.experiments import ABLATION_PLAN, run_ablation
from ioncast.services.training import run_channel_spec, train

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
HOUR = 3600


def desk_run(name: str, root: Path, **train_overrides) -> RunConfig:
    raw = load_run_config(CONFIGS / name).echo()
    raw["data"]["dataset_path"] = str(root / "data" / "dataset.iongrid")
    raw["data"]["events_path"] = str(root / "data" / "events.csv")
    raw["output"]["directory"] = str(root / "out")
    raw["train"].update(train_overrides)
    return parse_run_config(raw)


def random_catalog(rng: np.random.Generator, span_hours: int) -> EventCatalog:
    events, t = [], 0
    while True:
        t += int(rng.integers(12, 200)) * HOUR
        duration = int(rng.integers(3, 48)) * HOUR
        if t + duration >= span_hours * HOUR:
            break
        events.append(Event(t, t + duration, int(rng.integers(1, 6))))
        t += duration
    return EventCatalog(events=events)


class TestLeakFreeSplits:
    """Exhaustive scan of training windows against held-out events."""

    @pytest.mark.parametrize("seed", range(100))
    def test_no_training_window_touches_holdout(self, seed):
        rng = np.random.default_rng(seed)
        span = 24 * 120
        catalog = random_catalog(rng, span)
        context, horizon = 4, 12
        margin = (context + horizon) * HOUR
        splits = build_splits(catalog, 0.1, seed=seed, margin_seconds=margin)
        timestamps = np.arange(span, dtype=np.int64) * HOUR
        mask = splits.train_mask(timestamps)
        for event in splits.held_out():
            near = (timestamps >= event.start - margin) & (timestamps <= event.end + margin)
            assert not np.any(mask & near)
        for level, indices in splits.catalog.by_level().items():
            n_test = sum(splits.assignments[i] == "test" for i in indices)
            assert n_test == math.ceil(0.1 * len(indices) - 1e-9)


@pytest.mark.slow
class TestDeskBenchmarks:
    """Long runs on the desk configs."""

    @pytest.mark.parametrize("level", range(7))
    def test_mesh_topology_to_level_six(self, level):
        mesh = build_icosphere(level)
        assert mesh.n_vertices == 10 * 4**level + 2
        assert mesh.n_vertices - mesh.n_edges + mesh.faces.shape[0] == 2
        assert spherical_triangle_areas(mesh.vertices, mesh.faces).sum() == pytest.approx(4 * np.pi, abs=1e-6)

    def _train_and_score(self, run: RunConfig, root: Path):
        spec = run_channel_spec(run)
        data = synth_dataset(run.data, spec)
        result = train(run, data.dataset, data.catalog, root / "out")
        return evaluate(
            model_forecast(result.model), data.dataset, result.splits, result.model.context_len, run.eval
        )

    def test_gnn_beats_persistence(self, tmp_path):
        """Test that the desk GNN is at least 10% below persistence over 4-12 h leads."""
        report = self._train_and_score(desk_run("desk_gnn.toml", tmp_path), tmp_path)
        model = float(np.mean(report.rmse_by_lead[15:48]))
        baseline = float(np.mean(report.persistence_by_lead[15:48]))
        assert model <= 0.9 * baseline

    def test_gnn_not_worse_than_lstm_at_twelve_hours(self, tmp_path):
        gnn, lstm = [], []
        for seed in (0, 1, 2):
            gnn.append(self._train_and_score(desk_run("desk_gnn.toml", tmp_path / f"g{seed}", seed=seed),
                                             tmp_path / f"g{seed}").rmse_at_hours(12.0))
            lstm.append(self._train_and_score(desk_run("desk_lstm.toml", tmp_path / f"l{seed}", seed=seed),
                                              tmp_path / f"l{seed}").rmse_at_hours(12.0))
        assert np.median(gnn) <= np.median(lstm)

    def test_forcing_groups_beat_target_only(self, tmp_path):
        """Test the directional ablation claim on synthetic data."""
        run = desk_run("desk_gnn.toml", tmp_path, steps=500)
        data = synth_dataset(run.data, run_channel_spec(run))
        groups = [ABLATION_PLAN[0], ABLATION_PLAN[5]]
        rows = run_ablation(run, data.dataset, data.catalog, tmp_path / "ablation", groups=groups, seeds=[0])
        assert rows[1]["rmse_mean"] < rows[0]["rmse_mean"]
