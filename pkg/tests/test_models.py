"""Tests for the graph and conv-LSTM forecasters, rollouts and checkpoints."""
import numpy as np
import pytest

from conftest import tiny_run
from ioncast.data.channels import ChannelSpec
from ioncast.data.normalizer import Normalizer, fit_normalizer
from ioncast.errors import CheckpointError, ConfigError, DimensionError, RolloutError
from ioncast.forcings import ForcingProvider, forcing_frame
from ioncast.forcings.maps import DEFAULT_CACHE_SIZE
from ioncast.mesh import LatLonGrid
from ioncast.models import (
    Checkpoint,
    GnnForecaster,
    GraphSet,
    LstmForecaster,
    RolloutPlan,
    build_model,
    load_checkpoint,
    model_from_checkpoint,
    persistence_forecast,
    save_checkpoint,
)
from ioncast.models.gnn import build_grid_inputs, input_width
from ioncast.models.layers import bind
from ioncast.services.losses import loss_weights, weighted_mse
from ioncast.services.training import run_channel_spec
from ioncast.tensor import backward, ops, precision, trace
from ioncast.tensor.gradcheck import check_gradients

CONTEXT = 2


def make_plan(dataset, start, horizon, context=CONTEXT, cache_size=DEFAULT_CACHE_SIZE):
    window = dataset.window(start, context)
    provider = ForcingProvider(dataset.grid, dataset.spec.forcing_names, cache_size=cache_size)
    return RolloutPlan(
        window=window,
        last_timestamp=int(dataset.timestamps[start + context - 1]),
        cadence=dataset.cadence,
        horizon=horizon,
        forcings=provider,
    )


def check_model_gradients(model, window, forcing, names):
    """Finite-difference check of a forecaster's output with respect to the named parameters."""

    def forward(*chosen):
        p = bind(model.params)
        p.update(zip(names, chosen))
        return model.forward(window, forcing, p)

    return check_gradients(
        forward, [model.params[name] for name in names], name=model.architecture, input_names=names
    )


class TestInputWidth:
    """Test cases for the grid-node feature width."""

    def test_minimal(self):
        """Test context 1, one target, no forcings, four static features."""
        assert input_width(1, 1, 0, 0) == 5

    def test_full(self):
        """Test context 8 with 3 predicted channels and 3 forcings."""
        assert input_width(8, 3, 3, 0) == 8 * 3 + 9 * 3 + 4

    def test_grid_inputs_layout(self, synth):
        dataset = synth.dataset
        spec = dataset.spec
        window = dataset.window(0, CONTEXT)
        forcing = window[-1, spec.forcing_indices]
        inputs = build_grid_inputs(window, forcing, spec, dataset.grid.static_features())
        n_p, n_f, n_c = len(spec.predicted_indices), len(spec.forcing_indices), len(spec.coordinate_indices)
        assert inputs.shape == (dataset.grid.n_nodes, input_width(CONTEXT, n_p, n_f, n_c))
        # first column is the target at node 0 of the first context frame
        assert inputs.data[0, 0] == pytest.approx(window[0, spec.target_index, 0, 0])


class TestGnnForecaster:
    """Test cases for the encode-process-decode model."""

    def setup_method(self):
        self.run = tiny_run()
        self.spec = run_channel_spec(self.run)

    def _model(self, dataset, **gnn):
        config = self.run.model.model_copy(update={"gnn": self.run.model.gnn.model_copy(update=gnn)})
        normalizer = fit_normalizer(dataset, np.ones(len(dataset), bool))
        return GnnForecaster(self.spec, dataset.grid, normalizer, config, seed=0)

    def test_output_shape(self, synth):
        model = self._model(synth.dataset)
        window = synth.dataset.window(10, CONTEXT)
        out = model.forward(window, window[-1, self.spec.forcing_indices])
        assert out.shape == (3, 8, 16)
        assert model.d_in == input_width(CONTEXT, 3, 2, 1)

    def test_zero_head_rollout_is_persistence(self, synth):
        """Test that a zero-initialized head reproduces persistence bit for bit."""
        with precision("float64"):
            model = self._model(synth.dataset, zero_init_head=True).eval()
            plan = make_plan(synth.dataset, 20, horizon=6)
            frames = model.rollout(plan)
        expected = persistence_forecast(plan, self.spec)
        np.testing.assert_array_equal(frames, expected)

    def test_forcings_substituted(self, synth):
        """Test that every rolled-out frame carries the provider's forcings."""
        model = self._model(synth.dataset).eval()
        plan = make_plan(synth.dataset, 30, horizon=3)
        frames = model.rollout(plan)
        for frame, t in zip(frames, plan.timestamps()):
            np.testing.assert_array_equal(
                frame[self.spec.forcing_indices], plan.forcings(int(t)).astype(frames.dtype)
            )
            np.testing.assert_array_equal(
                frame[self.spec.coordinate_indices], plan.window[-1, self.spec.coordinate_indices]
            )

    def test_single_step_rollout_equals_step(self, synth):
        model = self._model(synth.dataset).eval()
        plan = make_plan(synth.dataset, 40, horizon=1)
        forcing = plan.forcings(int(plan.timestamps()[0])).astype(plan.window.dtype)
        np.testing.assert_array_equal(model.rollout(plan)[0], model.step(plan.window, forcing))

    def test_deterministic_init(self, synth):
        a = self._model(synth.dataset)
        b = self._model(synth.dataset)
        assert a.params.keys() == b.params.keys()
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_gradients_reach_every_parameter(self, synth):
        """Test that backward yields a finite gradient for every parameter."""
        model = self._model(synth.dataset).train()
        window = synth.dataset.window(5, CONTEXT)
        target = model.target_of(window, synth.dataset.data[5 + CONTEXT])
        p = bind(model.params, requires_grad=True)
        with trace() as graph:
            out = model.forward(window, synth.dataset.data[5 + CONTEXT, self.spec.forcing_indices], p)
            loss = ops.mean(ops.square(ops.sub(out, target)))
        grads = backward(graph, loss, p)
        assert grads.keys() == model.params.keys()
        for name, grad in grads.items():
            assert grad.shape == model.params[name].shape
            assert np.isfinite(grad).all()
        assert np.abs(grads["head.w"]).sum() > 0

    def test_longitude_coherence(self, synth):
        """Test that rotating inputs and mesh by 180 degrees rotates the prediction."""
        dataset = synth.dataset
        half = dataset.grid.n_lon // 2
        with precision("float64"):
            model = self._model(dataset).eval()
            # geographic longitude encodings are not rotation invariant; silence them
            base = model.d_in - 4 - len(self.spec.coordinate_indices)
            model.params["grid_embed.hidden.w"][base + 2 : base + 4] = 0.0
            rotated = GnnForecaster(
                self.spec,
                dataset.grid,
                model.normalizer,
                model.config,
                params=model.params,
                graphs=GraphSet.build(dataset.grid, model.gnn, mesh=model.graphs.mesh.rotated(180.0)),
            ).eval()
            window = dataset.window(50, CONTEXT).astype(np.float64)
            forcing = window[-1, self.spec.forcing_indices]
            out = model.forward(window, forcing).data
            out_rot = rotated.forward(np.roll(window, half, axis=-1), np.roll(forcing, half, axis=-1)).data
        np.testing.assert_allclose(np.roll(out_rot, -half, axis=-1), out, atol=1e-4)

    def test_parameter_gradients_match_finite_differences(self, synth):
        """Test backward through the whole graph model against central differences."""
        with precision("float64"):
            model = self._model(synth.dataset).eval()
        window = synth.dataset.window(60, CONTEXT)
        forcing = synth.dataset.data[60 + CONTEXT, self.spec.forcing_indices]
        names = ["grid_embed.out.b", "processor.0.edge.norm.gain", "decoder.node.hidden.b", "head.w", "head.b"]
        report = check_model_gradients(model, window, forcing, names)
        assert report.passed, report.errors
        assert set(report.errors) == set(names)

    def test_long_rollout_forcings_are_recomputed(self, synth):
        """Test that 48 rolled-out frames carry forcings equal to an independent recomputation."""
        dataset = synth.dataset
        names = self.spec.forcing_names
        model = self._model(dataset).eval()
        plan = make_plan(dataset, 100, horizon=48, cache_size=8)
        frames = model.rollout(plan)
        assert frames.shape[0] == 48
        for frame, t in zip(frames, plan.timestamps()):
            fresh = forcing_frame(int(t), dataset.grid, names).stack().astype(frames.dtype)
            np.testing.assert_array_equal(frame[self.spec.forcing_indices], fresh)

    def test_forcing_channels_carry_no_loss(self, synth):
        """Test that forcing channels have no loss weight and no influence on the loss."""
        dataset = synth.dataset
        weights = loss_weights(self.spec)
        assert weights.shape == (len(self.spec.predicted_indices),)
        assert not set(self.spec.forcing_names) & set(self.spec.predicted_names)
        assert all(self.spec.channels[i].loss_weight == 0 for i in self.spec.forcing_indices)

        model = self._model(dataset).eval()
        window = dataset.window(70, CONTEXT)
        next_frame = dataset.data[70 + CONTEXT].copy()
        output = model.forward(window, next_frame[self.spec.forcing_indices])
        base = float(weighted_mse(output, model.target_of(window, next_frame), weights).data)
        scrambled = next_frame.copy()
        scrambled[self.spec.forcing_indices] = np.random.default_rng(5).normal(
            size=scrambled[self.spec.forcing_indices].shape
        )
        assert float(weighted_mse(output, model.target_of(window, scrambled), weights).data) == base

    def test_window_shape_checked(self, synth):
        model = self._model(synth.dataset)
        with pytest.raises(DimensionError):
            model.forward(synth.dataset.window(0, CONTEXT + 1), np.zeros((2, 8, 16)))

    def test_rollout_without_forcing_values(self, synth):
        model = self._model(synth.dataset).eval()
        plan = make_plan(synth.dataset, 0, horizon=2)

        def missing(t):
            raise KeyError(t)

        plan.forcings = missing
        with pytest.raises(RolloutError, match="step 1"):
            model.rollout(plan)

    def test_non_finite_prediction(self, synth):
        model = self._model(synth.dataset).eval()
        model.params["head.b"][:] = np.inf
        with pytest.raises(RolloutError, match="'tec'"):
            model.rollout(make_plan(synth.dataset, 0, horizon=1))

    def test_normalizer_must_match_spec(self, synth):
        norm = Normalizer(["tec"], np.zeros(1), np.ones(1))
        with pytest.raises(DimensionError):
            GnnForecaster(self.spec, synth.dataset.grid, norm, self.run.model)


class TestLstmForecaster:
    """Test cases for the conv-LSTM model."""

    def setup_method(self):
        self.run = tiny_run(architecture="lstm")
        self.spec = run_channel_spec(self.run)

    def _model(self, dataset, **lstm):
        config = self.run.model.model_copy(update={"lstm": self.run.model.lstm.model_copy(update=lstm)})
        normalizer = fit_normalizer(dataset, np.ones(len(dataset), bool))
        return LstmForecaster(self.spec, dataset.grid, normalizer, config, seed=1)

    def test_output_shape(self, synth):
        model = self._model(synth.dataset)
        window = synth.dataset.window(0, CONTEXT)
        assert model.forward(window, window[-1, self.spec.forcing_indices]).shape == (3, 8, 16)
        assert model.sizes == [(8, 16), (8, 16), (4, 8)]

    def test_odd_grid_downsampling(self):
        """Test that odd extents survive a stride-2 round trip."""
        grid = LatLonGrid(5, 10)
        spec = ChannelSpec.from_names(["tec"])
        norm = Normalizer(["tec"], np.zeros(1), np.ones(1))
        model = LstmForecaster(spec, grid, norm, self.run.model)
        out = model.forward(np.ones((CONTEXT, 1, 5, 10), dtype=np.float32), np.zeros((0, 5, 10)))
        assert out.shape == (1, 5, 10)

    def test_zero_head_rollout_is_persistence(self, synth):
        with precision("float64"):
            model = self._model(synth.dataset, zero_init_head=True).eval()
            plan = make_plan(synth.dataset, 12, horizon=4)
            frames = model.rollout(plan)
        np.testing.assert_array_equal(frames, persistence_forecast(plan, self.spec))

    def test_grid_too_small(self):
        grid = LatLonGrid(2, 2)
        spec = ChannelSpec.from_names(["tec"])
        norm = Normalizer(["tec"], np.zeros(1), np.ones(1))
        config = self.run.model.model_copy(
            update={"lstm": self.run.model.lstm.model_copy(update={"downsample_layers": 2})}
        )
        with pytest.raises(ConfigError):
            LstmForecaster(spec, grid, norm, config)

    def test_dropout_only_in_training(self, synth):
        model = self._model(synth.dataset, dropout=0.5)
        window = synth.dataset.window(0, CONTEXT)
        forcing = window[-1, self.spec.forcing_indices]
        model.eval()
        np.testing.assert_array_equal(model.forward(window, forcing).data, model.forward(window, forcing).data)
        model.train()
        assert not np.array_equal(model.forward(window, forcing).data, model.forward(window, forcing).data)

    def test_parameter_gradients_match_finite_differences(self, synth):
        """Test backward through encoder, LSTM and decoder against central differences."""
        with precision("float64"):
            model = self._model(synth.dataset).eval()
        window = synth.dataset.window(40, CONTEXT)
        forcing = synth.dataset.data[40 + CONTEXT, self.spec.forcing_indices]
        names = ["encoder.0.b", "encoder.project.b", "lstm.bias", "decoder.1.b", "head.b"]
        report = check_model_gradients(model, window, forcing, names)
        assert report.passed, report.errors

    def test_parameter_count_pinned(self, synth):
        """Test the parameter count of the tiny conv-LSTM (6 channels, 8x16 grid, widths 4 and 8)."""
        model = self._model(synth.dataset)
        assert model.widths == [4, 8]
        # encoder 220 + 296, project 72, cell 544, decoder project 2304, stages 292 + 148, head 300
        assert model.parameter_count() == 4176

    def test_gradients_reach_every_parameter(self, synth):
        model = self._model(synth.dataset).train()
        window = synth.dataset.window(3, CONTEXT)
        p = bind(model.params, requires_grad=True)
        with trace() as graph:
            out = model.forward(window, synth.dataset.data[3 + CONTEXT, self.spec.forcing_indices], p)
            loss = ops.mean(ops.square(out))
        grads = backward(graph, loss, p)
        for name in model.params:
            assert np.isfinite(grads[name]).all()
        assert np.abs(grads["encoder.0.k"]).sum() > 0


class TestCheckpoint:
    """Test cases for checkpoint files."""

    def setup_method(self):
        self.run = tiny_run()
        self.spec = run_channel_spec(self.run)

    def test_round_trip(self, synth, tmp_path):
        dataset = synth.dataset
        normalizer = fit_normalizer(dataset, np.ones(len(dataset), bool))
        model = build_model(self.run.model, self.spec, dataset.grid, normalizer, seed=0)
        path = save_checkpoint(
            tmp_path / "checkpoint.npz",
            Checkpoint("gnn", self.run, self.spec, normalizer, model.params, step=7, best_val=1.5),
        )
        ckpt = load_checkpoint(path, expected_spec=self.spec)
        assert ckpt.step == 7
        assert ckpt.best_val == 1.5
        restored = model_from_checkpoint(ckpt, dataset.grid)
        window = dataset.window(0, CONTEXT)
        forcing = window[-1, self.spec.forcing_indices]
        np.testing.assert_array_equal(restored.forward(window, forcing).data, model.forward(window, forcing).data)

    def test_spec_mismatch_refused(self, synth, tmp_path):
        dataset = synth.dataset
        normalizer = fit_normalizer(dataset, np.ones(len(dataset), bool))
        model = build_model(self.run.model, self.spec, dataset.grid, normalizer)
        path = save_checkpoint(
            tmp_path / "checkpoint.npz", Checkpoint("gnn", self.run, self.spec, normalizer, model.params)
        )
        other = ChannelSpec.from_names(["tec", "kp"])
        with pytest.raises(CheckpointError, match="does not match"):
            load_checkpoint(path, expected_spec=other)

    def test_unreadable(self, tmp_path):
        path = tmp_path / "broken.npz"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_parameter_shapes_checked(self, synth):
        dataset = synth.dataset
        normalizer = fit_normalizer(dataset, np.ones(len(dataset), bool))
        params = build_model(self.run.model, self.spec, dataset.grid, normalizer).params
        params["head.w"] = np.zeros((1, 1))
        with pytest.raises(DimensionError):
            build_model(self.run.model, self.spec, dataset.grid, normalizer, params=params)
