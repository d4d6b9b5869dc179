"""Graph and conv-LSTM forecasters, their shared rollout contract and checkpoints."""
from __future__ import annotations

from ioncast.config import ModelConfig
from ioncast.data.channels import ChannelSpec
from ioncast.data.normalizer import Normalizer
from ioncast.mesh.grid import LatLonGrid
from ioncast.models.base import Forecaster, RolloutPlan, persistence_forecast
from ioncast.models.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ioncast.models.gnn import GnnForecaster, GraphSet
from ioncast.models.layers import Params
from ioncast.models.lstm import LstmForecaster

ARCHITECTURES: dict[str, type[Forecaster]] = {"gnn": GnnForecaster, "lstm": LstmForecaster}


def build_model(
    config: ModelConfig,
    spec: ChannelSpec,
    grid: LatLonGrid,
    normalizer: Normalizer,
    params: Params | None = None,
    seed: int = 0,
) -> Forecaster:
    """Instantiate the configured architecture."""
    return ARCHITECTURES[config.architecture](spec, grid, normalizer, config, params=params, seed=seed)


def model_from_checkpoint(checkpoint: Checkpoint, grid: LatLonGrid) -> Forecaster:
    return build_model(
        checkpoint.config.model,
        checkpoint.spec,
        grid,
        checkpoint.normalizer,
        params=checkpoint.params,
        seed=checkpoint.config.train.seed,
    )


__all__ = [
    "ARCHITECTURES",
    "Checkpoint",
    "Forecaster",
    "GnnForecaster",
    "GraphSet",
    "LstmForecaster",
    "RolloutPlan",
    "build_model",
    "load_checkpoint",
    "model_from_checkpoint",
    "persistence_forecast",
    "save_checkpoint",
]
