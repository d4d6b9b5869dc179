"""Shared fixtures: a tiny synthetic dataset and run configs small enough for unit tests."""
from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest

from ioncast.config import RunConfig, parse_run_config
from ioncast.data.channels import ChannelSpec
from ioncast.data.synth import SynthResult, synth_dataset
from ioncast.mesh.grid import LatLonGrid
from ioncast.services.training import run_channel_spec

TINY_CHANNELS = {
    "drivers": ["kp", "f107"],
    "coordinates": ["maglat"],
    "forcings": ["solar_zenith_cos", "subsolar_lat_sin"],
}


def tiny_run_dict(root: Path | None = None, architecture: str = "gnn") -> dict[str, Any]:
    """Raw run config: 8x16 grid, hourly frames, level-1 mesh, latent 8."""
    root = root or Path("runs/tiny")
    return {
        "data": {
            "dataset_path": str(root / "data" / "dataset.iongrid"),
            "events_path": str(root / "data" / "events.csv"),
            "synth": {
                "n_lat": 8,
                "n_lon": 16,
                "days": 12,
                "cadence_seconds": 3600,
                "start": "2015-03-01T00:00:00Z",
                "seed": 3,
                "storm_count": 4,
                "noise_std": 0.5,
            },
            "channels": dict(TINY_CHANNELS),
        },
        "model": {
            "architecture": architecture,
            "gnn": {
                "multimesh_levels": 1,
                "processor_layers": 1,
                "latent_dim": 8,
                "context_len": 2,
                "dropout": 0.0,
            },
            "lstm": {
                "encoder_layers": 2,
                "downsample_layers": 1,
                "latent_dim": 8,
                "context_len": 2,
                "dropout": 0.0,
                "base_channels": 4,
                "max_channels": 8,
            },
        },
        "train": {"steps": 3, "val_every": 2, "val_starts": 1, "batch_size": 1, "seed": 0},
        "eval": {"horizon": 12, "max_starts": 2, "hexbin_max": 200, "svg": False},
        "output": {"directory": str(root / "out")},
    }


def tiny_run(root: Path | None = None, architecture: str = "gnn", **sections: dict[str, Any]) -> RunConfig:
    raw = tiny_run_dict(root, architecture)
    for section, values in sections.items():
        raw[section].update(values)
    return parse_run_config(raw)


@pytest.fixture(scope="session")
def run_config() -> RunConfig:
    return tiny_run()


@pytest.fixture(scope="session")
def tiny_spec(run_config: RunConfig) -> ChannelSpec:
    return run_channel_spec(run_config)


@pytest.fixture(scope="session")
def synth(run_config: RunConfig, tiny_spec: ChannelSpec) -> SynthResult:
    """Twelve hourly days on an 8x16 grid; generated once per session."""
    return synth_dataset(run_config.data, tiny_spec)


@pytest.fixture
def small_grid() -> LatLonGrid:
    return LatLonGrid(6, 12)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
