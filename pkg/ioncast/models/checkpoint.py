"""
Checkpoint container.

A single ``.npz`` archive:

    __header__      UTF-8 JSON (uint8 array): format version, architecture,
                    run config echo, channel spec, normalizer, step,
                    optimizer hyperparameters, split spec
    param.<name>    model parameters
    adam.m.<name>   optimizer first moments
    adam.v.<name>   optimizer second moments

Loading under a different channel spec is refused.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from ioncast.config import RunConfig, parse_run_config
from ioncast.data.channels import ChannelSpec
from ioncast.data.normalizer import Normalizer
from ioncast.errors import CheckpointError, ConfigError
from ioncast.logging_config import get_logger
from ioncast.models.layers import Params
from ioncast.tensor import AdamState

logger = get_logger(__name__)

FORMAT_VERSION = 1
HEADER_KEY = "__header__"
PARAM_PREFIX = "param."


@dataclass
class Checkpoint:
    architecture: str
    config: RunConfig
    spec: ChannelSpec
    normalizer: Normalizer
    params: Params
    step: int = 0
    adam: AdamState | None = None
    best_val: float | None = None
    splits: dict[str, Any] | None = None
    extra: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: Path, checkpoint: Checkpoint) -> Path:
    """Write atomically; returns ``path``."""
    adam = checkpoint.adam
    header = {
        "version": FORMAT_VERSION,
        "architecture": checkpoint.architecture,
        "config": checkpoint.config.echo(),
        "channel_spec": checkpoint.spec.model_dump(mode="json"),
        "spec_fingerprint": checkpoint.spec.fingerprint(),
        "normalizer": checkpoint.normalizer.to_dict(),
        "step": checkpoint.step,
        "best_val": checkpoint.best_val,
        "splits": checkpoint.splits,
        "adam": None
        if adam is None
        else {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps, "t": adam.t},
        "extra": checkpoint.extra,
    }
    arrays: dict[str, np.ndarray] = {
        HEADER_KEY: np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    }
    for name, value in checkpoint.params.items():
        arrays[PARAM_PREFIX + name] = value
    if adam is not None:
        arrays.update(adam.to_arrays())

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        np.savez(f, **arrays)
    tmp.replace(path)
    logger.debug("checkpoint_saved", path=str(path), step=checkpoint.step, parameters=len(checkpoint.params))
    return path


def load_checkpoint(path: Path, expected_spec: ChannelSpec | None = None) -> Checkpoint:
    """
    Read a checkpoint.

    Raises:
        CheckpointError: unreadable file, unknown format version, or a
            channel spec different from ``expected_spec``.
    """
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {key: np.array(archive[key]) for key in archive.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if HEADER_KEY not in arrays:
        raise CheckpointError(f"{path}: missing checkpoint header")
    header = json.loads(arrays.pop(HEADER_KEY).tobytes().decode("utf-8"))
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")

    spec = ChannelSpec.model_validate(header["channel_spec"])
    if expected_spec is not None and spec != expected_spec:
        raise CheckpointError(
            f"{path}: checkpoint channel spec {spec.names} (fingerprint {spec.fingerprint()}) does not match "
            f"the run's {expected_spec.names} (fingerprint {expected_spec.fingerprint()})"
        )
    try:
        config = parse_run_config(header["config"])
    except ConfigError as exc:
        raise CheckpointError(f"{path}: embedded run config is invalid: {exc}") from exc

    params = {key[len(PARAM_PREFIX) :]: value for key, value in arrays.items() if key.startswith(PARAM_PREFIX)}
    adam = None
    if header.get("adam"):
        hyper = header["adam"]
        adam = AdamState.from_arrays(
            {key: value for key, value in arrays.items() if key.startswith("adam.")},
            lr=hyper["lr"],
            beta1=hyper["beta1"],
            beta2=hyper["beta2"],
            eps=hyper["eps"],
            t=hyper["t"],
        )
    return Checkpoint(
        architecture=header["architecture"],
        config=config,
        spec=spec,
        normalizer=Normalizer.from_dict(header["normalizer"]),
        params=params,
        step=int(header["step"]),
        adam=adam,
        best_val=header.get("best_val"),
        splits=header.get("splits"),
        extra=header.get("extra") or {},
    )
