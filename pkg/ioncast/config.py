"""
Engine configuration.

Two layers:

    Settings   - process environment (IONCAST_* variables or a .env file),
                 cached singleton via get_settings().
    RunConfig  - the declarative run file passed with --config (TOML, or a
                 JSON mirror selected by the .json extension). Sections:
                 data, model, train, eval, output. Unknown keys are rejected
                 before any compute starts.

Naming convention:
    Python field  "threads"  <-->  env var  "IONCAST_THREADS"

Usage:
    from ioncast.config import get_settings, load_run_config
    settings = get_settings()
    run = load_run_config(Path("configs/desk_gnn.toml"))
"""
from __future__ import annotations

import json

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ioncast.errors import ConfigError


class Settings(BaseSettings):
    """
    Process settings loaded from environment variables.

    Groups:
        Environment  - dev/staging/prod toggle (console vs JSON logs)
        Compute      - worker threads, default float precision
        Diagnostics  - gradient-check CSV report, Prometheus textfile
    """

    model_config = SettingsConfigDict(
        env_prefix="IONCAST_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # ── Environment ────────────────────────────────────────────────
    environment: Literal["development", "staging", "production"] = Field(
        default="development",
        description="Selects console (development) or JSON log rendering",
    )
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO",
        description="Logging level",
    )

    # ── Compute ────────────────────────────────────────────────────
    threads: int = Field(
        default=1,
        ge=1,
        description="Default for --threads (parallel ablation/date-range runs)",
    )
    float_precision: Literal["float32", "float64"] = Field(
        default="float32",
        description="Default tensor precision",
    )

    # ── Diagnostics ────────────────────────────────────────────────
    # Empty string disables the report.
    gradcheck_report: str = Field(
        default="",
        description="CSV path receiving per-primitive gradient-check rows",
    )
    metrics_textfile: str = Field(
        default="",
        description="Prometheus textfile written after each CLI command",
    )


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# ── Run configuration ──────────────────────────────────────────────

TARGET_CHANNEL = "tec"

DRIVER_CHANNELS = [
    "kp", "ap", "f107", "s107", "m107", "y107",
    "symh", "bx", "by", "bz", "vx", "vy", "vz",
]  # fmt: skip

COORDINATE_CHANNELS = ["maglat", "maglon_sin", "maglon_cos"]

FORCING_CHANNELS = [
    "solar_zenith_cos",
    "lunar_zenith_cos",
    "subsolar_lat_sin",
    "subsolar_lat_cos",
    "subsolar_lon_sin",
    "subsolar_lon_cos",
    "sublunar_lat_sin",
    "sublunar_lat_cos",
    "sublunar_lon_sin",
    "sublunar_lon_cos",
    "sun_distance",
    "moon_distance",
    "local_solar_time_sin",
    "local_solar_time_cos",
]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class StormSpec(_Section):
    """One scheduled synthetic storm."""

    start_day: float = Field(ge=0)
    duration_hours: float = Field(default=18.0, gt=0)
    peak_kp: float = Field(default=7.0, ge=0, le=9)


class SynthConfig(_Section):
    n_lat: int = Field(default=18, ge=2)
    n_lon: int = Field(default=36, ge=2)
    days: float = Field(default=60.0, gt=0)
    cadence_seconds: int = Field(default=900, gt=0)
    start: str = "2015-01-01T00:00:00Z"
    seed: int = 0
    storm_count: int = Field(default=10, ge=0)
    storms: list[StormSpec] = Field(default_factory=list)
    noise_std: float = Field(default=1.0, ge=0)


class DriverSource(_Section):
    """One driver CSV plus its schema file."""

    name: str
    csv: str
    schema_path: str


class ChannelsConfig(_Section):
    """Which channels a run uses; the target is always present."""

    drivers: list[str] = Field(default_factory=lambda: list(DRIVER_CHANNELS))
    coordinates: list[str] = Field(default_factory=lambda: list(COORDINATE_CHANNELS))
    forcings: list[str] = Field(default_factory=lambda: list(FORCING_CHANNELS))

    @field_validator("drivers")
    @classmethod
    def _known_drivers(cls, value: list[str]) -> list[str]:
        return _check_names(value, DRIVER_CHANNELS, "driver")

    @field_validator("coordinates")
    @classmethod
    def _known_coordinates(cls, value: list[str]) -> list[str]:
        return _check_names(value, COORDINATE_CHANNELS, "coordinate")

    @field_validator("forcings")
    @classmethod
    def _known_forcings(cls, value: list[str]) -> list[str]:
        return _check_names(value, FORCING_CHANNELS, "forcing")


def _check_names(value: list[str], known: list[str], kind: str) -> list[str]:
    unknown = [name for name in value if name not in known]
    if unknown:
        raise ValueError(f"unknown {kind} channel(s) {unknown}; known: {known}")
    if len(set(value)) != len(value):
        raise ValueError(f"duplicate {kind} channel in {value}")
    return value


class DataConfig(_Section):
    source: Literal["synth", "files"] = "synth"
    dataset_path: str = "data/dataset.iongrid"
    events_path: str = "data/events.csv"
    # ingest inputs
    tec_path: str | None = None
    drivers: list[DriverSource] = Field(default_factory=list)
    max_gap_seconds: int = Field(default=2 * 86400, gt=0)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    channels: ChannelsConfig = Field(default_factory=ChannelsConfig)
    mag_coords: Literal["dipole", "file"] = "dipole"
    mag_pole_lat: float = Field(default=80.4, ge=-90, le=90)
    mag_pole_lon: float = Field(default=-72.6, ge=-180, le=360)
    mag_file: str | None = None

    @model_validator(mode="after")
    def _mag_file_present(self) -> DataConfig:
        if self.mag_coords == "file" and not self.mag_file:
            raise ValueError("mag_coords = 'file' requires mag_file")
        return self


class GnnConfig(_Section):
    multimesh_levels: int = Field(default=6, ge=0, le=8)
    processor_layers: int = Field(default=6, ge=0)
    latent_dim: int = Field(default=128, gt=0)
    context_len: int = Field(default=8, ge=1)
    dropout: float = Field(default=0.15, ge=0, lt=1)
    radius_scale: float = Field(default=0.6, gt=0)
    k_hop: int = Field(default=0, ge=0)
    zero_init_head: bool = False


class LstmConfig(_Section):
    encoder_layers: int = Field(default=6, ge=1)
    downsample_layers: int = Field(default=3, ge=0)
    latent_dim: int = Field(default=128, gt=0)
    context_len: int = Field(default=8, ge=1)
    dropout: float = Field(default=0.15, ge=0, lt=1)
    base_channels: int = Field(default=8, gt=0)
    max_channels: int = Field(default=64, gt=0)
    kernel_size: int = Field(default=3, ge=1)
    zero_init_head: bool = False

    @field_validator("kernel_size")
    @classmethod
    def _odd_kernel(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError("kernel_size must be odd")
        return value

    @model_validator(mode="after")
    def _downsample_fits(self) -> LstmConfig:
        if self.downsample_layers > self.encoder_layers:
            raise ValueError("downsample_layers cannot exceed encoder_layers")
        return self


ARCHITECTURE_DEFAULTS: dict[str, dict[str, float]] = {
    "gnn": {"lr": 3e-4, "batch_size": 1, "target_weight": 2.0},
    "lstm": {"lr": 2e-4, "batch_size": 4, "target_weight": 20.0},
}


class ModelConfig(_Section):
    architecture: Literal["gnn", "lstm"] = "gnn"
    residual_target: bool = True
    gnn: GnnConfig = Field(default_factory=GnnConfig)
    lstm: LstmConfig = Field(default_factory=LstmConfig)

    @property
    def context_len(self) -> int:
        return self.gnn.context_len if self.architecture == "gnn" else self.lstm.context_len


class DateRange(_Section):
    name: str
    start: str
    end: str


class TrainConfig(_Section):
    # None -> architecture default (see ARCHITECTURE_DEFAULTS)
    lr: float | None = Field(default=None, gt=0)
    batch_size: int | None = Field(default=None, ge=1)
    target_weight: float | None = Field(default=None, ge=0)
    driver_weight: float = Field(default=1.0, ge=0)
    steps: int = Field(default=2000, ge=0)
    dilation: int = Field(default=1, ge=1)
    seed: int = 0
    holdout_fraction: float = Field(default=0.1, gt=0, lt=1)
    val_every: int = Field(default=100, ge=1)
    val_starts: int = Field(default=4, ge=1)
    date_range: DateRange | None = None
    sample_count: int | None = Field(default=None, ge=1)
    resume_from: str | None = None


class EvalConfig(_Section):
    horizon: int = Field(default=48, ge=1)
    split: Literal["test", "val"] = "test"
    events: list[int] = Field(default_factory=list)
    area_weighted: bool = False
    start_stride: int = Field(default=1, ge=1)
    max_starts: int | None = Field(default=None, ge=1)
    hexbin_max: int = Field(default=100_000, ge=0)
    svg: bool = True
    ablation_seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    ablation_groups: list[str] = Field(default_factory=list)
    date_ranges: list[DateRange] = Field(default_factory=list)
    driver_sample_nodes: int = Field(default=100, ge=0)


class OutputConfig(_Section):
    directory: str = "runs/default"


class RunConfig(_Section):
    """Complete declarative description of one run."""

    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    def echo(self) -> dict[str, Any]:
        """Canonical JSON-compatible form embedded in artifacts."""
        return self.model_dump(mode="json")

    @property
    def lr(self) -> float:
        return self.train.lr or ARCHITECTURE_DEFAULTS[self.model.architecture]["lr"]

    @property
    def batch_size(self) -> int:
        return self.train.batch_size or int(ARCHITECTURE_DEFAULTS[self.model.architecture]["batch_size"])

    @property
    def target_weight(self) -> float:
        if self.train.target_weight is not None:
            return self.train.target_weight
        return ARCHITECTURE_DEFAULTS[self.model.architecture]["target_weight"]


def _error_key(error: dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ()))


def parse_run_config(raw: dict[str, Any]) -> RunConfig:
    """Validate a raw mapping, mapping pydantic errors onto ConfigError."""
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = _error_key(first)
        raise ConfigError(f"invalid config key '{key}': {first['msg']}", key=key) from exc


def load_run_config(path: Path) -> RunConfig:
    """
    Read a run file.

    Args:
        path: ``.toml`` file, or ``.json`` for the JSON mirror.

    Raises:
        ConfigError: unreadable file, syntax error or invalid key.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = json.loads(text) if path.suffix.lower() == ".json" else tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_run_config(raw)
