"""
Prometheus metrics for monitoring engine runs.

Counters and histograms live in the default prometheus-client registry.
The CLI exports them to a textfile (node-exporter textfile collector
format) when IONCAST_METRICS_TEXTFILE is set, so batch runs can be
scraped after the fact.
"""
from pathlib import Path

from prometheus_client import REGISTRY, Counter, Gauge, Histogram, Info, write_to_textfile

from ioncast import __version__

engine_info = Info("ioncast_engine", "IonCast engine information")
engine_info.info({"version": __version__})

mesh2grid_fallback_total = Counter(
    "ioncast_mesh2grid_fallback",
    "Grid nodes whose containing mesh face could not be found numerically",
)

training_steps_total = Counter(
    "ioncast_training_steps",
    "Optimizer steps performed",
    ["model"],
)

training_loss = Gauge(
    "ioncast_training_loss",
    "Most recent training loss",
    ["model"],
)

rollout_steps_total = Counter(
    "ioncast_rollout_steps",
    "Autoregressive steps generated",
    ["model"],
)

rollout_duration = Histogram(
    "ioncast_rollout_duration_seconds",
    "Wall time of complete rollouts",
    ["model"],
    buckets=[0.01, 0.1, 0.5, 1.0, 5.0, 10.0, 60.0],
)

format_errors_total = Counter(
    "ioncast_format_errors",
    "Rejected input files",
    ["kind"],
)


def record_mesh2grid_fallback(count: int = 1) -> None:
    """Record containment fallbacks in mesh->grid construction."""
    mesh2grid_fallback_total.inc(count)


def record_training_step(model: str, loss: float) -> None:
    """Record one optimizer step and its loss."""
    training_steps_total.labels(model=model).inc()
    training_loss.labels(model=model).set(loss)


def record_rollout(model: str, steps: int, duration: float) -> None:
    """Record a completed rollout."""
    rollout_steps_total.labels(model=model).inc(steps)
    rollout_duration.labels(model=model).observe(duration)


def record_format_error(kind: str) -> None:
    """Record a rejected input file."""
    format_errors_total.labels(kind=kind).inc()


def sample_value(name: str, labels: dict[str, str] | None = None) -> float:
    """Current value of a sample in the default registry (0.0 when absent)."""
    value = REGISTRY.get_sample_value(name, labels or {})
    return float(value) if value is not None else 0.0


def write_metrics(path: Path) -> None:
    """Write the default registry to a Prometheus textfile."""
    path.parent.mkdir(parents=True, exist_ok=True)
    write_to_textfile(str(path), REGISTRY)
