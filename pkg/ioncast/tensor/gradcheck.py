"""
Finite-difference verification of recorded gradients.

check_gradients() runs a function of tensors in 64-bit mode, projects its
output onto a fixed random direction to get a scalar, and compares the
reverse-mode gradient of that scalar with central differences (h=1e-5).

When IONCAST_GRADCHECK_REPORT names a CSV file, every check appends one
row per input to it (primitive, input, elements, error).
"""
from __future__ import annotations

import csv
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ioncast.config import get_settings
from ioncast.logging_config import get_logger
from ioncast.tensor import ops
from ioncast.tensor.tensor import Tensor, backward, precision, trace

logger = get_logger(__name__)

STEP = 1e-5
TOLERANCE = 1e-4

REPORT_COLUMNS = ["primitive", "input", "elements", "relative_error"]


@dataclass
class GradCheckReport:
    """Outcome of one gradient check."""

    name: str
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative difference ||a - n|| / max(||a||, ||n||, 1e-12)."""
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / scale


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    name: str = "fn",
    seed: int = 0,
    input_names: Sequence[str] | None = None,
) -> GradCheckReport:
    """
    Compare analytic and central-difference gradients of ``fn``.

    Args:
        fn: Function of Tensors returning a Tensor of any shape.
        inputs: One array per differentiable argument.
        name: Label used in the report and log records.
        seed: Seed for the projection direction.
        input_names: Labels for the inputs (default x0, x1, ...).

    Returns:
        GradCheckReport with the norm-wise relative error per input.
    """
    labels = list(input_names or [f"x{i}" for i in range(len(inputs))])
    report = GradCheckReport(name=name)

    with precision("float64"):
        bases = [np.array(value, dtype=np.float64) for value in inputs]
        sample = fn(*[Tensor(b) for b in bases])
        direction = np.random.default_rng(seed).standard_normal(sample.shape)

        def scalar(arrays: Sequence[np.ndarray]) -> float:
            out = fn(*[Tensor(a) for a in arrays])
            return float(np.sum(out.data * direction))

        tensors = [Tensor(b, requires_grad=True, name=label) for b, label in zip(bases, labels)]
        with trace() as graph:
            out = fn(*tensors)
            loss = ops.sum(ops.mul(out, Tensor(direction)))
        analytic = backward(graph, loss, dict(zip(labels, tensors)))

        for i, label in enumerate(labels):
            numeric = np.zeros_like(bases[i])
            flat = numeric.reshape(-1)
            for j in range(bases[i].size):
                shifted = [b.copy() for b in bases]
                shifted[i].reshape(-1)[j] += STEP
                plus = scalar(shifted)
                shifted[i].reshape(-1)[j] -= 2 * STEP
                minus = scalar(shifted)
                flat[j] = (plus - minus) / (2 * STEP)
            report.errors[label] = relative_error(analytic[label], numeric)

    logger.debug("gradient_check", primitive=name, max_error=report.max_error, passed=report.passed)
    target = get_settings().gradcheck_report
    if target:
        append_report(Path(target), report, {label: b.size for label, b in zip(labels, bases)})
    return report


def append_report(path: Path, report: GradCheckReport, sizes: dict[str, int]) -> None:
    """Append one row per checked input to a CSV report."""
    path.parent.mkdir(parents=True, exist_ok=True)
    new_file = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if new_file:
            writer.writerow(REPORT_COLUMNS)
        for label, error in report.errors.items():
            writer.writerow([report.name, label, sizes.get(label, 0), f"{error:.3e}"])
