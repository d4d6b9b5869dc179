"""
Exception hierarchy for the engine.

Every operation raises one of these classes so that callers (and the CLI
exit-code contract) can tell configuration problems apart from runtime
failures:

    exit 2  ConfigError and subclasses (bad config, invalid arguments at the surface)
    exit 1  every other IoncastError
"""


class IoncastError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class DimensionError(IoncastError):
    """Tensor or array shapes are incompatible."""


class ArgumentError(IoncastError):
    """An argument is outside its documented domain."""


class IndexOutOfRangeError(IoncastError, IndexError):
    """An index array points outside the target node set."""


class TrainingError(IoncastError):
    """Training diverged or produced a non-finite quantity."""

    def __init__(self, message: str, checkpoint_path: str | None = None) -> None:
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class ConstructionError(IoncastError):
    """A mesh or graph could not be built from the given parameters."""


class RangeError(IoncastError):
    """A timestamp lies outside the validity window of an analytic series."""


class ConfigError(IoncastError):
    """Invalid configuration; maps to CLI exit code 2."""

    exit_code = 2

    def __init__(self, message: str, key: str | None = None) -> None:
        super().__init__(message)
        self.key = key


class FormatError(IoncastError):
    """A file does not match its documented format."""


class IngestError(IoncastError):
    """A row of an input file could not be parsed."""


class AlignmentError(IoncastError):
    """Driver series could not be aligned to the requested cadence."""


class SplitError(IoncastError):
    """Train/validation/test splits could not be derived."""


class SamplingError(IoncastError):
    """No valid training sequences exist for the requested window."""


class RolloutError(IoncastError):
    """An autoregressive rollout could not proceed."""


class EvaluationError(IoncastError):
    """Evaluation was asked to score data it must not see."""


class CheckpointError(IoncastError):
    """A checkpoint is unreadable or incompatible with the run."""
