"""
Structured logging configuration using structlog.

Provides colored console output in development and JSON lines in staging
and production, plus helpers that keep the event names and keys of
recurring records (training steps, rollouts, errors) consistent across
the engine.

IMPORTANT: configure_logging() is called once by the CLI before any
command runs; library code only ever calls get_logger().

Usage:
    from ioncast.logging_config import get_logger
    logger = get_logger(__name__)
    logger.info("mesh_built", level=3, vertices=642)
"""
import logging
import sys
from typing import Any

import structlog

from ioncast.config import get_settings


def configure_logging(level: str | None = None) -> None:
    """Configure stdlib logging and structlog for the process."""
    settings = get_settings()
    level_name = level or settings.log_level

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=getattr(logging, level_name),
    )

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.dev.ConsoleRenderer()
            if settings.environment == "development"
            else structlog.processors.JSONRenderer(),
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )


def get_logger(name: str = __name__) -> Any:
    """Get a structured logger instance."""
    return structlog.get_logger(name)


def log_error(
    logger: Any,
    error: Exception,
    context: str,
    **extra: Any,
) -> None:
    """Log error with structured context."""
    logger.error(
        "error_occurred",
        error_type=type(error).__name__,
        error_message=str(error),
        context=context,
        **extra,
        exc_info=True,
    )


def log_training_step(
    logger: Any,
    step: int,
    loss: float,
    **extra: Any,
) -> None:
    """Log one optimizer step."""
    logger.info(
        "training_step",
        step=step,
        loss=round(loss, 6),
        **extra,
    )


def log_rollout(
    logger: Any,
    model: str,
    horizon: int,
    duration_ms: float,
    **extra: Any,
) -> None:
    """Log a completed autoregressive rollout."""
    logger.debug(
        "rollout_completed",
        model=model,
        horizon=horizon,
        duration_ms=round(duration_ms, 2),
        **extra,
    )
