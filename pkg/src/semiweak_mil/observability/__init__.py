"""Structured logging and training counters."""

from .logs import JsonFormatter, configure_logging
from .metrics import TrainingMetrics

__all__ = ["JsonFormatter", "TrainingMetrics", "configure_logging"]
