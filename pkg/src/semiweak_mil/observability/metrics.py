"""Training counters exposed through a dedicated Prometheus registry."""

from __future__ import annotations

import logging
import os

from prometheus_client import CollectorRegistry, Counter, Gauge, generate_latest, write_to_textfile

from semiweak_mil.errors import StoreWriteError

logger = logging.getLogger(__name__)

METRICS_NAMESPACE = "semiweak_mil"


class TrainingMetrics:
    """Counters and gauges for one training process.

    Every instance owns its registry so repeated runs in one interpreter (tests,
    cross-validation folds) never collide on metric names.
    """

    def __init__(self, registry: CollectorRegistry | None = None) -> None:
        self.registry = registry if registry is not None else CollectorRegistry()
        self.steps = Counter(
            "optimizer_steps_total",
            "Student optimisation steps applied",
            ["loss"],
            namespace=METRICS_NAMESPACE,
            registry=self.registry,
        )
        self.rounds = Counter(
            "rounds_completed_total",
            "Training rounds completed, warm-up included",
            namespace=METRICS_NAMESPACE,
            registry=self.registry,
        )
        self.pseudo_bags = Counter(
            "pseudo_bags_total",
            "Pseudo bags assigned, by final status",
            ["status"],
            namespace=METRICS_NAMESPACE,
            registry=self.registry,
        )
        self.train_loss = Gauge(
            "train_loss",
            "Mean total loss of the last epoch",
            namespace=METRICS_NAMESPACE,
            registry=self.registry,
        )
        self.val_loss = Gauge(
            "val_loss",
            "Validation cross-entropy of the last epoch",
            namespace=METRICS_NAMESPACE,
            registry=self.registry,
        )
        self.learning_rate = Gauge(
            "learning_rate",
            "Current student learning rate",
            namespace=METRICS_NAMESPACE,
            registry=self.registry,
        )

    def record_step(self, *, labeled: bool) -> None:
        self.steps.labels(loss="supervised" if labeled else "consistency").inc()

    def record_plan(self, counts: dict[str, int]) -> None:
        for status, count in counts.items():
            self.pseudo_bags.labels(status=status).inc(count)

    def record_epoch(self, *, train_loss: float, val_loss: float, lr: float) -> None:
        self.train_loss.set(train_loss)
        self.val_loss.set(val_loss)
        self.learning_rate.set(lr)

    def render(self) -> bytes:
        return generate_latest(self.registry)

    def write(self, path: str | os.PathLike[str]) -> None:
        try:
            write_to_textfile(os.fspath(path), self.registry)
        except OSError as exc:
            raise StoreWriteError("Could not write the metrics file.", details=str(exc)) from exc
        logger.info("Wrote training metrics", extra={"path": os.fspath(path)})


__all__ = ["METRICS_NAMESPACE", "TrainingMetrics"]
