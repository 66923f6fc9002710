"""Training report and its on-disk artifacts (``report.json``, ``pseacc.csv``)."""

from __future__ import annotations

import csv
import json
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from semiweak_mil.errors import StoreWriteError
from semiweak_mil.model.checkpoint import Checkpoint

PSEACC_COLUMNS = ("round", "method", "pseacc")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float

    def to_dict(self) -> dict[str, Any]:
        return {"epoch": self.epoch, "train_loss": self.train_loss, "val_loss": self.val_loss, "lr": self.lr}


@dataclass(frozen=True)
class RoundRecord:
    """One round of training; round 0 is the whole-bag warm-up."""

    round: int
    epochs: tuple[EpochRecord, ...]
    stopped_early: bool
    val_metrics: dict[str, Any]
    plan: dict[str, Any] | None = None
    pseacc: dict[str, Any] | None = None

    @property
    def best_val_loss(self) -> float:
        return min(epoch.val_loss for epoch in self.epochs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "plan": self.plan,
            "pseacc": self.pseacc,
            "epochs": [epoch.to_dict() for epoch in self.epochs],
            "stopped_early": self.stopped_early,
            "val": self.val_metrics,
        }


@dataclass(frozen=True)
class TrainReport:
    config: dict[str, Any]
    method: str
    warmup: RoundRecord | None
    rounds: tuple[RoundRecord, ...]
    best_round: int
    best_val_score: float
    test_metrics: dict[str, Any] | None
    checkpoint: Checkpoint | None = field(default=None, compare=False)

    def pseacc_rows(self) -> list[tuple[int, str, float]]:
        rows: list[tuple[int, str, float]] = []
        for record in self.rounds:
            if record.pseacc is not None:
                rows.append((record.round, self.method, float(record.pseacc["value"])))
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "method": self.method,
            "warmup": self.warmup.to_dict() if self.warmup is not None else None,
            "rounds": [record.to_dict() for record in self.rounds],
            "best": {"round": self.best_round, "val_score": self.best_val_score, "checkpoint": "best.ckpt"},
            "test": self.test_metrics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path: str | os.PathLike[str]) -> None:
        _write_text(Path(path), self.to_json())


def pseacc_csv(rows: Iterable[Sequence[Any]]) -> str:
    lines = [",".join(PSEACC_COLUMNS)]
    lines.extend(f"{int(round_index)},{method},{float(value)!r}" for round_index, method, value in rows)
    return "\n".join(lines) + "\n"


def write_pseacc_csv(rows: Iterable[Sequence[Any]], path: str | os.PathLike[str]) -> None:
    _write_text(Path(path), pseacc_csv(rows))


def read_pseacc_csv(path: str | os.PathLike[str]) -> list[tuple[int, str, float]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return [(int(row["round"]), row["method"], float(row["pseacc"])) for row in reader]


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise StoreWriteError("Failed to write artifact.", details=f"{path}: {exc}") from exc


__all__ = [
    "PSEACC_COLUMNS",
    "EpochRecord",
    "RoundRecord",
    "TrainReport",
    "pseacc_csv",
    "read_pseacc_csv",
    "write_pseacc_csv",
]
