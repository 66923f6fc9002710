"""Configuration, losses and the semi-weakly supervised training loop."""

from .config import PRESETS, TrainConfig
from .losses import consistency_loss, supervised_loss, total_loss
from .optim import Adam
from .report import EpochRecord, RoundRecord, TrainReport, read_pseacc_csv, write_pseacc_csv
from .trainer import (
    Evaluation,
    LabeledSample,
    SemiWeakTrainer,
    UnlabeledSample,
    evaluate,
    loss_and_gradients,
    sub_seed,
    train,
)

__all__ = [
    "PRESETS",
    "Adam",
    "EpochRecord",
    "Evaluation",
    "LabeledSample",
    "RoundRecord",
    "SemiWeakTrainer",
    "TrainConfig",
    "TrainReport",
    "UnlabeledSample",
    "consistency_loss",
    "evaluate",
    "loss_and_gradients",
    "read_pseacc_csv",
    "sub_seed",
    "supervised_loss",
    "total_loss",
    "train",
    "write_pseacc_csv",
]
