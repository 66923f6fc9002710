"""Attention MIL model and its checkpoint format."""

from .abmil import (
    PARAM_NAMES,
    MilParams,
    ParamNodes,
    Prediction,
    bind,
    ema_update,
    forward,
    forward_on_tape,
    init_params,
    instance_scores,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    "PARAM_NAMES",
    "Checkpoint",
    "MilParams",
    "ParamNodes",
    "Prediction",
    "bind",
    "ema_update",
    "forward",
    "forward_on_tape",
    "init_params",
    "instance_scores",
    "load_checkpoint",
    "save_checkpoint",
]
