"""Training configuration: a flat, frozen set of snake_case keys."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Final

from semiweak_mil.errors import ConfigError
from semiweak_mil.pseudobags.adapse import AssignmentSettings

_IIS_MODES = ("attention", "shapley")
_IIS_SOURCES = ("teacher", "student")
_ASSIGNMENTS = ("adapse", "iis", "random")
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

# Pseudo bag and pseudo label counts used for the public WSI benchmarks.
PRESETS: Final[dict[str, dict[str, int]]] = {
    "camelyon16": {"num_pseudo_bags": 8, "max_labels": 4},
    "bracs": {"num_pseudo_bags": 10, "max_labels": 6},
    "tcga-lung": {"num_pseudo_bags": 10, "max_labels": 4},
}


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 10
    epochs_per_round: int = 4
    warmup_epochs: int = 5
    patience: int = 10
    lr_initial: float = 3e-4
    lr_reduced: float = 1e-4
    num_pseudo_bags: int = 8
    max_labels: int = 4
    gamma_fix: float = 0.95
    gamma_0: float = 0.5
    gamma_max: float = 0.95
    ema_decay: float = 0.99
    iis_mode: str = "attention"
    iis_source: str = "teacher"
    assignment: str = "adapse"
    merge_supervised: bool = True
    mergeup: bool = True
    mismatched_consistency: bool = False
    hidden_dim: int = 128
    shapley_samples_per_instance: int = 200
    workers: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        problems: list[str] = []
        for name in ("rounds", "epochs_per_round", "patience", "num_pseudo_bags", "max_labels", "hidden_dim"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.warmup_epochs < 0:
            problems.append("warmup_epochs must be >= 0")
        if self.workers < 1:
            problems.append("workers must be >= 1")
        if self.shapley_samples_per_instance < 1:
            problems.append("shapley_samples_per_instance must be >= 1")
        if not (self.lr_initial > 0 and self.lr_reduced > 0):
            problems.append("learning rates must be > 0")
        if not 0.0 <= self.gamma_fix <= 1.0:
            problems.append("gamma_fix must lie in [0, 1]")
        if not 0.0 <= self.gamma_0 <= self.gamma_max <= 1.0:
            problems.append("thresholds must satisfy 0 <= gamma_0 <= gamma_max <= 1")
        if not 0.0 <= self.ema_decay <= 1.0:
            problems.append("ema_decay must lie in [0, 1]")
        if self.iis_mode not in _IIS_MODES:
            problems.append(f"iis_mode must be one of {', '.join(_IIS_MODES)}")
        if self.iis_source not in _IIS_SOURCES:
            problems.append(f"iis_source must be one of {', '.join(_IIS_SOURCES)}")
        if self.assignment not in _ASSIGNMENTS:
            problems.append(f"assignment must be one of {', '.join(_ASSIGNMENTS)}")
        if problems:
            raise ConfigError("Invalid training configuration.", details="; ".join(problems))

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "TrainConfig":
        known = {item.name for item in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError("Unknown configuration keys.", details=", ".join(unknown))
        defaults = cls()
        coerced = {key: _coerce(key, value, getattr(defaults, key)) for key, value in data.items()}
        return cls(**coerced)

    @classmethod
    def preset(cls, name: str, **overrides: Any) -> "TrainConfig":
        try:
            values = dict(PRESETS[name])
        except KeyError as exc:
            raise ConfigError("Unknown preset.", details=f"{name}; choose from {', '.join(sorted(PRESETS))}") from exc
        values.update(overrides)
        return cls.from_mapping(values)

    def with_overrides(self, assignments: Iterable[str]) -> "TrainConfig":
        """Apply ``key=value`` strings, coercing each value to the field's type."""

        updates: dict[str, Any] = {}
        for assignment in assignments:
            key, sep, raw = assignment.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ConfigError("Overrides must look like key=value.", details=assignment)
            updates[key] = raw.strip()
        merged = {**self.to_dict(), **updates}
        return TrainConfig.from_mapping(merged)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def assignment_settings(self) -> AssignmentSettings:
        return AssignmentSettings(
            num_pseudo_bags=self.num_pseudo_bags,
            max_labels=self.max_labels,
            gamma_fix=self.gamma_fix,
            method=self.assignment,  # type: ignore[arg-type]
            iis_mode=self.iis_mode,  # type: ignore[arg-type]
            shapley_samples_per_instance=self.shapley_samples_per_instance,
        )

    def updated(self, **changes: Any) -> "TrainConfig":
        return replace(self, **changes)


def _coerce(key: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in _TRUE:
            return True
        if text in _FALSE:
            return False
        raise ConfigError("Expected a boolean.", details=f"{key}={value!r}")
    try:
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            if isinstance(value, str):
                return int(value.strip())
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError("Configuration value has the wrong type.", details=f"{key}={value!r}") from exc
    return str(value)


__all__ = ["PRESETS", "TrainConfig"]
