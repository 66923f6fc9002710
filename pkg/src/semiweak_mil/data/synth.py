"""Synthetic MIL datasets with known instance labels.

Every non-background bag mixes a seeded fraction of instances drawn around its
class mean with background instances; background bags hold background only.
Bag labels follow the detection rule (maximum-priority instance class), so the
generated data doubles as an oracle for pseudo label accuracy.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, fields
from typing import Any

import numpy as np

from semiweak_mil.errors import DomainError

from .bags import SPLITS, Bag, ClassPriority, Dataset

_EPS = 1e-9


def separated_means(num_classes: int, dim: int, separation: float, sigma: float) -> tuple[tuple[float, ...], ...]:
    """Background at the origin, class ``c`` at ``separation * sigma`` along axis ``c - 1``."""

    if num_classes - 1 > dim:
        raise DomainError("Need at least C - 1 feature dimensions to separate class means.")
    means = np.zeros((num_classes, dim))
    for label in range(1, num_classes):
        means[label, label - 1] = separation * sigma
    return tuple(tuple(float(value) for value in row) for row in means)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic benchmark.

    ``classes`` are listed lowest priority first; index 0 is the background
    class. ``class_means`` defaults to :func:`separated_means` with
    ``separation`` when omitted.
    """

    num_train: int = 200
    num_val: int = 50
    num_test: int = 50
    min_instances: int = 30
    max_instances: int = 80
    dim: int = 16
    classes: tuple[str, ...] = ("normal", "tumor")
    positive_ratio: tuple[float, float] = (0.05, 0.20)
    separation: float = 4.0
    class_means: tuple[tuple[float, ...], ...] | None = None
    noise_sigma: float = 1.0
    seed: int = 42

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(str(name) for name in self.classes))
        object.__setattr__(self, "positive_ratio", tuple(float(value) for value in self.positive_ratio))
        if min(self.num_train, self.num_val, self.num_test) < 0:
            raise DomainError("Bag counts must be non-negative.")
        if self.num_train + self.num_val + self.num_test < 1:
            raise DomainError("A synthetic spec must produce at least one bag.")
        if not 1 <= self.min_instances <= self.max_instances:
            raise DomainError(
                "Instance count range must satisfy 1 <= min <= max.",
                details=f"range=({self.min_instances}, {self.max_instances})",
            )
        if self.dim < 1:
            raise DomainError("Feature dimension must be positive.")
        if len(self.classes) < 2 or len(set(self.classes)) != len(self.classes):
            raise DomainError("Need at least two distinct class names.")
        low, high = self.positive_ratio if len(self.positive_ratio) == 2 else (math.nan, math.nan)
        if not 0.0 < low <= high <= 1.0:
            raise DomainError("positive_ratio must satisfy 0 < low <= high <= 1.", details=f"{self.positive_ratio}")
        if not math.isfinite(self.noise_sigma) or self.noise_sigma < 0:
            raise DomainError("noise_sigma must be a finite non-negative number.", details=f"{self.noise_sigma}")
        if self.class_means is None:
            means = separated_means(len(self.classes), self.dim, self.separation, self.noise_sigma or 1.0)
            object.__setattr__(self, "class_means", means)
        else:
            object.__setattr__(self, "class_means", tuple(tuple(float(v) for v in row) for row in self.class_means))
        matrix = np.asarray(self.class_means, dtype=np.float64)
        if matrix.shape != (len(self.classes), self.dim) or not np.all(np.isfinite(matrix)):
            raise DomainError("class_means must be a finite C x d matrix.")
        for first in range(len(matrix)):
            for second in range(first + 1, len(matrix)):
                if np.array_equal(matrix[first], matrix[second]):
                    raise DomainError("Class means must be pairwise distinct.", details=f"classes {first}, {second}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def priority(self) -> ClassPriority:
        return ClassPriority.ascending(self.classes)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "SynthSpec":
        known = {item.name for item in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError("Unknown synthetic spec keys.", details=", ".join(sorted(unknown)))
        values = dict(data)
        try:
            for key in ("classes", "positive_ratio"):
                if key in values:
                    if isinstance(values[key], (str, bytes)):
                        raise TypeError(f"{key} must be a list, not a string")
                    values[key] = tuple(values[key])
            if values.get("class_means") is not None:
                values["class_means"] = tuple(tuple(row) for row in values["class_means"])
            return cls(**values)
        except (TypeError, ValueError) as exc:
            raise DomainError("Malformed synthetic spec.", details=str(exc)) from exc

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["classes"] = list(self.classes)
        payload["positive_ratio"] = list(self.positive_ratio)
        payload["class_means"] = [list(row) for row in self.class_means or ()]
        return payload


def default_benchmark() -> SynthSpec:
    """The canonical desk-scale binary benchmark."""

    return SynthSpec()


def default_benchmark_3class() -> SynthSpec:
    """Three priority-ordered classes (background < mid < high)."""

    return SynthSpec(classes=("benign", "atypical", "malignant"))


def _positive_count(rng: np.random.Generator, spec: SynthSpec, num_instances: int) -> int:
    low, high = spec.positive_ratio
    smallest = max(1, math.ceil(low * num_instances - _EPS))
    largest = min(num_instances, math.floor(high * num_instances + _EPS))
    if smallest > largest:
        return min(num_instances, max(1, round(0.5 * (low + high) * num_instances)))
    return int(rng.integers(smallest, largest + 1))


def _bag_labels(rng: np.random.Generator, count: int, num_classes: int) -> np.ndarray:
    return rng.permutation(np.arange(count) % num_classes)


def generate(spec: SynthSpec) -> Dataset:
    """Draw a dataset from ``spec``; identical specs give bitwise-identical data."""

    rng = np.random.default_rng(spec.seed)
    means = np.asarray(spec.class_means, dtype=np.float64)
    bags: list[Bag] = []
    split: dict[str, str] = {}
    counts = {"train": spec.num_train, "val": spec.num_val, "test": spec.num_test}
    for split_name in SPLITS:
        labels = _bag_labels(rng, counts[split_name], spec.num_classes)
        for index, label in enumerate(labels):
            num_instances = int(rng.integers(spec.min_instances, spec.max_instances + 1))
            instance_labels = np.zeros(num_instances, dtype=np.int64)
            if label != 0:
                positives = _positive_count(rng, spec, num_instances)
                instance_labels[rng.permutation(num_instances)[:positives]] = label
            noise = rng.standard_normal((num_instances, spec.dim))
            features = means[instance_labels] + spec.noise_sigma * noise
            bag_id = f"{split_name}_{index:04d}"
            bags.append(
                Bag(
                    id=bag_id,
                    features=features.astype(np.float32),
                    label=int(label),
                    instance_labels=instance_labels,
                )
            )
            split[bag_id] = split_name
    return Dataset(bags=tuple(bags), priority=spec.priority, split=split)


def positive_fraction(bag: Bag) -> float:
    """Share of instances whose oracle label equals the bag label (non-background bags)."""

    if bag.instance_labels is None:
        raise DomainError("Bag carries no instance labels.", details=bag.id)
    return float(np.mean(bag.instance_labels == bag.label))


def summarize(ds: Dataset) -> dict[str, Any]:
    class_counts = {name: 0 for name in ds.priority.classes}
    for bag in ds.bags:
        class_counts[ds.priority.classes[bag.label]] += 1
    return {
        "bags": len(ds.bags),
        "instances": int(sum(bag.num_instances for bag in ds.bags)),
        "dim": ds.dim,
        "splits": {name: len(ds.subset(name)) for name in SPLITS},
        "class_balance": class_counts,
    }


def stack_instances(bags: Sequence[Bag]) -> tuple[np.ndarray, np.ndarray]:
    """All instance rows of ``bags`` with their oracle labels (used by sampling checks)."""

    features = np.concatenate([bag.features for bag in bags]).astype(np.float64)
    labels = np.concatenate([bag.instance_labels for bag in bags if bag.instance_labels is not None])
    return features, labels


__all__ = [
    "SynthSpec",
    "default_benchmark",
    "default_benchmark_3class",
    "generate",
    "positive_fraction",
    "separated_means",
    "stack_instances",
    "summarize",
]
