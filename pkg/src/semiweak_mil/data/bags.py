"""Domain types for bags, pseudo bags, class priorities and datasets."""

from __future__ import annotations

import enum
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from semiweak_mil.errors import DataError, DomainError, LifecycleError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ClassPriority:
    """Total order over class indices; a higher rank dominates when bags merge.

    ``classes`` are the class names indexed ``0..C-1``; ``ranks[c]`` is the rank
    of class ``c``.
    """

    classes: tuple[str, ...]
    ranks: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.classes) < 2:
            raise DomainError("A class priority needs at least two classes.", details=f"classes={self.classes!r}")
        if len(self.ranks) != len(self.classes):
            raise DomainError("Class priority ranks must match the class count.")
        if sorted(self.ranks) != list(range(len(self.classes))):
            raise DomainError("Class priority ranks must be a permutation of 0..C-1.", details=f"ranks={self.ranks}")

    @classmethod
    def ascending(cls, classes: Sequence[str]) -> "ClassPriority":
        """Priority where class index order is also priority order (the manifest convention)."""

        return cls(classes=tuple(classes), ranks=tuple(range(len(classes))))

    @classmethod
    def from_order(cls, classes: Sequence[str], lowest_to_highest: Sequence[str]) -> "ClassPriority":
        """Build a priority from class names listed lowest-priority first."""

        if sorted(lowest_to_highest) != sorted(classes):
            raise DomainError("Priority order must name every class exactly once.")
        position = {name: rank for rank, name in enumerate(lowest_to_highest)}
        return cls(classes=tuple(classes), ranks=tuple(position[name] for name in classes))

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def rank(self, label: int) -> int:
        self.check(label)
        return self.ranks[label]

    def check(self, label: int) -> None:
        if not 0 <= int(label) < self.num_classes:
            raise DomainError(
                "Class index out of range.",
                details=f"label={label}, num_classes={self.num_classes}",
            )

    def lowest(self) -> int:
        return self.ranks.index(0)

    def highest(self) -> int:
        return self.ranks.index(self.num_classes - 1)

    def max_of(self, labels: Iterable[int]) -> int:
        result: int | None = None
        for label in labels:
            result = int(label) if result is None else max_priority_label(result, int(label), self)
        if result is None:
            raise DomainError("Cannot take the priority maximum of no labels.")
        return result


def max_priority_label(a: int, b: int, priority: ClassPriority) -> int:
    """Return whichever of ``a`` and ``b`` ranks higher under ``priority``."""

    return a if priority.rank(a) >= priority.rank(b) else b


@dataclass(frozen=True, eq=False)
class Bag:
    """A parent sample: ``N x d`` instance features and a slide-level label.

    ``instance_labels`` is oracle information. Training code never reads it;
    only metrics and the synthetic generator do.
    """

    id: str
    features: np.ndarray
    label: int
    instance_labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        features = np.asarray(self.features)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DataError("Bag features must be a non-empty N x d matrix.", details=f"bag={self.id}")
        if not np.all(np.isfinite(features)):
            raise DataError("Bag features contain non-finite values.", details=f"bag={self.id}")
        features = features.astype(np.float32, copy=False)
        features.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "label", int(self.label))
        if self.instance_labels is not None:
            labels = np.asarray(self.instance_labels, dtype=np.int64)
            if labels.shape != (features.shape[0],):
                raise DataError("instance_labels must have one entry per instance.", details=f"bag={self.id}")
            labels.setflags(write=False)
            object.__setattr__(self, "instance_labels", labels)

    @property
    def num_instances(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def rows(self, indices: Sequence[int] | np.ndarray) -> np.ndarray:
        """Feature rows for ``indices`` widened to float64 for computation."""

        return self.features[np.asarray(indices, dtype=np.int64)].astype(np.float64)

    def validate(self, priority: ClassPriority, *, detection: bool = True) -> None:
        priority.check(self.label)
        if self.instance_labels is None:
            return
        for value in self.instance_labels:
            priority.check(int(value))
        if detection and priority.max_of(self.instance_labels) != self.label:
            raise DataError(
                "Bag label disagrees with the maximum-priority instance label.",
                details=f"bag={self.id}",
            )


class Status(str, enum.Enum):
    PENDING = "pending"
    LABELED = "labeled"
    UNLABELED = "unlabeled"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class PseudoBag:
    """An index subset of a parent bag that inherits the parent's label.

    ``slot`` is the pseudo bag's position ``a`` (0-based) within its parent.
    Status moves only from ``PENDING`` to one of the terminal states.
    """

    parent_id: str
    slot: int
    member_indices: tuple[int, ...]
    inherited_label: int
    status: Status = Status.PENDING
    prediction: int | None = None
    confidence: float | None = None

    def __post_init__(self) -> None:
        members = tuple(int(index) for index in self.member_indices)
        if not members:
            raise DataError("A pseudo bag needs at least one member.", details=f"parent={self.parent_id}")
        if any(later <= earlier for earlier, later in zip(members, members[1:])):
            raise DataError("Pseudo bag members must be strictly increasing.", details=f"parent={self.parent_id}")
        if members[0] < 0:
            raise DataError("Pseudo bag members must be non-negative.", details=f"parent={self.parent_id}")
        object.__setattr__(self, "member_indices", members)

    @property
    def key(self) -> tuple[str, int]:
        return (self.parent_id, self.slot)

    @property
    def size(self) -> int:
        return len(self.member_indices)

    @property
    def is_consistent(self) -> bool:
        return self.prediction is not None and self.prediction == self.inherited_label

    @property
    def effective_label(self) -> int:
        """Inherited label when labeled; otherwise the teacher's prediction if there is one."""

        if self.status is Status.LABELED or self.prediction is None:
            return self.inherited_label
        return self.prediction

    def annotated(self, prediction: int, confidence: float) -> "PseudoBag":
        if self.status is not Status.PENDING:
            raise LifecycleError("Only pending pseudo bags can be re-classified.", details=f"key={self.key}")
        return replace(self, prediction=int(prediction), confidence=float(confidence))

    def transition(self, status: Status) -> "PseudoBag":
        if self.status is not Status.PENDING or status is Status.PENDING:
            raise LifecycleError(
                "Illegal pseudo bag status transition.",
                details=f"key={self.key}, {self.status.value} -> {status.value}",
            )
        return replace(self, status=status)


@dataclass(frozen=True)
class Dataset:
    """Bags, their class priority and a split assignment per bag id."""

    bags: tuple[Bag, ...]
    priority: ClassPriority
    split: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "bags", tuple(self.bags))
        ids = [bag.id for bag in self.bags]
        if len(set(ids)) != len(ids):
            raise DataError("Bag ids must be unique.")
        split = dict(self.split)
        unknown = set(split) - set(ids)
        if unknown:
            raise DataError("Split assignment references unknown bags.", details=", ".join(sorted(unknown)))
        missing = [bag_id for bag_id in ids if bag_id not in split]
        if missing:
            raise DataError("Every bag needs a split assignment.", details=", ".join(missing[:5]))
        for bag_id, name in split.items():
            if name not in SPLITS:
                raise DataError("Unknown split name.", details=f"{bag_id}: {name}")
        dims = {bag.dim for bag in self.bags}
        if len(dims) > 1:
            raise DataError("All bags must share one feature dimension.", details=f"dims={sorted(dims)}")
        for bag in self.bags:
            bag.validate(self.priority)
        object.__setattr__(self, "split", split)

    @property
    def dim(self) -> int:
        if not self.bags:
            raise DataError("Dataset has no bags.")
        return self.bags[0].dim

    @property
    def num_classes(self) -> int:
        return self.priority.num_classes

    @property
    def has_oracle(self) -> bool:
        return bool(self.bags) and all(bag.instance_labels is not None for bag in self.bags)

    def subset(self, split: str) -> tuple[Bag, ...]:
        return tuple(bag for bag in self.bags if self.split[bag.id] == split)

    def bag(self, bag_id: str) -> Bag:
        for bag in self.bags:
            if bag.id == bag_id:
                return bag
        raise DataError("Unknown bag id.", details=bag_id)

    def by_id(self) -> dict[str, Bag]:
        return {bag.id: bag for bag in self.bags}

    def with_split(self, split: Mapping[str, str]) -> "Dataset":
        return Dataset(bags=self.bags, priority=self.priority, split=dict(split))


__all__ = [
    "SPLITS",
    "Bag",
    "ClassPriority",
    "Dataset",
    "PseudoBag",
    "Status",
    "max_priority_label",
]
