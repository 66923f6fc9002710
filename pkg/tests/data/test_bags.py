from __future__ import annotations

import itertools

import numpy as np
import pytest

from semiweak_mil.data.bags import Bag, ClassPriority, Dataset, PseudoBag, Status, max_priority_label
from semiweak_mil.errors import DataError, DomainError, LifecycleError


def _bag(bag_id: str, label: int, instance_labels=None, rows: int = 3, dim: int = 2) -> Bag:
    return Bag(id=bag_id, features=np.ones((rows, dim)), label=label, instance_labels=instance_labels)


def test_max_priority_label_binary_examples(binary_priority) -> None:
    assert max_priority_label(1, 0, binary_priority) == 1
    assert max_priority_label(0, 1, binary_priority) == 1
    assert max_priority_label(0, 0, binary_priority) == 0


def test_max_priority_label_follows_explicit_order() -> None:
    priority = ClassPriority.from_order(("benign", "atypical", "malignant"), ("benign", "atypical", "malignant"))
    assert max_priority_label(2, 1, priority) == 2

    reordered = ClassPriority.from_order(("a", "b", "c"), ("c", "a", "b"))
    assert max_priority_label(2, 0, reordered) == 0
    assert max_priority_label(1, 0, reordered) == 1


@pytest.mark.parametrize("num_classes", [2, 3, 4])
def test_max_priority_label_is_rank_max_for_every_order(num_classes: int) -> None:
    classes = tuple(f"c{index}" for index in range(num_classes))
    for ranks in itertools.permutations(range(num_classes)):
        priority = ClassPriority(classes=classes, ranks=ranks)
        for a, b in itertools.product(range(num_classes), repeat=2):
            result = max_priority_label(a, b, priority)
            assert result in (a, b)
            assert priority.rank(result) == max(ranks[a], ranks[b])
            assert result == max_priority_label(b, a, priority)


@pytest.mark.parametrize("num_classes", [2, 3, 4])
def test_max_priority_label_is_associative_and_idempotent(num_classes: int) -> None:
    classes = tuple(f"c{index}" for index in range(num_classes))
    for ranks in itertools.permutations(range(num_classes)):
        priority = ClassPriority(classes=classes, ranks=ranks)
        for a, b, c in itertools.product(range(num_classes), repeat=3):
            left = max_priority_label(max_priority_label(a, b, priority), c, priority)
            right = max_priority_label(a, max_priority_label(b, c, priority), priority)
            assert left == right == priority.max_of([a, b, c])
        for a in range(num_classes):
            assert max_priority_label(a, a, priority) == a


def test_max_of_over_many_labels() -> None:
    priority = ClassPriority.ascending(("a", "b", "c"))
    assert priority.max_of([0, 2, 1, 0]) == 2
    assert priority.lowest() == 0
    assert priority.highest() == 2


@pytest.mark.failure_mode
def test_priority_rejects_out_of_range_labels(binary_priority) -> None:
    with pytest.raises(DomainError):
        max_priority_label(0, 2, binary_priority)
    with pytest.raises(DomainError):
        binary_priority.max_of([])


@pytest.mark.failure_mode
def test_priority_rejects_invalid_ranks() -> None:
    with pytest.raises(DomainError):
        ClassPriority(classes=("a", "b"), ranks=(0, 0))
    with pytest.raises(DomainError):
        ClassPriority.from_order(("a", "b"), ("a", "c"))
    with pytest.raises(DomainError):
        ClassPriority.ascending(("only",))


def test_bag_features_are_read_only_float32() -> None:
    bag = _bag("b0", 0)
    assert bag.features.dtype == np.float32
    assert not bag.features.flags.writeable
    assert bag.rows([0, 2]).dtype == np.float64


@pytest.mark.failure_mode
def test_bag_rejects_malformed_features() -> None:
    with pytest.raises(DataError):
        Bag(id="empty", features=np.zeros((0, 3)), label=0)
    with pytest.raises(DataError):
        Bag(id="nan", features=np.array([[np.nan, 1.0]]), label=0)
    with pytest.raises(DataError):
        Bag(id="labels", features=np.ones((3, 2)), label=0, instance_labels=[0, 1])


def test_detection_rule_is_checked_by_validate(binary_priority) -> None:
    _bag("ok", 1, instance_labels=[0, 1, 0]).validate(binary_priority)
    with pytest.raises(DataError):
        _bag("bad", 0, instance_labels=[0, 1, 0]).validate(binary_priority)
    _bag("relaxed", 0, instance_labels=[0, 1, 0]).validate(binary_priority, detection=False)


def test_pseudo_bag_lifecycle() -> None:
    pending = PseudoBag(parent_id="p", slot=0, member_indices=(0, 2), inherited_label=1)
    annotated = pending.annotated(prediction=0, confidence=0.7)
    assert not annotated.is_consistent
    assert annotated.effective_label == 0

    unlabeled = annotated.transition(Status.UNLABELED)
    assert unlabeled.status is Status.UNLABELED
    assert unlabeled.effective_label == 0

    labeled = pending.annotated(prediction=1, confidence=0.9).transition(Status.LABELED)
    assert labeled.is_consistent
    assert labeled.effective_label == 1
    assert labeled.key == ("p", 0)
    assert labeled.size == 2


@pytest.mark.failure_mode
def test_pseudo_bag_terminal_states_are_final() -> None:
    done = PseudoBag(parent_id="p", slot=1, member_indices=(1,), inherited_label=0).transition(Status.DISCARDED)
    with pytest.raises(LifecycleError):
        done.transition(Status.LABELED)
    with pytest.raises(LifecycleError):
        done.annotated(prediction=0, confidence=1.0)
    with pytest.raises(LifecycleError):
        PseudoBag(parent_id="p", slot=1, member_indices=(1,), inherited_label=0).transition(Status.PENDING)


@pytest.mark.failure_mode
def test_pseudo_bag_members_must_be_sorted_and_non_empty() -> None:
    with pytest.raises(DataError):
        PseudoBag(parent_id="p", slot=0, member_indices=(), inherited_label=0)
    with pytest.raises(DataError):
        PseudoBag(parent_id="p", slot=0, member_indices=(2, 1), inherited_label=0)
    with pytest.raises(DataError):
        PseudoBag(parent_id="p", slot=0, member_indices=(1, 1), inherited_label=0)


def test_dataset_subsets_and_lookup(binary_priority) -> None:
    bags = (_bag("a", 0), _bag("b", 1, instance_labels=[1, 0, 0]), _bag("c", 0))
    ds = Dataset(bags=bags, priority=binary_priority, split={"a": "train", "b": "val", "c": "train"})

    assert [bag.id for bag in ds.subset("train")] == ["a", "c"]
    assert ds.bag("b").label == 1
    assert ds.dim == 2
    assert ds.num_classes == 2
    assert not ds.has_oracle
    with pytest.raises(DataError):
        ds.bag("missing")


@pytest.mark.failure_mode
def test_dataset_rejects_inconsistent_inputs(binary_priority) -> None:
    with pytest.raises(DataError):
        Dataset(bags=(_bag("a", 0), _bag("a", 0)), priority=binary_priority, split={"a": "train"})
    with pytest.raises(DataError):
        Dataset(bags=(_bag("a", 0),), priority=binary_priority, split={})
    with pytest.raises(DataError):
        Dataset(bags=(_bag("a", 0),), priority=binary_priority, split={"a": "holdout"})
    with pytest.raises(DataError):
        Dataset(
            bags=(_bag("a", 0), _bag("b", 0, dim=3)),
            priority=binary_priority,
            split={"a": "train", "b": "train"},
        )
