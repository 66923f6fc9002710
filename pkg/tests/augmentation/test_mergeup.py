from __future__ import annotations

import itertools
import logging
from collections import Counter

import numpy as np
import pytest

from semiweak_mil.augmentation.mergeup import PartnerPool, merge, merge_features, select_partner
from semiweak_mil.data.bags import Bag, ClassPriority, PseudoBag, Status
from semiweak_mil.errors import DimensionError
from semiweak_mil.model.abmil import forward


def _labeled(parent: str, label: int, members=(0, 1), slot: int = 0) -> PseudoBag:
    pseudo_bag = PseudoBag(parent_id=parent, slot=slot, member_indices=tuple(members), inherited_label=label)
    return pseudo_bag.annotated(label, 0.9).transition(Status.LABELED)


@pytest.fixture()
def bags(rng) -> dict[str, Bag]:
    return {
        name: Bag(id=name, features=rng.normal(size=(4, 4)), label=label)
        for name, label in (("t1", 1), ("t2", 1), ("n1", 0), ("n2", 0), ("n3", 0))
    }


def test_tumor_merged_with_normal_stays_tumor(binary_priority, bags) -> None:
    merged = merge(_labeled("t1", 1), _labeled("n1", 0, members=(2, 3)), binary_priority, bags)

    assert merged.label == 1
    assert merged.size == 4
    assert merged.sources == (("t1", 0), ("n1", 0))
    np.testing.assert_array_equal(merged.features[:2], bags["t1"].rows((0, 1)))
    np.testing.assert_array_equal(merged.features[2:], bags["n1"].rows((2, 3)))


def test_merging_with_a_copy_keeps_the_label(binary_priority, bags) -> None:
    for label, parent in ((0, "n1"), (1, "t1")):
        pseudo_bag = _labeled(parent, label)
        assert merge(pseudo_bag, pseudo_bag, binary_priority, bags).label == label


def test_merged_label_is_the_rank_maximum_for_three_classes() -> None:
    rows = np.zeros((1, 2))
    for ranks in itertools.permutations(range(3)):
        priority = ClassPriority(classes=("a", "b", "c"), ranks=ranks)
        for a, b in itertools.product(range(3), repeat=2):
            merged = merge_features(rows, a, rows, b, priority)
            assert priority.rank(merged.label) == max(ranks[a], ranks[b])


def test_repeated_merges_with_normals_never_change_a_tumor_label(binary_priority, rng) -> None:
    sample = merge_features(rng.normal(size=(3, 4)), 1, rng.normal(size=(2, 4)), 0, binary_priority)
    for index in range(20):
        sample = sample.merge_with(rng.normal(size=(2, 4)), 0, (f"n{index}", 0), binary_priority)

    assert sample.label == 1
    assert sample.size == 3 + 2 + 20 * 2
    assert len(sample.sources) == 20


def test_merged_forward_equals_the_union_bag(binary_priority, bags, model) -> None:
    a = _labeled("t1", 1, members=(0, 2, 3))
    b = _labeled("n2", 0, members=(1,))

    forwards = merge(a, b, binary_priority, bags)
    backwards = merge(b, a, binary_priority, bags)
    union = np.vstack([bags["t1"].rows((0, 2, 3)), bags["n2"].rows((1,))])

    np.testing.assert_array_equal(forward(model, forwards.features).probs, forward(model, union).probs)
    np.testing.assert_allclose(forward(model, backwards.features).probs, forward(model, union).probs, atol=1e-12)
    assert forwards.label == backwards.label == 1


@pytest.mark.failure_mode
def test_dimension_mismatch_is_rejected(binary_priority) -> None:
    with pytest.raises(DimensionError):
        merge_features(np.zeros((2, 3)), 0, np.zeros((2, 4)), 1, binary_priority)


def test_partner_for_a_tumor_comes_from_other_parents_at_or_below_its_rank(binary_priority) -> None:
    target = _labeled("t1", 1)
    pool = [target, _labeled("n1", 0), _labeled("n2", 0), _labeled("t1", 1, slot=1)]

    for seed in range(50):
        partner = select_partner(target, pool, binary_priority, seed)
        assert partner.parent_id in {"n1", "n2"}


def test_lowest_class_target_pairs_within_its_class(binary_priority) -> None:
    target = _labeled("n1", 0)
    pool = [_labeled("t1", 1), _labeled("n2", 0), _labeled("t2", 1)]

    for seed in range(50):
        assert select_partner(target, pool, binary_priority, seed).parent_id == "n2"


def test_unlabeled_pseudo_bags_compare_by_teacher_prediction(binary_priority) -> None:
    predicted_normal = (
        PseudoBag(parent_id="t2", slot=0, member_indices=(0,), inherited_label=1)
        .annotated(0, 0.8)
        .transition(Status.UNLABELED)
    )
    target = _labeled("n1", 0)

    assert select_partner(target, [_labeled("t1", 1), predicted_normal], binary_priority, 0) is predicted_normal


def test_falls_back_to_the_lowest_class_present(binary_priority) -> None:
    target = _labeled("n1", 0)
    pool = [_labeled("t1", 1), _labeled("t2", 1)]

    assert select_partner(target, pool, binary_priority, 3).parent_id in {"t1", "t2"}


def test_empty_or_same_parent_pool_skips_augmentation(binary_priority, caplog) -> None:
    target = _labeled("t1", 1)

    with caplog.at_level(logging.INFO, logger="semiweak_mil.augmentation.mergeup"):
        assert select_partner(target, [], binary_priority, 0) is None
    assert any("skipped" in record.getMessage() for record in caplog.records)
    assert select_partner(target, [target, _labeled("t1", 0, slot=1)], binary_priority, 0) is None


def test_partner_draws_are_uniform(binary_priority) -> None:
    target = _labeled("t1", 1)
    partners = [_labeled("n1", 0), _labeled("n2", 0), _labeled("t2", 1)]
    pool = PartnerPool([target, *partners], binary_priority)
    rng = np.random.default_rng(2024)
    draws = 10_000

    counts = Counter(pool.draw(target, rng).parent_id for _ in range(draws))

    sigma = np.sqrt(draws * (1 / 3) * (2 / 3))
    assert set(counts) == {"n1", "n2", "t2"}
    for count in counts.values():
        assert abs(count - draws / 3) < 4 * sigma
    assert len(pool) == 4


def test_selection_is_deterministic_given_the_seed(binary_priority) -> None:
    target = _labeled("t1", 1)
    pool = [_labeled(f"n{index}", 0) for index in range(10)]

    first = [select_partner(target, pool, binary_priority, seed).parent_id for seed in range(20)]
    second = [select_partner(target, pool, binary_priority, seed).parent_id for seed in range(20)]

    assert first == second
