from __future__ import annotations

import logging

import numpy as np
import pytest

from semiweak_mil.errors import ContractError, DataError, DimensionError, DomainError
from semiweak_mil.evaluation.metrics import (
    PredictionDump,
    accuracy,
    auc_ovr,
    class_aucs,
    compute_metrics,
    confusion,
    macro_f1,
)


def _binary(pos_scores, neg_scores) -> PredictionDump:
    scores = np.array([*pos_scores, *neg_scores], dtype=np.float64)
    true = [1] * len(pos_scores) + [0] * len(neg_scores)
    return PredictionDump.from_probs(true, np.column_stack([1.0 - scores, scores]))


def _pairwise_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    pos = scores[positives]
    neg = scores[~positives]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def _random_dump(rng, num_classes: int) -> PredictionDump:
    n = int(rng.integers(num_classes + 1, 25))
    true = np.concatenate([np.arange(num_classes), rng.integers(0, num_classes, size=n - num_classes)])
    logits = np.round(rng.normal(size=(n, num_classes)), 1)
    exps = np.exp(logits)
    return PredictionDump.from_probs(true, exps / exps.sum(axis=1, keepdims=True))


def test_accuracy_examples() -> None:
    assert accuracy(PredictionDump.from_probs([0, 1], [[0.9, 0.1], [0.2, 0.8]])) == 1.0
    dump = PredictionDump.from_probs([0, 1, 1, 0], [[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.7, 0.3]])
    assert accuracy(dump) == 0.75


def test_auc_examples() -> None:
    assert auc_ovr(_binary([0.9, 0.8], [0.3, 0.2])) == 1.0
    assert auc_ovr(_binary([0.9, 0.4], [0.6, 0.2])) == pytest.approx(0.75)
    assert auc_ovr(_binary([0.5, 0.5], [0.5, 0.5])) == 0.5


def test_macro_f1_examples() -> None:
    perfect = PredictionDump.from_probs([0, 1, 1], [[0.9, 0.1], [0.2, 0.8], [0.3, 0.7]])
    assert macro_f1(perfect) == 1.0

    mixed = PredictionDump(true=[0, 0, 1, 1], pred=[0, 1, 0, 1], probs=np.full((4, 2), 0.5))
    assert confusion(mixed).tolist() == [[1, 1], [1, 1]]
    assert macro_f1(mixed) == pytest.approx(0.5)


def test_absent_class_contributes_zero_f1() -> None:
    dump = PredictionDump(true=[0, 1], pred=[0, 1], probs=[[0.8, 0.1, 0.1], [0.1, 0.8, 0.1]])

    assert macro_f1(dump) == pytest.approx(2 / 3)


@pytest.mark.parametrize("num_classes", [2, 3, 4])
def test_random_dumps_match_counting_oracles(rng, num_classes: int) -> None:
    for _ in range(1000 // 3):
        dump = _random_dump(rng, num_classes)

        expected_acc = np.mean(dump.true == dump.pred)
        assert accuracy(dump) == pytest.approx(expected_acc, abs=1e-12)

        per_class = {c: _pairwise_auc(dump.probs[:, c], dump.true == c) for c in range(num_classes)}
        expected_auc = per_class[1] if num_classes == 2 else np.mean(list(per_class.values()))
        assert auc_ovr(dump) == pytest.approx(expected_auc, abs=1e-12)

        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        for t, p in zip(dump.true, dump.pred):
            counts[t, p] += 1
        np.testing.assert_array_equal(confusion(dump), counts)


def test_auc_is_invariant_under_monotone_rescaling(rng) -> None:
    for _ in range(50):
        dump = _random_dump(rng, 2)
        squashed = dump.probs[:, 1] ** 3
        rescaled = PredictionDump.from_probs(dump.true, np.column_stack([1.0 - squashed, squashed]))

        assert auc_ovr(rescaled) == pytest.approx(auc_ovr(dump), abs=1e-12)


def test_degenerate_classes_are_skipped_with_a_warning(caplog) -> None:
    dump = PredictionDump.from_probs([0, 1, 1], [[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.3, 0.3, 0.4]])

    with caplog.at_level(logging.WARNING, logger="semiweak_mil.evaluation.metrics"):
        aucs = class_aucs(dump)

    assert set(aucs) == {0, 1}
    assert any("degenerate" in record.getMessage() for record in caplog.records)


def test_bundle_carries_per_class_scores() -> None:
    dump = PredictionDump.from_probs([0, 1, 1, 0], [[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.7, 0.3]], ids="abcd")

    bundle = compute_metrics(dump, ("normal", "tumor")).to_dict()

    assert bundle["acc"] == 0.75
    assert bundle["auc"] == 1.0
    assert bundle["confusion"] == [[2, 0], [1, 1]]
    assert bundle["per_class"]["tumor"]["recall"] == 0.5
    assert bundle["per_class"]["tumor"]["precision"] == 1.0
    assert bundle["per_class"]["normal"]["support"] == 2.0


def test_single_class_dump_has_no_auc() -> None:
    dump = PredictionDump.from_probs([1, 1], [[0.2, 0.8], [0.4, 0.6]])

    assert compute_metrics(dump).auc is None
    with pytest.raises(DataError):
        auc_ovr(dump)


@pytest.mark.failure_mode
def test_malformed_dumps_are_rejected() -> None:
    with pytest.raises(DimensionError):
        PredictionDump(true=[0, 1], pred=[0], probs=[[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(DomainError):
        PredictionDump(true=[0, 2], pred=[0, 1], probs=[[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(DataError):
        PredictionDump(true=[0, 1], pred=[0, 1], probs=[[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(DimensionError):
        PredictionDump(true=[0], pred=[0], probs=[[0.5, 0.5]], ids=("a", "b"))
    with pytest.raises(ContractError):
        accuracy(PredictionDump(true=[], pred=[], probs=np.zeros((0, 2))))
    with pytest.raises(DimensionError):
        compute_metrics(PredictionDump.from_probs([0, 1], [[0.6, 0.4], [0.4, 0.6]]), ("only",))
