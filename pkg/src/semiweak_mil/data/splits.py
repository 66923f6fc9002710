"""Label-stratified cross-validation split assignment."""

from __future__ import annotations

import numpy as np

from semiweak_mil.errors import ConfigError

from .bags import Dataset


def cross_validation_splits(
    ds: Dataset,
    *,
    folds: int = 3,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> list[Dataset]:
    """Return one dataset per fold with fresh train/val/test assignments.

    Bags of each class are shuffled and dealt round-robin into ``folds`` groups.
    For fold ``k`` group ``k`` is the test split; from every class of the
    remaining bags a ``val_fraction`` share (at least one when the class has two
    or more bags) becomes validation and the rest trains.
    """

    if folds < 2:
        raise ConfigError("Cross-validation needs at least two folds.", details=f"folds={folds}")
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError("val_fraction must lie in (0, 1).", details=f"val_fraction={val_fraction}")
    if len(ds.bags) < folds:
        raise ConfigError("Fewer bags than folds.", details=f"bags={len(ds.bags)}, folds={folds}")

    rng = np.random.default_rng(seed)
    labels = sorted({bag.label for bag in ds.bags})
    fold_of: dict[str, int] = {}
    offset = 0
    for label in labels:
        ids = [bag.id for bag in ds.bags if bag.label == label]
        for position, index in enumerate(rng.permutation(len(ids))):
            fold_of[ids[int(index)]] = (offset + position) % folds
        offset += len(ids)

    datasets: list[Dataset] = []
    for fold in range(folds):
        split: dict[str, str] = {}
        for label in labels:
            rest = [bag.id for bag in ds.bags if bag.label == label and fold_of[bag.id] != fold]
            n_val = int(round(val_fraction * len(rest)))
            if len(rest) >= 2:
                n_val = min(max(n_val, 1), len(rest) - 1)
            chosen = {rest[int(index)] for index in rng.permutation(len(rest))[:n_val]}
            for bag_id in rest:
                split[bag_id] = "val" if bag_id in chosen else "train"
        for bag in ds.bags:
            if fold_of[bag.id] == fold:
                split[bag.id] = "test"
        datasets.append(ds.with_split(split))
    return datasets


__all__ = ["cross_validation_splits"]
