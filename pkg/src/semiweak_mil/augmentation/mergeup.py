"""MergeUp: union a pseudo bag with a lower-priority partner, keep the higher label."""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from semiweak_mil.data.bags import Bag, ClassPriority, PseudoBag, max_priority_label
from semiweak_mil.errors import DimensionError

logger = logging.getLogger(__name__)

SourceKey = tuple[str, int]


@dataclass(frozen=True, eq=False)
class MergedSample:
    """Concatenated instance rows (first source first) with the dominant label."""

    features: np.ndarray
    label: int
    sources: tuple[SourceKey, ...]

    @property
    def size(self) -> int:
        return int(self.features.shape[0])

    def merge_with(
        self,
        features: np.ndarray,
        label: int,
        source: SourceKey,
        priority: ClassPriority,
    ) -> "MergedSample":
        return merge_features(self.features, self.label, features, label, priority, sources=(*self.sources, source))


def merge_features(
    a_features: np.ndarray,
    a_label: int,
    b_features: np.ndarray,
    b_label: int,
    priority: ClassPriority,
    *,
    sources: tuple[SourceKey, ...] = (),
) -> MergedSample:
    if a_features.shape[1] != b_features.shape[1]:
        raise DimensionError(
            "Merged bags must share the feature dimension.",
            details=f"{a_features.shape} vs {b_features.shape}",
        )
    return MergedSample(
        features=np.concatenate([a_features, b_features], axis=0),
        label=max_priority_label(int(a_label), int(b_label), priority),
        sources=sources,
    )


def pseudo_bag_features(pseudo_bag: PseudoBag, bags: Mapping[str, Bag]) -> np.ndarray:
    return bags[pseudo_bag.parent_id].rows(pseudo_bag.member_indices)


def merge(a: PseudoBag, b: PseudoBag, priority: ClassPriority, bags: Mapping[str, Bag]) -> MergedSample:
    """Rows of ``a`` followed by rows of ``b``, labelled with the priority maximum of their effective labels."""

    return merge_features(
        pseudo_bag_features(a, bags),
        a.effective_label,
        pseudo_bag_features(b, bags),
        b.effective_label,
        priority,
        sources=(a.key, b.key),
    )


class PartnerPool:
    """Pseudo bags indexed by the rank of their effective class for fast partner draws.

    A target's candidates are pool members from other parents whose effective
    class ranks at or below the target's. When none exist the draw falls back
    to the lowest-ranked class present among other parents' pseudo bags.
    """

    def __init__(self, pool: Sequence[PseudoBag], priority: ClassPriority) -> None:
        self._priority = priority
        self._by_rank: list[list[PseudoBag]] = [[] for _ in range(priority.num_classes)]
        self._parent_ranks: dict[str, Counter[int]] = defaultdict(Counter)
        for pseudo_bag in pool:
            rank = priority.rank(pseudo_bag.effective_label)
            self._by_rank[rank].append(pseudo_bag)
            self._parent_ranks[pseudo_bag.parent_id][rank] += 1

    def __len__(self) -> int:
        return sum(len(members) for members in self._by_rank)

    def _eligible(self, parent_id: str, ranks: Sequence[int]) -> int:
        own = self._parent_ranks.get(parent_id, Counter())
        return sum(len(self._by_rank[rank]) - own[rank] for rank in ranks)

    def draw(self, target: PseudoBag, rng: np.random.Generator) -> PseudoBag | None:
        ceiling = self._priority.rank(target.effective_label)
        ranks = list(range(ceiling + 1))
        if self._eligible(target.parent_id, ranks) == 0:
            ranks = [
                rank
                for rank in range(self._priority.num_classes)
                if self._eligible(target.parent_id, [rank]) > 0
            ][:1]
        if not ranks:
            logger.debug("No merge partner available; skipping augmentation", extra={"target": target.key})
            return None
        candidates = [member for rank in ranks for member in self._by_rank[rank]]
        while True:
            choice = candidates[int(rng.integers(len(candidates)))]
            if choice.parent_id != target.parent_id:
                return choice


def select_partner(
    target: PseudoBag,
    pool: Sequence[PseudoBag],
    priority: ClassPriority,
    rng: np.random.Generator | int,
) -> PseudoBag | None:
    """Uniformly draw a partner of equal or lower priority from another parent.

    Returns ``None`` (augmentation skipped) when no pseudo bag of another parent
    exists in ``pool``.
    """

    generator = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    if not pool:
        logger.info("Empty partner pool; MergeUp skipped", extra={"target": target.key})
        return None
    return PartnerPool(pool, priority).draw(target, generator)


__all__ = ["MergedSample", "PartnerPool", "merge", "merge_features", "pseudo_bag_features", "select_partner"]
