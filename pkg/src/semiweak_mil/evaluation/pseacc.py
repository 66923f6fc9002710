"""Pseudo label accuracy against oracle instance labels."""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass

from semiweak_mil.data.bags import Bag, ClassPriority, PseudoBag
from semiweak_mil.errors import OracleError
from semiweak_mil.pseudobags.adapse import RoundPlan


def true_label(pseudo_bag: PseudoBag, parent: Bag, priority: ClassPriority) -> int:
    """Highest-priority oracle class among the pseudo bag's members."""

    if parent.instance_labels is None:
        raise OracleError("Instance labels are required for pseudo label accuracy.", details=f"bag={parent.id}")
    return priority.max_of(int(parent.instance_labels[index]) for index in pseudo_bag.member_indices)


def _score(pseudo_bags: Iterable[PseudoBag], bags: Mapping[str, Bag], priority: ClassPriority) -> float | None:
    hits = 0
    total = 0
    for pseudo_bag in pseudo_bags:
        parent = bags.get(pseudo_bag.parent_id)
        if parent is None:
            raise OracleError("Pseudo bag references an unknown parent.", details=f"parent={pseudo_bag.parent_id}")
        hits += int(pseudo_bag.inherited_label == true_label(pseudo_bag, parent, priority))
        total += 1
    if total == 0:
        return None
    return hits / total


@dataclass(frozen=True)
class PseAccResult:
    labeled: float | None
    surviving: float | None
    num_labeled: int
    num_surviving: int

    @property
    def value(self) -> float:
        """Labeled-only accuracy, or the all-surviving variant when nothing is labeled."""

        if self.labeled is not None:
            return self.labeled
        return self.surviving if self.surviving is not None else 0.0

    def to_dict(self) -> dict[str, float | int | None]:
        return {
            "labeled": self.labeled,
            "surviving": self.surviving,
            "value": self.value,
            "num_labeled": self.num_labeled,
            "num_surviving": self.num_surviving,
        }


def pse_acc(plan: RoundPlan, bags: Mapping[str, Bag], priority: ClassPriority) -> PseAccResult:
    """Score labeled pseudo bags (assigned label) and all surviving ones (inherited label)."""

    return PseAccResult(
        labeled=_score(plan.labeled, bags, priority),
        surviving=_score(plan.surviving, bags, priority),
        num_labeled=len(plan.labeled),
        num_surviving=len(plan.surviving),
    )


__all__ = ["PseAccResult", "pse_acc", "true_label"]
