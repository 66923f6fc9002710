"""Adaptive pseudo bag assignment.

Per parent bag and round: order instances by IIS, interleave them into ``M``
pseudo bags, let the frozen teacher classify each one, discard pseudo bags
that are confidently predicted as another class (``gamma_fix``), recycle their
instances evenly into the survivors, re-classify, and label the survivors
whose prediction matches the parent with confidence at least ``gamma_ada``.
Everything else trains as unlabeled data.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from semiweak_mil.data.bags import Bag, PseudoBag, Status
from semiweak_mil.errors import ContractError, DomainError, RecycleError, SplitError
from semiweak_mil.model.abmil import MilParams, forward
from semiweak_mil.runtime import map_ordered

from .iis import IisVector, iis_attention, iis_shapley

logger = logging.getLogger(__name__)

AssignmentMethod = Literal["adapse", "iis", "random"]
IisMode = Literal["attention", "shapley"]
RecycleLog = dict[tuple[str, int], list[tuple[int, tuple[int, ...]]]]


def split_interleaved(bag: Bag, order: Sequence[int] | np.ndarray, num_pseudo_bags: int) -> list[PseudoBag]:
    """Pseudo bag ``a`` takes sorted positions ``a, a + M, a + 2M, ...`` of ``order``."""

    n = bag.num_instances
    if not 1 <= num_pseudo_bags <= n:
        raise SplitError("Pseudo bag count must lie in 1..N.", details=f"M={num_pseudo_bags}, N={n}")
    order = np.asarray(order, dtype=np.int64)
    if order.shape != (n,) or not np.array_equal(np.sort(order), np.arange(n)):
        raise SplitError("Split order must be a permutation of the bag's instances.", details=f"bag={bag.id}")
    return [
        PseudoBag(
            parent_id=bag.id,
            slot=slot,
            member_indices=tuple(sorted(int(index) for index in order[slot::num_pseudo_bags])),
            inherited_label=bag.label,
        )
        for slot in range(num_pseudo_bags)
    ]


def classify_pseudo_bags(teacher: MilParams, bag: Bag, pseudo_bags: Iterable[PseudoBag]) -> list[PseudoBag]:
    """Annotate each pending pseudo bag with the teacher's label and confidence."""

    annotated: list[PseudoBag] = []
    for pseudo_bag in pseudo_bags:
        if pseudo_bag.parent_id != bag.id:
            raise ContractError("Pseudo bag classified against the wrong parent.", details=f"key={pseudo_bag.key}")
        if not pseudo_bag.member_indices or pseudo_bag.member_indices[-1] >= bag.num_instances:
            raise ContractError("Pseudo bag members fall outside the parent.", details=f"key={pseudo_bag.key}")
        prediction = forward(teacher, bag.rows(pseudo_bag.member_indices))
        annotated.append(pseudo_bag.annotated(prediction.label, prediction.confidence))
    return annotated


def _by_parent(pseudo_bags: Iterable[PseudoBag]) -> dict[str, list[PseudoBag]]:
    groups: dict[str, list[PseudoBag]] = defaultdict(list)
    for pseudo_bag in pseudo_bags:
        groups[pseudo_bag.parent_id].append(pseudo_bag)
    return groups


def discard_mislabeled(
    pseudo_bags: Iterable[PseudoBag],
    gamma_fix: float,
) -> tuple[list[PseudoBag], list[PseudoBag]]:
    """Split into ``(discarded, remaining)``.

    A pseudo bag is discarded when its prediction differs from the inherited
    label with confidence at least ``gamma_fix``. Each parent keeps at least
    one pseudo bag: the most confident consistent one, otherwise the least
    confident inconsistent one.
    """

    discarded: list[PseudoBag] = []
    remaining: list[PseudoBag] = []
    for parent_id, group in _by_parent(pseudo_bags).items():
        if any(pseudo_bag.prediction is None for pseudo_bag in group):
            raise ContractError("Pseudo bags must be classified before discarding.", details=f"parent={parent_id}")
        doomed = [pb for pb in group if not pb.is_consistent and pb.confidence >= gamma_fix]
        if len(doomed) == len(group):
            consistent = [pb for pb in group if pb.is_consistent]
            if consistent:
                keep = min(consistent, key=lambda pb: (-pb.confidence, pb.slot))
            else:
                keep = min(group, key=lambda pb: (pb.confidence, pb.slot))
            doomed = [pb for pb in doomed if pb is not keep]
            logger.warning(
                "Every pseudo bag of a parent met the discard rule; retaining one",
                extra={"parent_id": parent_id, "retained_slot": keep.slot, "confidence": keep.confidence},
            )
        doomed_ids = {id(pb) for pb in doomed}
        for pseudo_bag in group:
            if id(pseudo_bag) in doomed_ids:
                discarded.append(pseudo_bag.transition(Status.DISCARDED))
            else:
                remaining.append(pseudo_bag)
    return discarded, remaining


def recycle(
    discarded: Iterable[PseudoBag],
    remaining: Iterable[PseudoBag],
    *,
    orders: Mapping[str, np.ndarray] | None = None,
) -> tuple[list[PseudoBag], RecycleLog]:
    """Deal discarded instances round-robin into the parent's remaining pseudo bags.

    Instances are streamed discarded bag by discarded bag (slot order), each in
    the parent's IIS order when ``orders`` provides one, and dealt to the
    remaining pseudo bags in slot order starting with the first. Pseudo bags
    that receive instances lose their annotation and must be re-classified.
    """

    remaining_groups = _by_parent(remaining)
    log: RecycleLog = {}
    updated: dict[tuple[str, int], PseudoBag] = {pb.key: pb for group in remaining_groups.values() for pb in group}

    for parent_id, dropped in _by_parent(discarded).items():
        targets = sorted(remaining_groups.get(parent_id, []), key=lambda pb: pb.slot)
        if not targets:
            raise RecycleError("No remaining pseudo bag to receive recycled instances.", details=f"parent={parent_id}")
        rank: dict[int, int] | None = None
        if orders is not None and parent_id in orders:
            rank = {int(index): position for position, index in enumerate(orders[parent_id])}
        gained: dict[int, list[int]] = defaultdict(list)
        position = 0
        for source in sorted(dropped, key=lambda pb: pb.slot):
            members = list(source.member_indices)
            if rank is not None:
                members.sort(key=lambda index: rank[index])
            moves: dict[int, list[int]] = defaultdict(list)
            for index in members:
                target = targets[position % len(targets)]
                moves[target.slot].append(index)
                gained[target.slot].append(index)
                position += 1
            log[source.key] = [(slot, tuple(indices)) for slot, indices in sorted(moves.items())]
        for target in targets:
            extra = gained.get(target.slot)
            if not extra:
                continue
            updated[target.key] = PseudoBag(
                parent_id=parent_id,
                slot=target.slot,
                member_indices=tuple(sorted((*target.member_indices, *extra))),
                inherited_label=target.inherited_label,
            )

    order_keys = [pb.key for group in remaining_groups.values() for pb in group]
    return [updated[key] for key in order_keys], log


def assign_labels(
    remaining: Iterable[PseudoBag],
    gamma_ada: float,
    max_labels: int | None = None,
) -> tuple[list[PseudoBag], list[PseudoBag]]:
    """Split classified pseudo bags into ``(labeled, unlabeled)``.

    Consistent pseudo bags with confidence at least ``gamma_ada`` qualify; per
    parent at most ``max_labels`` of them, the most confident first, are
    labeled. Everything else is unlabeled.
    """

    if max_labels is not None and max_labels < 1:
        raise DomainError("max_labels must be at least 1.", details=f"max_labels={max_labels}")
    labeled: list[PseudoBag] = []
    unlabeled: list[PseudoBag] = []
    for parent_id, group in _by_parent(remaining).items():
        if any(pseudo_bag.prediction is None for pseudo_bag in group):
            raise ContractError("Pseudo bags must be classified before labeling.", details=f"parent={parent_id}")
        qualifying = sorted(
            (pb for pb in group if pb.is_consistent and pb.confidence >= gamma_ada),
            key=lambda pb: (-pb.confidence, pb.slot),
        )
        chosen = {pb.key for pb in (qualifying if max_labels is None else qualifying[:max_labels])}
        for pseudo_bag in group:
            if pseudo_bag.key in chosen:
                labeled.append(pseudo_bag.transition(Status.LABELED))
            else:
                unlabeled.append(pseudo_bag.transition(Status.UNLABELED))
    return labeled, unlabeled


def gamma_ada_schedule(round_index: int, total_rounds: int, gamma_0: float, gamma_max: float) -> float:
    """Linear ramp from ``gamma_0`` at round 1 to ``gamma_max`` at the last round."""

    if not 1 <= round_index <= total_rounds:
        raise DomainError("Round index must lie in 1..R.", details=f"r={round_index}, R={total_rounds}")
    if not 0.0 <= gamma_0 <= gamma_max <= 1.0:
        raise DomainError("Thresholds must satisfy 0 <= gamma_0 <= gamma_max <= 1.")
    if total_rounds == 1:
        return gamma_0
    return gamma_0 + (gamma_max - gamma_0) * (round_index - 1) / (total_rounds - 1)


@dataclass(frozen=True)
class AssignmentSettings:
    num_pseudo_bags: int = 8
    max_labels: int = 4
    gamma_fix: float = 0.95
    method: AssignmentMethod = "adapse"
    iis_mode: IisMode = "attention"
    shapley_samples_per_instance: int = 200


@dataclass(frozen=True)
class RoundPlan:
    """Outcome of one round of pseudo bag assignment over the training bags."""

    round_index: int
    gamma_fix: float
    gamma_ada: float
    method: str
    pseudo_bags: tuple[PseudoBag, ...]
    recycle_log: RecycleLog = field(default_factory=dict)

    @property
    def labeled(self) -> tuple[PseudoBag, ...]:
        return tuple(pb for pb in self.pseudo_bags if pb.status is Status.LABELED)

    @property
    def unlabeled(self) -> tuple[PseudoBag, ...]:
        return tuple(pb for pb in self.pseudo_bags if pb.status is Status.UNLABELED)

    @property
    def discarded(self) -> tuple[PseudoBag, ...]:
        return tuple(pb for pb in self.pseudo_bags if pb.status is Status.DISCARDED)

    @property
    def surviving(self) -> tuple[PseudoBag, ...]:
        return tuple(pb for pb in self.pseudo_bags if pb.status in (Status.LABELED, Status.UNLABELED))

    def summary(self) -> dict[str, Any]:
        return {
            "round": self.round_index,
            "method": self.method,
            "gamma_fix": self.gamma_fix,
            "gamma_ada": self.gamma_ada,
            "labeled": len(self.labeled),
            "unlabeled": len(self.unlabeled),
            "discarded": len(self.discarded),
        }

    def to_dict(self) -> dict[str, Any]:
        payload = self.summary()
        payload["pseudo_bags"] = [
            {
                "parent": pb.parent_id,
                "slot": pb.slot,
                "size": pb.size,
                "inherited": pb.inherited_label,
                "prediction": pb.prediction,
                "confidence": pb.confidence,
                "status": pb.status.value,
            }
            for pb in self.pseudo_bags
        ]
        payload["recycle_log"] = [
            {"parent": key[0], "slot": key[1], "moves": [{"to": slot, "instances": list(ix)} for slot, ix in moves]}
            for key, moves in self.recycle_log.items()
        ]
        return payload


def verify_partition(plan: RoundPlan, bags: Iterable[Bag]) -> None:
    """Raise unless every parent's surviving pseudo bags partition its instances exactly."""

    surviving = _by_parent(plan.surviving)
    for bag in bags:
        members = sorted(index for pb in surviving.get(bag.id, []) for index in pb.member_indices)
        if members != list(range(bag.num_instances)):
            raise ContractError("Surviving pseudo bags do not partition the parent.", details=f"bag={bag.id}")


def _iis_order(
    model: MilParams,
    bag: Bag,
    settings: AssignmentSettings,
    seed: int,
) -> IisVector:
    if settings.iis_mode == "shapley":
        samples = max(1, settings.shapley_samples_per_instance * bag.num_instances)
        return iis_shapley(model, bag, samples, seed)
    return iis_attention(model, bag)


def _bag_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def assign_parent(
    bag: Bag,
    *,
    teacher: MilParams,
    iis_model: MilParams,
    settings: AssignmentSettings,
    gamma_ada: float,
    seed: int,
) -> tuple[list[PseudoBag], RecycleLog]:
    """Run the configured assignment method for one parent bag.

    Labeled pseudo bags carry a prediction equal to their inherited label, except
    for the baseline methods and the single-pseudo-bag case, which leave it unset.
    """

    num_pseudo_bags = min(settings.num_pseudo_bags, bag.num_instances)
    if settings.method == "random":
        order = np.random.default_rng(seed).permutation(bag.num_instances)
    else:
        order = _iis_order(iis_model, bag, settings, seed).order

    pseudo_bags = split_interleaved(bag, order, num_pseudo_bags)
    if settings.method != "adapse":
        return [pb.transition(Status.LABELED) for pb in pseudo_bags], {}
    if num_pseudo_bags == 1:
        # The single pseudo bag is the parent itself; it keeps the parent's label unclassified.
        return [pseudo_bags[0].transition(Status.LABELED)], {}

    classified = classify_pseudo_bags(teacher, bag, pseudo_bags)
    discarded, remaining = discard_mislabeled(classified, settings.gamma_fix)
    remaining, log = recycle(discarded, remaining, orders={bag.id: order})
    pending = [pb for pb in remaining if pb.prediction is None]
    if pending:
        fresh = {pb.key: pb for pb in classify_pseudo_bags(teacher, bag, pending)}
        remaining = [fresh.get(pb.key, pb) for pb in remaining]
    labeled, unlabeled = assign_labels(remaining, gamma_ada, settings.max_labels)
    final = sorted([*labeled, *unlabeled, *discarded], key=lambda pb: pb.slot)
    return final, log


def build_round_plan(
    bags: Sequence[Bag],
    *,
    teacher: MilParams,
    iis_model: MilParams,
    settings: AssignmentSettings,
    round_index: int,
    gamma_ada: float,
    seed: int,
    workers: int = 1,
) -> RoundPlan:
    """Assign pseudo bags for every training bag; parents are processed independently."""

    jobs: list[Callable[[], tuple[list[PseudoBag], RecycleLog]]] = [
        (
            lambda bag=bag, index=index: assign_parent(
                bag,
                teacher=teacher,
                iis_model=iis_model,
                settings=settings,
                gamma_ada=gamma_ada,
                seed=_bag_seed(seed, index),
            )
        )
        for index, bag in enumerate(bags)
    ]
    results = map_ordered(lambda job: job(), jobs, max_workers=workers)
    pseudo_bags: list[PseudoBag] = []
    recycle_log: RecycleLog = {}
    for final, log in results:
        pseudo_bags.extend(final)
        recycle_log.update(log)
    plan = RoundPlan(
        round_index=round_index,
        gamma_fix=settings.gamma_fix,
        gamma_ada=gamma_ada,
        method=settings.method,
        pseudo_bags=tuple(pseudo_bags),
        recycle_log=recycle_log,
    )
    logger.info("Built pseudo bag plan", extra=plan.summary())
    return plan


__all__ = [
    "AssignmentSettings",
    "RoundPlan",
    "assign_labels",
    "assign_parent",
    "build_round_plan",
    "classify_pseudo_bags",
    "discard_mislabeled",
    "gamma_ada_schedule",
    "recycle",
    "split_interleaved",
    "verify_partition",
]
