"""Instance importance scoring and adaptive pseudo bag assignment."""

from .adapse import (
    AssignmentSettings,
    RoundPlan,
    assign_labels,
    assign_parent,
    build_round_plan,
    classify_pseudo_bags,
    discard_mislabeled,
    gamma_ada_schedule,
    recycle,
    split_interleaved,
    verify_partition,
)
from .iis import IisVector, exact_shapley, iis_attention, iis_shapley, sort_descending

__all__ = [
    "AssignmentSettings",
    "IisVector",
    "RoundPlan",
    "assign_labels",
    "assign_parent",
    "build_round_plan",
    "classify_pseudo_bags",
    "discard_mislabeled",
    "exact_shapley",
    "gamma_ada_schedule",
    "iis_attention",
    "iis_shapley",
    "recycle",
    "sort_descending",
    "split_interleaved",
    "verify_partition",
]
