"""Bags, datasets, the feature store and the synthetic generator."""

from .bags import SPLITS, Bag, ClassPriority, Dataset, PseudoBag, Status, max_priority_label
from .splits import cross_validation_splits
from .store import load_feature_store, save_feature_store
from .synth import SynthSpec, default_benchmark, default_benchmark_3class, generate

__all__ = [
    "SPLITS",
    "Bag",
    "ClassPriority",
    "Dataset",
    "PseudoBag",
    "Status",
    "SynthSpec",
    "cross_validation_splits",
    "default_benchmark",
    "default_benchmark_3class",
    "generate",
    "load_feature_store",
    "max_priority_label",
    "save_feature_store",
]
