"""Bag-level feature augmentation."""

from .mergeup import MergedSample, PartnerPool, merge, merge_features, pseudo_bag_features, select_partner

__all__ = ["MergedSample", "PartnerPool", "merge", "merge_features", "pseudo_bag_features", "select_partner"]
