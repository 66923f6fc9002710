"""Instance importance scores (IIS) and their descending order.

Two estimators are available: the model's attention weights, and a
Monte-Carlo Shapley value of each instance for the probability of the bag's
own class. The Shapley game's empty coalition is a bag holding only the zero
vector, since the model needs at least one instance.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Final

import numpy as np

from semiweak_mil.data.bags import Bag
from semiweak_mil.errors import ContractError, DomainError
from semiweak_mil.model.abmil import MilParams, forward, instance_scores
from semiweak_mil.runtime import map_ordered
from semiweak_mil.tensor import ops

EXACT_LIMIT: Final[int] = 8
_CHUNK: Final[int] = 256


@dataclass(frozen=True, eq=False)
class IisVector:
    parent_id: str
    scores: np.ndarray
    order: np.ndarray


def sort_descending(scores: np.ndarray) -> np.ndarray:
    """Stable descending argsort; ties keep ascending instance index."""

    values = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DomainError("IIS scores must be finite.")
    return np.argsort(-values, kind="stable")


def iis_attention(model: MilParams, bag: Bag) -> IisVector:
    scores = forward(model, bag.rows(range(bag.num_instances))).attention
    return IisVector(parent_id=bag.id, scores=scores, order=sort_descending(scores))


def _baseline_value(model: MilParams, target: int) -> float:
    return float(forward(model, np.zeros((1, model.dim))).probs[target])


def _prefix_values(model: MilParams, features: np.ndarray, target: int, perms: np.ndarray) -> np.ndarray:
    """Target-class probability after each prefix of each permutation (``S x N``).

    Attention pooling is a ratio of running sums, so every prefix of a
    permutation is evaluated with two cumulative sums instead of N forwards.
    """

    logits = instance_scores(model, features)
    weights = np.exp(logits - np.max(logits))[perms]
    numerators = np.cumsum(weights[..., None] * features[perms], axis=1)
    embeddings = numerators / np.cumsum(weights, axis=1)[..., None]
    class_logits = embeddings @ model.w_cls.T + model.b_cls[0]
    shifted = class_logits - np.max(class_logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps[..., target] / np.sum(exps, axis=-1)


def _chunk_contributions(
    model: MilParams,
    features: np.ndarray,
    target: int,
    baseline: float,
    count: int,
    seed_seq: np.random.SeedSequence,
) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    n = features.shape[0]
    perms = rng.permuted(np.tile(np.arange(n), (count, 1)), axis=1)
    values = _prefix_values(model, features, target, perms)
    previous = np.concatenate([np.full((count, 1), baseline), values[:, :-1]], axis=1)
    contributions = np.zeros((count, n))
    np.put_along_axis(contributions, perms, values - previous, axis=1)
    return contributions.sum(axis=0)


def iis_shapley(
    model: MilParams,
    bag: Bag,
    samples: int,
    seed: int,
    *,
    target: int | None = None,
    workers: int = 1,
) -> IisVector:
    """Monte-Carlo Shapley estimate from ``samples`` random permutations.

    Permutations are drawn in fixed-size chunks with spawned seeds and reduced
    in chunk order, so the estimate depends only on ``seed`` and ``samples``.
    """

    if samples < 1:
        raise DomainError("Shapley sampling needs at least one permutation.", details=f"samples={samples}")
    features = bag.rows(range(bag.num_instances))
    target = bag.label if target is None else target
    baseline = _baseline_value(model, target)
    sizes = [min(_CHUNK, samples - start) for start in range(0, samples, _CHUNK)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    partials = map_ordered(
        lambda job: _chunk_contributions(model, features, target, baseline, job[0], job[1]),
        list(zip(sizes, seeds)),
        max_workers=workers,
    )
    total = np.zeros(bag.num_instances)
    for part in partials:
        total = total + part
    scores = total / samples
    return IisVector(parent_id=bag.id, scores=scores, order=sort_descending(scores))


def exact_shapley(model: MilParams, bag: Bag, *, target: int | None = None) -> np.ndarray:
    """Exact Shapley values by subset enumeration (small bags only)."""

    n = bag.num_instances
    if n > EXACT_LIMIT:
        raise ContractError("Exact Shapley is limited to small bags.", details=f"N={n} > {EXACT_LIMIT}")
    features = bag.rows(range(n))
    target = bag.label if target is None else target
    values: dict[int, float] = {0: _baseline_value(model, target)}
    for mask in range(1, 1 << n):
        members = [j for j in range(n) if mask >> j & 1]
        values[mask] = float(forward(model, features[members]).probs[target])

    factorial = [math.factorial(k) for k in range(n + 1)]
    scores = np.zeros(n)
    for j in range(n):
        bit = 1 << j
        for mask in range(1 << n):
            if mask & bit:
                continue
            size = bin(mask).count("1")
            weight = factorial[size] * factorial[n - size - 1] / factorial[n]
            scores[j] += weight * (values[mask | bit] - values[mask])
    return scores


def exact_shapley_by_permutations(model: MilParams, bag: Bag, *, target: int | None = None) -> np.ndarray:
    """Average marginal contribution over every permutation; mirrors the sampled estimator."""

    n = bag.num_instances
    if n > EXACT_LIMIT:
        raise ContractError("Exact Shapley is limited to small bags.", details=f"N={n} > {EXACT_LIMIT}")
    features = bag.rows(range(n))
    target = bag.label if target is None else target
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
    baseline = _baseline_value(model, target)
    values = _prefix_values(model, features, target, perms)
    previous = np.concatenate([np.full((len(perms), 1), baseline), values[:, :-1]], axis=1)
    contributions = np.zeros((len(perms), n))
    np.put_along_axis(contributions, perms, values - previous, axis=1)
    return ops.ensure_finite(contributions.mean(axis=0), "shapley")


__all__ = [
    "EXACT_LIMIT",
    "IisVector",
    "exact_shapley",
    "exact_shapley_by_permutations",
    "iis_attention",
    "iis_shapley",
    "sort_descending",
]
