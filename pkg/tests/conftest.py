from __future__ import annotations

import numpy as np
import pytest

from semiweak_mil.data.bags import ClassPriority, Dataset
from semiweak_mil.data.synth import SynthSpec, generate
from semiweak_mil.model.abmil import MilParams, init_params


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture()
def binary_priority() -> ClassPriority:
    return ClassPriority.ascending(("normal", "tumor"))


@pytest.fixture()
def small_spec() -> SynthSpec:
    return SynthSpec(
        num_train=12,
        num_val=6,
        num_test=6,
        min_instances=6,
        max_instances=12,
        dim=4,
        positive_ratio=(0.2, 0.4),
        seed=7,
    )


@pytest.fixture()
def small_dataset(small_spec: SynthSpec) -> Dataset:
    return generate(small_spec)


@pytest.fixture()
def model() -> MilParams:
    return init_params(4, 8, 2, seed=3)

