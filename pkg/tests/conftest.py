import numpy as np
import pytest

from subsetquery import DiscreteJoint, make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def random_probs(n, k, rng):
    raw = rng.random((n, k)) + 1e-3
    return raw / raw.sum(axis=1, keepdims=True)


@pytest.fixture
def small_joint(rng):
    return DiscreteJoint.random(3, 4, rng)
