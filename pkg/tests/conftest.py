import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from treecascade import tree
from treecascade import weights as wp

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def theta4():
    return tree.uniform_flow(4)


@pytest.fixture
def theta8():
    return tree.uniform_flow(8)


@pytest.fixture
def gauss():
    return wp.gaussian_spec()


@pytest.fixture
def cpoisson():
    return wp.compound_poisson_spec()


@pytest.fixture
def random_flow():
    def make(depth, seed=0, positive=True):
        g = np.random.default_rng(seed)
        leaves = g.gamma(2.0, 1.0, size=1 << depth)
        if positive:
            leaves += 1e-6
        leaves /= leaves.sum()
        return tree.flow_from_leaves(leaves)

    return make
