import os
import sys

import numpy as np
import pytest

# Add src to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(project_root, "src"))

from core.models import CostFunction, EdgeSet, Instance, MarketParams, linear_instance  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def monopoly():
    """1 firm c=0 on one market alpha=2, beta=1."""
    return linear_instance([0.0], [(2.0, 1.0)])


@pytest.fixture
def duopoly_03():
    """Two firms with costs (0, 0.3) on one market alpha=1, beta=1."""
    return linear_instance([0.0, 0.3], [(1.0, 1.0)])


def random_linear_instance(rng, n_max=6, m_max=4, complete=True, below_alpha=True):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    alphas = rng.uniform(0.5, 3.0, size=m)
    betas = rng.uniform(0.2, 2.0, size=m)
    upper = alphas.min() if below_alpha else alphas.max() * 1.2
    costs = rng.uniform(0.0, upper, size=n)
    if complete:
        edges = None
    else:
        grid = rng.random((n, m)) < 0.6
        edges = EdgeSet.from_array(grid)
    return linear_instance(costs, list(zip(alphas, betas)), edges=edges)


def random_quadratic_instance(rng, n_max=4, m_max=3):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    firms = tuple(
        CostFunction.quadratic(float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.05, 1.0))) for _ in range(n)
    )
    markets = tuple(
        MarketParams(alpha=float(rng.uniform(0.5, 3.0)), beta=float(rng.uniform(0.2, 2.0))) for _ in range(m)
    )
    return Instance(firms=firms, markets=markets, edges=EdgeSet.complete(n, m))


@pytest.fixture
def make_linear(rng):
    def factory(**kwargs):
        return random_linear_instance(rng, **kwargs)
    return factory


@pytest.fixture
def make_quadratic(rng):
    def factory(**kwargs):
        return random_quadratic_instance(rng, **kwargs)
    return factory
