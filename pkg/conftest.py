# conftest.py
import cmath
import math

import numpy as np
import pytest

from starweyl.caching import BasisCache
from starweyl.model import EdgeSpec, PotentialSpec, StarGraph


def make_graph(orders, nus, lengths, potentials=None, w=None) -> StarGraph:
    potentials = potentials or [PotentialSpec.zero()] * len(orders)
    edges = tuple(EdgeSpec(n, l, nu, q, index=j)
                  for j, (n, nu, l, q) in enumerate(zip(orders, nus, lengths, potentials), start=1))
    return StarGraph(edges, w if w is not None else len(orders))


def ray(count: int = 8, t_min: float = 1.0, t_max: float = 20.0, theta: float = math.pi / 2):
    """lambda points on a ray away from the real axis, where no eigenvalues sit."""
    return [complex(t * cmath.exp(1j * theta)) for t in np.linspace(t_min, t_max, count)]


@pytest.fixture
def cache():
    return BasisCache()


@pytest.fixture
def lams():
    return ray()


@pytest.fixture
def hyperbolic3():
    """Three order-2 edges of length 1, y'' = lambda y on each."""
    return make_graph([2, 2, 2], [(0,)] * 3, [1.0, 1.0, 1.0])


@pytest.fixture
def poly222():
    """Order-2 edges of unequal lengths with small polynomial potentials."""
    return make_graph(
        [2, 2, 2], [(0,), (0,), (0,)], [1.0, 0.8, 0.6],
        [PotentialSpec.polynomial([[0.3, -0.2]]), PotentialSpec.polynomial([[0.0, 0.0, 0.5]]),
         PotentialSpec.polynomial([[-0.4, 0.1]])])


@pytest.fixture
def mixed322():
    return make_graph([3, 2, 2], [(0.1, 0.0), (0,), (0,)], [1.0, 0.9, 0.7])


@pytest.fixture
def mixed332():
    return make_graph([3, 3, 2], [(0.1, 0.0), (0.1, 0.0), (0,)], [1.0, 0.8, 0.7])
