import dataclasses

import numpy as np
import pytest

from conftest import make_graph, ray
from starweyl.errors import ModelError, NonConvergence
from starweyl.graph_forward import weyl_matrix_M, weyl_matrix_m
from starweyl.model import PotentialSpec
from starweyl.recovery import PotentialFamily, fit_parameters, recover_edge_potential


def _with_potential(g, j, q):
    edges = list(g.edges)
    edges[j - 1] = dataclasses.replace(g.edge(j), potential=q)
    return dataclasses.replace(g, edges=tuple(edges))


def _monotone(trace):
    return all(b <= a for a, b in zip(trace, trace[1:]))


class TestPotentialFamily:
    def test_potential_from_parameters(self):
        fam = PotentialFamily(1, ((0, 0), (0, 2)), ((-1, 1), (-1, 1)))
        q = fam.potential([0.5, -0.25])
        assert complex(q.evaluate(0, 2.0)) == pytest.approx(0.5 - 1.0)
        assert fam.center() == pytest.approx([0, 0])

    def test_limits(self):
        with pytest.raises(ModelError):
            PotentialFamily(1, tuple((0, p) for p in range(6)), ((-1, 1),) * 6)
        with pytest.raises(ModelError):
            PotentialFamily(1, ((0, 0),), ((1, -1),))

    def test_admissibility_on_bessel_edge(self):
        g = make_graph([2, 2], [(0,), (-2,)], [1.0, 1.0])
        with pytest.raises(ModelError):
            PotentialFamily(2, ((0, 0),), ((-1, 1),)).check_admissible(g)
        PotentialFamily(2, ((0, 2),), ((-1, 1),)).check_admissible(g)


class TestFitParameters:
    def test_interior_minimum(self):
        fam = PotentialFamily(1, ((0, 0), (0, 1)), ((-1, 1), (-1, 1)))
        result = fit_parameters(lambda p: np.array([p[0] - 0.3, 10 * (p[1] - p[0] ** 2)]), [-0.5, 0.5], fam)
        assert result.params == pytest.approx([0.3, 0.09], abs=1e-8)
        assert result.converged
        assert _monotone(result.trace)
        assert result.trace[-1] == pytest.approx(2 * result.residual ** 2, abs=1e-20)

    def test_minimum_on_the_box_edge(self):
        fam = PotentialFamily(1, ((0, 0),), ((-1, 1),))
        result = fit_parameters(lambda p: np.array([p[0] - 2.0]), [0.0], fam)
        assert result.params == pytest.approx([1.0], abs=1e-4)
        assert result.residual == pytest.approx(1.0, abs=1e-4)
        assert _monotone(result.trace)


@pytest.mark.slow
class TestRecovery:
    def test_internal_data_order_two(self, poly222, cache):
        fam = PotentialFamily(3, ((0, 0), (0, 1)), ((-1, 1), (-1, 1)))
        truth = _with_potential(poly222, 3, fam.potential([0.4, -0.3]))
        target = weyl_matrix_m(truth, 3, ray(8), cache)
        result = recover_edge_potential(poly222, fam, target, cache, start=[0.0, 0.0], restarts=1)
        assert np.max(np.abs(result.params - [0.4, -0.3])) <= 1e-4
        assert _monotone(result.trace)
        assert not result.ambiguous

    def test_boundary_data(self, poly222, cache):
        fam = PotentialFamily(2, ((0, 0),), ((-1, 1),))
        truth = _with_potential(poly222, 2, fam.potential([0.6]))
        target = weyl_matrix_M(truth, 1, ray(8), cache)
        result = recover_edge_potential(poly222, fam, target, cache, start=[0.1], restarts=1)
        assert abs(result.params[0] - 0.6) <= 1e-4
        assert _monotone(result.trace)

    def test_bessel_edge(self, cache):
        g = make_graph([2, 2], [(0,), (-2,)], [1.0, 1.0])
        fam = PotentialFamily(2, ((0, 2),), ((-2, 2),))
        truth = _with_potential(g, 2, fam.potential([0.8]))
        target = weyl_matrix_m(truth, 2, ray(8), cache)
        result = recover_edge_potential(g, fam, target, cache, start=[0.0], restarts=1)
        assert abs(result.params[0] - 0.8) <= 1e-3

    def test_family_that_cannot_fit(self, poly222, cache):
        truth = _with_potential(poly222, 3, PotentialSpec.polynomial([[0.0, 0.0, 0.0, 3.0]]))
        target = weyl_matrix_m(truth, 3, ray(6), cache)
        fam = PotentialFamily(3, ((0, 0),), ((-0.1, 0.1),))
        with pytest.raises(NonConvergence):
            recover_edge_potential(poly222, fam, target, cache, restarts=0)
