import cmath
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from starweyl.birkhoff import (
    BirkhoffEngine, BirkhoffScaffold, build_sector, estimate_J, eval_y, green_bilinear, rotation_deviation,
    solve_Y, stokes_from_e, stokes_high_precision,
)
from starweyl.errors import RayOutsideSector, RhoBelowThreshold
from starweyl.model import PotentialSpec
from starweyl.singular_ode import SeriesBasis, char_data, green_g

ORDER3 = (0.1, 0.0)


@pytest.fixture(scope="module")
def engine2():
    return BirkhoffEngine((0,), 2, build_sector(2, 0))


@pytest.fixture(scope="module")
def engine3():
    return BirkhoffEngine(ORDER3, 3, build_sector(3, 0))


class TestSectors:
    def test_order_two_sector_zero(self):
        sd = build_sector(2, 0)
        assert_allclose(sd.R, (-1, 1), atol=1e-15)
        assert sd.perm == (2, 1)
        assert sd.omega == pytest.approx(2)
        assert sd.asymptotics_valid

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_ordering_holds_inside_every_sector(self, n):
        for k0 in range(2 * n):
            sd = build_sector(n, k0)
            rho = cmath.exp(1j * sd.mid_angle)
            re = [(rho * r).real for r in sd.R]
            assert re == sorted(re)

    def test_sector_index_range(self):
        with pytest.raises(ValueError):
            build_sector(2, 4)


class TestStokes:
    def test_hyperbolic_multipliers(self, engine2):
        sd = build_sector(2, 0)
        expected = np.array([[1, 1], [1, -1]])
        assert_allclose(engine2.beta_matrix(), expected, atol=1e-10)
        data = stokes_from_e(sd, SeriesBasis(char_data((0,), 2)))
        assert_allclose(data.beta, expected, atol=1e-8)

    def test_order_three_relations(self, engine3):
        sd = build_sector(3, 0)
        data = stokes_from_e(sd, SeriesBasis(char_data(ORDER3, 3)))
        assert data.rotation_rule_deviation() <= 1e-6
        assert data.product_rule_deviation() <= 1e-6
        assert data.determinant_deviation() <= 1e-6
        precise = stokes_high_precision(engine3)
        assert np.max(np.abs(data.beta - precise.beta) / np.abs(precise.beta)) <= 1e-8
        assert precise.rotation_rule_deviation() <= 1e-10

    @pytest.mark.parametrize("nu,n", [((0,), 2), ((-2,), 2), (ORDER3, 3)])
    def test_rotation(self, nu, n):
        sd = build_sector(n, 0)
        cd = char_data(nu, n)
        for s in range(1, n):
            assert rotation_deviation(sd, cd, s) <= 1e-6


class TestBirkhoffSolutions:
    def test_hyperbolic_solutions(self, engine2):
        sd = build_sector(2, 0)
        rho = 3.0 * cmath.exp(1j * math.pi / 4)
        x = 0.5
        y = eval_y(sd, engine2, x, rho).y
        for k in range(2):
            e = cmath.exp(rho * sd.R[k] * x)
            assert_allclose(y[k], [e, rho * sd.R[k] * e], rtol=1e-10)

    def test_determinant(self, engine3):
        sd = build_sector(3, 0)
        rho = 5.0 * cmath.exp(1j * sd.mid_angle)
        y = eval_y(sd, engine3, 0.8, rho).y
        assert abs(np.linalg.det(y) / (rho ** 3 * sd.omega) - 1) <= 1e-8

    def test_bilinear_green_function(self, engine2):
        sd = build_sector(2, 0)
        rho = 2.0 * cmath.exp(1j * sd.mid_angle)
        series = SeriesBasis(char_data((0,), 2))
        g = green_bilinear(sd, engine2, 0.9, 0.4, rho)
        assert g == pytest.approx(green_g(series, 0.9, 0.4, rho ** 2), rel=1e-10)

    def test_rho_outside_sector(self, engine2):
        with pytest.raises(RayOutsideSector):
            eval_y(build_sector(2, 0), engine2, 0.5, -1.0 + 0.1j)


class TestContractionConstants:
    def test_zero_potential(self):
        est = estimate_J(PotentialSpec.zero(), char_data((0,), 2), 4.0j, 1.0)
        assert est.J == 0 and est.Q == 0

    def test_bound_on_dyadic_ladder(self):
        q = PotentialSpec.polynomial([[0.5, 0.2]])
        cd = char_data((0,), 2)
        for a in (1, 2, 4, 8, 16):
            est = estimate_J(q, cd, a * cmath.exp(0.3j), 1.0)
            assert est.bound_holds(a)
        assert est.Q == pytest.approx(0.6)

    def test_threshold(self, engine2):
        scaffold = BirkhoffScaffold(engine2, build_sector(2, 0).mid_angle)
        q = PotentialSpec.polynomial([[5.0]])
        with pytest.raises(RhoBelowThreshold):
            solve_Y(build_sector(2, 0), scaffold, q, 2.0 * cmath.exp(1j * math.pi / 4), 1.0)

    @pytest.mark.slow
    def test_picard_solution(self, engine2):
        sd = build_sector(2, 0)
        scaffold = BirkhoffScaffold(engine2, sd.mid_angle)
        rho = 16.0 * cmath.exp(1j * sd.mid_angle)
        sol = solve_Y(sd, scaffold, PotentialSpec.polynomial([[0.5]]), rho, 1.0)
        assert sol.contraction < 1
        assert sol.residual <= 1e-10
        assert np.max(np.abs(sol.U[:, :, -1] - 1)) <= 0.5
