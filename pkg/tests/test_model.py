import cmath
import math

import pytest

from conftest import make_graph
from starweyl.config import GridKind
from starweyl.errors import (
    DuplicatePoint, EmptyRange, EqualRealParts, GammaDiagonalZero, InvalidW, NonmonotoneOrders, SectorMismatch,
    WrongCoefficientCount,
)
from starweyl.model import (
    EdgeSpec, PotentialSpec, SpectralGrid, build_grid, default_sector, group_boundaries, in_sector, root_in_sector,
    validate_graph,
)


class TestEdgeSpec:
    def test_identity_forms_by_default(self):
        e = EdgeSpec(3, 1.0, (0.1, 0.0))
        assert e.gamma[0] == (1, 0, 0)
        assert e.gamma[2][2] == 1

    def test_wrong_nu_count(self):
        with pytest.raises(WrongCoefficientCount):
            EdgeSpec(3, 1.0, (0.1,))

    def test_gamma_diagonal_zero_names_the_form(self):
        with pytest.raises(GammaDiagonalZero, match=r"gamma\[0\]\[0\]"):
            EdgeSpec(2, 1.0, (0,), gamma=((0, 0), (1, 1)), index=2)

    def test_gamma_must_be_lower_triangular(self):
        with pytest.raises(Exception, match="lower-triangular"):
            EdgeSpec(2, 1.0, (0,), gamma=((1, 1), (0, 1)))


class TestStarGraph:
    def test_orders_must_not_increase(self):
        with pytest.raises(NonmonotoneOrders):
            make_graph([2, 3], [(0,), (0.1, 0)], [1, 1])

    def test_w_must_be_a_group_boundary(self):
        with pytest.raises(InvalidW):
            make_graph([3, 3, 2], [(0.1, 0)] * 2 + [(0,)], [1, 1, 1], w=1)
        g = make_graph([3, 3, 2], [(0.1, 0)] * 2 + [(0,)], [1, 1, 1], w=2)
        assert g.w == 2

    def test_group_boundaries(self):
        assert group_boundaries([3, 3, 2, 2, 2]) == [2, 5]
        assert group_boundaries([2, 2]) == [2]


class TestPotentialSpec:
    def test_polynomial_values_and_derivative(self):
        q = PotentialSpec.polynomial([[1.0, 2.0, 3.0]])
        assert complex(q.evaluate(0, 2.0)) == pytest.approx(17.0)
        assert complex(q.evaluate(0, 2.0, deriv=1)) == pytest.approx(14.0)
        assert complex(q.evaluate(1, 2.0)) == 0

    def test_zero_detection(self):
        assert PotentialSpec.zero().is_zero()
        assert PotentialSpec.polynomial([[0.0, 0.0]]).is_zero()
        assert not PotentialSpec.polynomial([[0.0, 1.0]]).is_zero()

    def test_weighted_integrability(self):
        q = PotentialSpec.polynomial([[0.0, 1.0]])
        assert q.integrable_with_weight(0, -1.5, 1.0)
        assert not q.integrable_with_weight(0, -2.5, 1.0)

    def test_table_needs_four_samples(self):
        with pytest.raises(Exception):
            PotentialSpec.table([([0.0, 0.5, 1.0], [1.0, 1.0, 1.0])])


class TestSectors:
    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_root_lands_in_sector(self, n):
        lam = 5.0 * cmath.exp(0.7j)
        for k0 in range(2 * n):
            try:
                rho = root_in_sector(lam, n, k0)
            except SectorMismatch:
                continue
            assert abs(rho ** n - lam) <= 1e-12 * abs(lam)
            assert in_sector(rho, k0, n)

    def test_default_sector_holds_principal_root(self):
        lam = 1j * 4.0
        k0 = default_sector(lam, 2)
        rho = root_in_sector(lam, 2, k0)
        assert rho == pytest.approx(cmath.sqrt(lam))

    def test_no_root_in_sector(self):
        # the square roots of 4i have arguments pi/4 and 5pi/4
        with pytest.raises(SectorMismatch):
            root_in_sector(4j, 2, 1)


class TestGrid:
    def test_ray_grid_sorted_and_consistent(self):
        pts = build_grid(SpectralGrid(theta=math.pi / 2, t_min=1, t_max=9, count=5), 2)
        assert [abs(p.lam) for p in pts] == pytest.approx([1, 3, 5, 7, 9])
        for p in pts:
            assert abs(p.rho ** 2 - p.lam) <= 1e-12 * abs(p.lam)

    def test_empty_grid(self):
        with pytest.raises(EmptyRange):
            build_grid(SpectralGrid(count=0), 2)
        with pytest.raises(EmptyRange):
            build_grid(SpectralGrid(kind=GridKind.LIST), 2)

    def test_duplicate_points(self):
        with pytest.raises(DuplicatePoint):
            build_grid(SpectralGrid(kind=GridKind.LIST, points=(1j, 2j, 1j)), 2)


class TestValidation:
    def test_admissible_graph(self, hyperbolic3):
        report = validate_graph(hyperbolic3)
        assert report.passes
        assert report.edges[0].roots == pytest.approx((0, 1))

    def test_rejected_edge_is_named(self):
        # nu0 = 0.25 gives the double root 1/2
        g = make_graph([2, 2], [(0,), (0.25,)], [1, 1])
        report = validate_graph(g)
        assert not report.passes
        assert report.failures()[0].startswith("edge 2")
        assert EqualRealParts.__name__ in report.failures()[0]
