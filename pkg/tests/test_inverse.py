import numpy as np
import pytest

from conftest import make_graph, ray
from starweyl.errors import IncompleteTable, MissingWeylData
from starweyl.graph_forward import boundary_M, weyl_matrix_M
from starweyl.inverse import (
    PsiTable, audit_indices, entrywise_deviation, group_edges, run_reduction, s_independence, sigma_indices,
    transfer_indices,
)


def _M_source(g, s, cache):
    return lambda lam: boundary_M(g, s, lam, cache)[0]


class TestGroups:
    def test_single_group(self, hyperbolic3):
        gt = group_edges(hyperbolic3)
        assert gt.omegas == (2,)
        assert gt.pN == 3
        assert list(gt.admissible_s()) == [1, 2]

    def test_two_groups(self, mixed332):
        gt = group_edges(mixed332)
        assert gt.omegas == (3, 2)
        assert gt.bounds == (0, 2, 3)
        assert gt.N == 2 and gt.pN == 3
        assert gt.omega(3) == 1
        assert list(gt.admissible_s()) == [1, 2]
        assert gt.group_of(2) == 1 and gt.group_of(3) == 2

    def test_w_in_first_group(self):
        g = make_graph([3, 3, 2], [(0.1, 0.0)] * 2 + [(0,)], [1.0, 0.8, 0.7], w=2)
        gt = group_edges(g)
        assert gt.N == 1 and gt.pN == 2
        assert list(gt.admissible_s()) == [1]

    @pytest.mark.parametrize("fixture", ["hyperbolic3", "poly222", "mixed322", "mixed332"])
    def test_index_audit(self, request, fixture):
        g = request.getfixturevalue(fixture)
        gt = group_edges(g)
        for s in gt.admissible_s():
            audit = audit_indices(g, gt, s)
            assert audit.ok, audit

    def test_sigma_systems_are_square(self, mixed322):
        gt = group_edges(mixed322)
        sigmas = sigma_indices(gt, 1)
        assert [(sig.k, sig.j) for sig in sigmas] == [(1, 2)]
        assert sigmas[0].mus == (2,) and sigmas[0].nus == (0,)
        assert all(k == 1 for k, _, _ in transfer_indices(gt))


class TestPsiTable:
    def test_missing_entry(self):
        table = PsiTable(1)
        table.set((1, 1, 0), 2.0, "boundary")
        assert table[(1, 1, 0)] == 2.0
        assert table.source((1, 1, 0)) == "boundary"
        with pytest.raises(IncompleteTable):
            table[(1, 2, 0)]

    def test_entrywise_deviation(self):
        a = np.array([[1.0, 2.0], [1e-9, 1.0]])
        b = np.array([[1.0, 2.0 * (1 + 1e-7)], [0.0, 1.0]])
        assert entrywise_deviation(a, b) == pytest.approx(1e-7, rel=1e-3)

    def test_rounding_residue_counts_as_zero(self):
        b = np.array([[1.0 + 0.5j, 0.3], [2.8e-17 + 2.2e-16j, 0.7j]])
        a = b.copy()
        a[1, 0] = 0.0
        assert entrywise_deviation(a, b) < 1e-15
        a[1, 0] = 1e-3
        assert entrywise_deviation(a, b) == pytest.approx(1e-3, rel=1e-6)


class TestRoundtrip:
    @pytest.mark.parametrize("fixture", ["hyperbolic3", "poly222", "mixed322", "mixed332"])
    def test_reconstructs_internal_matrix(self, request, cache, fixture):
        g = request.getfixturevalue(fixture)
        gt = group_edges(g)
        s = gt.admissible_s()[0]
        lams = ray(20)
        report = run_reduction(g, {s: _M_source(g, s, cache)}, lams, cache, s=s)
        assert report.pass_fraction >= 0.9
        assert report.max_residual <= 1e-6

    def test_from_sampled_data(self, poly222, cache):
        lams = ray(10)
        sample = weyl_matrix_M(poly222, 1, lams, cache)
        report = run_reduction(poly222, {1: sample}, lams, cache)
        assert report.flagged_fraction == 0.0
        assert report.sample().values.shape == (10, 2, 2)
        summary = report.summary()
        assert summary["p_N"] == 3 and len(summary["per_lambda"]) == 10

    def test_flagged_points_are_skipped(self, poly222, cache):
        lams = ray(6)
        sample = weyl_matrix_M(poly222, 1, lams, cache)
        sample.flags[2] = "SingularAtLambda"
        report = run_reduction(poly222, {1: sample}, lams, cache)
        assert report.points[2].flag == "MissingWeylData"
        assert report.flagged_fraction == pytest.approx(1 / 6)

    def test_s_independence(self, poly222, cache):
        lams = ray(6)
        sources = {s: _M_source(poly222, s, cache) for s in (1, 2)}
        worst, reports = s_independence(poly222, sources, lams, cache)
        assert set(reports) == {1, 2}
        assert worst <= 1e-6

    def test_requires_chosen_M(self, poly222, cache):
        with pytest.raises(MissingWeylData):
            run_reduction(poly222, {2: _M_source(poly222, 2, cache)}, ray(2), cache, s=1)
        with pytest.raises(ValueError):
            run_reduction(poly222, {3: _M_source(poly222, 3, cache)}, ray(2), cache, s=3)
