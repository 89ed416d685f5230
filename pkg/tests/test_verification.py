import pytest

from starweyl.errors import SeriesError
from starweyl.interfaces import VerifyCase
from starweyl.model import PotentialSpec
from starweyl.verification import (
    BaseCheck, BilinearCheck, CaseContext, DeterminantCheck, GrowthBoundCheck, OracleCheck, PerturbedCheck,
    StokesCheck, VerificationService, WronskianCheck, loglog_slope,
)

HYPERBOLIC = VerifyCase("hyperbolic", 2, (0,), samples=4)
SHIFT = VerifyCase("shift", 2, (0,), PotentialSpec.polynomial([[0.5]]), samples=4)
BESSEL = VerifyCase("bessel", 2, (-2,), samples=4)


class _Broken(BaseCheck):
    name = "broken"

    def run(self, ctx):
        raise SeriesError("no convergence")


def _by_check(results):
    return {r.check: r for r in results}


class TestSlopes:
    def test_loglog_slope(self):
        assert loglog_slope([1, 2, 4, 8], [3.0, 1.5, 0.75, 0.375]) == pytest.approx(-1.0)

    def test_noise_floor_counts_as_exact(self):
        ctx = CaseContext(HYPERBOLIC)
        res = BaseCheck().slope_result(ctx, [4, 8, 16], [1e-13, 2e-14, 0.0])
        assert res.passed and res.exact

    def test_decay_at_target_rate(self):
        ctx = CaseContext(HYPERBOLIC)
        res = BaseCheck().slope_result(ctx, [4, 8, 16, 32], [0.1, 0.05, 0.025, 0.0125])
        assert res.passed and res.slope == pytest.approx(-1.0)

    def test_too_few_points(self):
        ctx = CaseContext(HYPERBOLIC)
        res = BaseCheck().slope_result(ctx, [4, 8, 16], [0.1, float("nan"), float("nan")])
        assert not res.passed


class TestApplicability:
    def test_oracle(self):
        assert OracleCheck().applies(HYPERBOLIC)
        assert OracleCheck().applies(SHIFT)
        assert OracleCheck().applies(BESSEL)
        assert not OracleCheck().applies(VerifyCase("cubic", 3, (0.1, 0.0)))
        assert not OracleCheck().applies(VerifyCase("x", 2, (0,), PotentialSpec.polynomial([[0.0, 1.0]])))

    def test_potential_dependent_checks(self):
        assert BilinearCheck().applies(HYPERBOLIC) and not BilinearCheck().applies(SHIFT)
        assert PerturbedCheck().applies(SHIFT) and not PerturbedCheck().applies(HYPERBOLIC)


class TestService:
    @pytest.mark.parametrize("case", [HYPERBOLIC, SHIFT, BESSEL], ids=lambda c: c.name)
    def test_series_checks_pass(self, case):
        service = VerificationService(checks=[WronskianCheck(), OracleCheck()])
        results, _ = service.run_case(case)
        assert {r.check for r in results} == {"wronskian_C", "wronskian_S", "oracle"}
        assert all(r.passed for r in results), [r.to_json() for r in results]

    def test_hyperbolic_identities(self):
        service = VerificationService(checks=[StokesCheck(), DeterminantCheck(), BilinearCheck()])
        results, _ = service.run_case(HYPERBOLIC)
        by = _by_check(results)
        assert set(by) == {"stokes_rotation_rule", "stokes_product_rule", "stokes_determinant",
                           "stokes_agreement", "determinant_y", "bilinear_green"}
        assert all(r.passed for r in results), [r.to_json() for r in results]

    def test_growth_bound_records_constants(self):
        service = VerificationService(checks=[GrowthBoundCheck(ladder=(1.0, 2.0, 4.0))])
        results, constants = service.run_case(SHIFT)
        assert results[0].passed
        assert len(results[0].details["table"]) == 3
        assert {"Q", "green_bound"} <= set(constants)

    def test_failing_check_is_recorded(self):
        service = VerificationService(checks=[_Broken(), WronskianCheck()])
        results, _ = service.run_case(HYPERBOLIC)
        broken = _by_check(results)["broken"]
        assert not broken.passed
        assert broken.details["error"].startswith("SeriesError")
        assert _by_check(results)["wronskian_C"].passed

    def test_run_all_keeps_case_order(self):
        service = VerificationService(checks=[WronskianCheck()])
        out = service.run_all([SHIFT, HYPERBOLIC])
        assert [case.name for case, _, _ in out] == ["shift", "hyperbolic"]
