# starweyl/verification/__init__.py
import logging
from typing import Dict, List, Optional, Sequence, Tuple

from ..config import BirkhoffConfig, Tolerances, VolterraConfig
from ..errors import StarWeylError
from ..interfaces import Check, CheckResult, VerifyCase
from .asymptotics import (
    BilinearCheck, DeterminantCheck, EAsymptoticsCheck, GrowthBoundCheck, PerturbedCheck, YAsymptoticsCheck,
)
from .base import NOISE_FLOOR, BaseCheck, CaseContext, loglog_slope
from .series import EntiretyCheck, OracleCheck, WronskianCheck, closed_form_basis
from .stokes import RotationCheck, StokesCheck


class VerificationService:
    """
    Runs every registered identity check on a set of equations and collects
    the results.
    """
    def __init__(self, birkhoff: Optional[BirkhoffConfig] = None, volterra: Optional[VolterraConfig] = None,
                 tol: Optional[Tolerances] = None, seed: int = 0, checks: Optional[Sequence[Check]] = None):
        self.birkhoff = birkhoff or BirkhoffConfig()
        self.volterra = volterra or VolterraConfig()
        self.tol = tol or Tolerances()
        self.seed = seed
        # Report order follows this list.
        self._checks: List[Check] = list(checks) if checks is not None else [
            WronskianCheck(),
            OracleCheck(),
            EntiretyCheck(),
            StokesCheck(),
            RotationCheck(),
            EAsymptoticsCheck(),
            YAsymptoticsCheck(),
            DeterminantCheck(),
            BilinearCheck(),
            GrowthBoundCheck(),
            PerturbedCheck(),
        ]

    def run_case(self, case: VerifyCase) -> Tuple[List[CheckResult], Dict[str, float]]:
        ctx = CaseContext(case, self.birkhoff, self.volterra, self.tol, self.seed)
        results: List[CheckResult] = []
        logging.info(f"Verifying {case.name} (order {case.order}) with {len(self._checks)} checks...")
        for check in self._checks:
            if not check.applies(case):
                continue
            try:
                results.extend(check.run(ctx))
            except StarWeylError as e:
                # one failing family must not hide the others
                logging.error(f"Error running {check.__class__.__name__} on {case.name}: {e}")
                results.append(CheckResult(check.name, case.name, float("nan"), 0.0, False,
                                           details={"error": f"{e.__class__.__name__}: {e}"}))
        for r in results:
            if not r.passed:
                logging.warning(f"❌ {r.check} on {case.name}: deviation {r.deviation:.3g} > {r.tolerance:g}")
        return results, dict(sorted(ctx.constants.items()))

    def run_all(self, cases: Sequence[VerifyCase]) -> List[Tuple[VerifyCase, List[CheckResult], Dict[str, float]]]:
        return [(case, *self.run_case(case)) for case in cases]
