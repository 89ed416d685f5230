# starweyl/verification/stokes.py
from typing import List

import numpy as np

from ..birkhoff import rotation_deviation, stokes_from_e, stokes_high_precision
from ..interfaces import CheckResult
from .base import BaseCheck, CaseContext


class StokesCheck(BaseCheck):
    """Stokes relations, the multiplier determinant, and agreement of the two multiplier routes."""
    name = "stokes"

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        data = stokes_from_e(ctx.sector, ctx.series, ctx.birkhoff.x_match)
        precise = stokes_high_precision(ctx.engine)
        agreement = float(np.max(np.abs(data.beta - precise.beta) / np.abs(precise.beta)))
        beta = [[[b.real, b.imag] for b in row] for row in precise.beta]
        return [
            self.result(ctx, data.rotation_rule_deviation(), 1e-6, "stokes_rotation_rule"),
            self.result(ctx, data.product_rule_deviation(), 1e-6, "stokes_product_rule"),
            self.result(ctx, data.determinant_deviation(), 1e-6, "stokes_determinant"),
            self.result(ctx, agreement, 1e-8, "stokes_agreement", beta=beta, condition=data.condition),
        ]


class RotationCheck(BaseCheck):
    """e_1(eps^s x) = e_{s+1}(x) for s = 1..n-1."""
    name = "rotation"

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        devs = [rotation_deviation(ctx.sector, ctx.cd, s) for s in range(1, ctx.case.order)]
        return [self.result(ctx, max(devs), 1e-6, per_s=devs)]
