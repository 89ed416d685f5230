# starweyl/verification/series.py
import cmath
import math
from typing import List

import numpy as np

from ..config import PotentialKind
from ..interfaces import CheckResult, VerifyCase
from ..singular_ode import solve_volterra
from .base import BaseCheck, CaseContext


class WronskianCheck(BaseCheck):
    """det[C_j^(nu-1)] = 1 and det[S_j^(nu-1)] = 1 at random (x, lambda) with |lambda| <= 10."""
    name = "wronskian"

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        case = ctx.case
        x_lo = min(0.1, 0.5 * case.length)
        x_hi = min(2.0, case.length)
        dev_c, dev_s = 0.0, 0.0
        for _ in range(case.samples):
            lam = ctx.rng.uniform(0.0, 10.0) * cmath.exp(1j * ctx.rng.uniform(-math.pi, math.pi))
            x = float(ctx.rng.uniform(x_lo, x_hi))
            dev_c = max(dev_c, abs(ctx.series.wronskian(x, lam) - 1))
            basis = solve_volterra(ctx.series, case.potential, lam, case.length, ctx.volterra, ctx.tol)
            dev_s = max(dev_s, abs(basis.wronskian(x) - 1))
        return [self.result(ctx, dev_c, 1e-8, "wronskian_C", samples=case.samples),
                self.result(ctx, dev_s, 1e-6, "wronskian_S", samples=case.samples)]


def _constant_potential(case: VerifyCase):
    """Value c of a constant q_0 (None if the potential is not constant)."""
    q = case.potential
    if q.is_zero():
        return 0j
    if q.kind is not PotentialKind.POLYNOMIAL or len(q.coeffs) != 1:
        return None
    head, *rest = q.coeffs[0]
    return head if all(c == 0 for c in rest) else None


def closed_form_basis(nu0: complex, c: complex, lam: complex, x: float) -> np.ndarray:
    """S_j^(nu)(x, lambda) as [nu, j] for y'' + (nu0/x^2 + c) y = lambda y with nu0 in {0, -2}."""
    k = cmath.sqrt(lam - c)
    if nu0 == 0:
        if k == 0:
            return np.array([[1.0, x], [0.0, 1.0]], dtype=complex)
        ch, sh = cmath.cosh(k * x), cmath.sinh(k * x)
        return np.array([[ch, sh / k], [k * sh, ch]])
    z = k * x
    ch, sh = cmath.cosh(z), cmath.sinh(z)
    c1 = ch / x - k * sh
    d1 = k * sh / x - ch / x ** 2 - k * k * ch
    c2 = (ch - sh / z) / k ** 2
    d2 = (sh - ch / z + sh / z ** 2) / k
    return np.array([[c1, c2], [d1, d2]])


class OracleCheck(BaseCheck):
    """S-basis against the hyperbolic, Bessel-type and constant-shift closed forms."""
    name = "oracle"

    def applies(self, case: VerifyCase) -> bool:
        if case.order != 2:
            return False
        c = _constant_potential(case)
        return c is not None and (case.nu[0] == 0 or (case.nu[0] == -2 and c == 0))

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        case = ctx.case
        c = _constant_potential(case)
        worst = 0.0
        for _ in range(case.samples):
            lam = ctx.rng.uniform(1.0, 10.0) * cmath.exp(1j * ctx.rng.uniform(-math.pi, math.pi))
            x = float(ctx.rng.uniform(0.2, 1.0) * case.length)
            basis = solve_volterra(ctx.series, case.potential, lam, case.length, ctx.volterra, ctx.tol)
            ref = closed_form_basis(case.nu[0], c, lam, x)
            worst = max(worst, float(np.max(np.abs(basis.evaluate(x) - ref)) / np.max(np.abs(ref))))
        tol = 1e-10 if (case.nu[0] == 0 and c == 0) else 1e-8
        return [self.result(ctx, worst, tol, samples=case.samples)]


class EntiretyCheck(BaseCheck):
    """Mean of S_j(l, lambda) over a lambda-circle equals the value at its center."""
    name = "entirety"

    def __init__(self, center: complex = 2.0, radius: float = 1.0, count: int = 16):
        self.center = complex(center)
        self.radius = radius
        self.count = count

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        case = ctx.case

        def end(lam):
            return solve_volterra(ctx.series, case.potential, lam, case.length, ctx.volterra, ctx.tol).endpoint()

        t = 2 * np.pi * np.arange(self.count) / self.count
        mean = np.mean([end(self.center + self.radius * cmath.exp(1j * a)) for a in t], axis=0)
        ref = end(self.center)
        dev = float(np.max(np.abs(mean - ref)) / np.max(np.abs(ref)))
        return [self.result(ctx, dev, 1e-6, center=[self.center.real, self.center.imag], radius=self.radius)]
