# starweyl/verification/asymptotics.py
import logging
import math
from typing import List

import numpy as np

from ..birkhoff import (
    connection_coefficients, connection_deviation, estimate_J, eval_y, green_bilinear, solve_e, solve_Y,
    stokes_high_precision,
)
from ..errors import ContractionFailure, RhoBelowThreshold
from ..interfaces import CheckResult, VerifyCase
from .base import BaseCheck, CaseContext


class EAsymptoticsCheck(BaseCheck):
    """Decay of z_{k nu}(x) - 1 along the recessive rays of e_k."""
    name = "asymptotics_e"

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        ladder = list(ctx.birkhoff.ladder)
        worst = np.zeros(len(ladder))
        for k in range(1, ctx.case.order + 1):
            ev = solve_e(ctx.sector, ctx.cd, k, ladder)
            worst = np.maximum(worst, np.max(np.abs(ev.z - 1), axis=0))
        return [self.slope_result(ctx, ladder, worst)]


class YAsymptoticsCheck(BaseCheck):
    """Decay of y_k^(nu) (rho R_k)^(-nu) exp(-rho R_k x) - 1 in |rho x|, with M0 measured."""
    name = "asymptotics_y"

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        ladder = list(ctx.birkhoff.ladder)
        devs = []
        for r in ladder:
            U0, _ = ctx.engine.normalized(ctx.rho(r))
            devs.append(float(np.max(np.abs(U0 - 1))))
        res = self.slope_result(ctx, ladder, devs)
        res.details["M0"] = max(d * r for d, r in zip(devs, ladder))
        return [res]


class DeterminantCheck(BaseCheck):
    """det[y_k^(nu-1)(x, rho)] = rho^(n(n-1)/2) Omega at random (x, rho)."""
    name = "determinant_y"

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        case, sd = ctx.case, ctx.sector
        n = case.order
        worst = 0.0
        for _ in range(case.samples):
            rho = ctx.rho(float(ctx.rng.uniform(0.5, 8.0)))
            x = float(ctx.rng.uniform(0.05, 1.0) * case.length)
            y = eval_y(sd, ctx.engine, x, rho).y
            target = rho ** (n * (n - 1) // 2) * sd.omega
            worst = max(worst, abs(np.linalg.det(y) / target - 1))
        return [self.result(ctx, worst, 1e-8, samples=case.samples)]


class BilinearCheck(BaseCheck):
    """g(x, t, lambda) = rho^(1-n) sum_j y_j(x, rho) y*_j(t, rho) for the equation without potential."""
    name = "bilinear_green"

    def applies(self, case: VerifyCase) -> bool:
        return case.potential.is_zero()

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        case = ctx.case
        n = case.order
        worst = 0.0
        for _ in range(case.samples):
            rho = ctx.rho(float(ctx.rng.uniform(0.5, 4.0)))
            x = float(ctx.rng.uniform(0.2, 1.0) * case.length)
            t = float(ctx.rng.uniform(0.1, 0.5) * x)
            ref = ctx.series.green_g(x, t, rho ** n)
            got = green_bilinear(ctx.sector, ctx.engine, x, t, rho)
            worst = max(worst, abs(got - ref) / max(abs(ref), 1e-300))
        return [self.result(ctx, worst, 1e-6, samples=case.samples)]


class GrowthBoundCheck(BaseCheck):
    """J(rho)|rho| <= Q on a dyadic ladder, plus the Green growth constant."""
    name = "growth_bound"

    def __init__(self, ladder=(1.0, 2.0, 4.0, 8.0, 16.0)):
        self.ladder = ladder

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        case = ctx.case
        table, failures = [], 0
        for m in self.ladder:
            est = estimate_J(case.potential, ctx.cd, ctx.rho(m), case.length)
            failures += 0 if est.bound_holds(m) else 1
            table.append({"rho": m, "J": est.J, "J_rho": est.J * m, "Q": est.Q})
        ctx.constants["Q"] = table[0]["Q"]
        samples = [(x, t) for x in (0.25, 0.5, 1.0) for t in (0.1, 0.5 * x, x)]
        ctx.constants["green_bound"] = ctx.series.green_bound_constant(1.0, samples)
        Js = [row["J"] for row in table]
        monotone = all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(Js, Js[1:]))
        return [self.result(ctx, failures, 0.0, table=table, monotone=monotone)]


class PerturbedCheck(BaseCheck):
    """Decay rates of U - U0, of the connection coefficients, and of the Y determinant."""
    name = "perturbed"

    def applies(self, case: VerifyCase) -> bool:
        return not case.potential.is_zero()

    def run(self, ctx: CaseContext) -> List[CheckResult]:
        case, sd = ctx.case, ctx.sector
        n = case.order
        ladder = [m for m in ctx.birkhoff.ladder if m * case.length <= ctx.birkhoff.z_max]
        scaffold = ctx.scaffold
        Q = estimate_J(case.potential, ctx.cd, ctx.rho(1.0), case.length).Q
        ctx.constants.update(Q=Q, rho0=2 * scaffold.M1 * Q + 1)
        stokes = stokes_high_precision(ctx.engine)
        u_dev, b_dev, d_dev = [], [], []
        for m in ladder:
            rho = ctx.rho(m)
            try:
                ysol = solve_Y(sd, scaffold, case.potential, rho, case.length, ctx.birkhoff)
            except (RhoBelowThreshold, ContractionFailure) as e:
                logging.info(f"Skipping |rho|={m:g} for {case.name}: {e}")
                u_dev.append(math.nan)
                b_dev.append(math.nan)
                d_dev.append(math.nan)
                continue
            u_dev.append(float(np.max(np.abs(ysol.U - ysol.U0))))
            b = connection_coefficients(ysol, sd, ctx.series, case.potential, ctx.volterra)
            b_dev.append(connection_deviation(b, stokes, rho))
            last = ysol.x.size - 1
            D = np.linalg.det(np.array([[sd.R[k] ** v * ysol.U[k, v, last] for v in range(n)] for k in range(n)]))
            d_dev.append(float(abs(D / sd.omega - 1)))
        return [self.slope_result(ctx, ladder, u_dev, "asymptotics_U"),
                self.slope_result(ctx, ladder, b_dev, "connection"),
                self.slope_result(ctx, ladder, d_dev, "determinant_Y")]
