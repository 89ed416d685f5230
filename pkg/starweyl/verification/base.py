# starweyl/verification/base.py
import cmath
import logging
from functools import cached_property
from typing import Any, Dict, Optional, Sequence

import numpy as np

from ..birkhoff import BirkhoffEngine, BirkhoffScaffold, SectorData, build_sector
from ..config import BirkhoffConfig, Tolerances, VolterraConfig
from ..interfaces import CheckResult, VerifyCase
from ..singular_ode import CharData, SeriesBasis, char_data

# deviations at or below this everywhere on a ladder are reported as exact
NOISE_FLOOR = 1e-10


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.maximum(np.asarray(ys, dtype=float), 1e-300))
    return float(np.polyfit(x, y, 1)[0])


class CaseContext:
    """Lazily built per-case objects shared by all checks of one case."""

    def __init__(self, case: VerifyCase, birkhoff: Optional[BirkhoffConfig] = None,
                 volterra: Optional[VolterraConfig] = None, tol: Optional[Tolerances] = None, seed: int = 0):
        self.case = case
        self.birkhoff = birkhoff or BirkhoffConfig()
        self.volterra = volterra or VolterraConfig()
        self.tol = tol or Tolerances()
        self.rng = np.random.default_rng(seed)
        self.constants: Dict[str, Any] = {}

    @cached_property
    def cd(self) -> CharData:
        return char_data(self.case.nu, self.case.order)

    @cached_property
    def series(self) -> SeriesBasis:
        return SeriesBasis(self.cd, self.tol.series, self.volterra.r_max)

    @cached_property
    def sector(self) -> SectorData:
        return build_sector(self.case.order, self.case.sector)

    @cached_property
    def engine(self) -> BirkhoffEngine:
        return BirkhoffEngine(self.case.nu, self.case.order, self.sector, self.birkhoff.z_max)

    @cached_property
    def scaffold(self) -> BirkhoffScaffold:
        scaffold = BirkhoffScaffold(self.engine, self.sector.mid_angle)
        M0, M1 = scaffold.calibrate(max(self.birkhoff.ladder) * self.case.length, self.birkhoff.z_step)
        self.constants.update(M0=M0, M1=M1)
        return scaffold

    def rho(self, modulus: float) -> complex:
        """rho of the given modulus on the middle ray of the case sector."""
        return modulus * cmath.exp(1j * self.sector.mid_angle)


class BaseCheck:
    """Common result helpers for the verification checks."""
    name = "base"

    def applies(self, case: VerifyCase) -> bool:
        return True

    def result(self, ctx: CaseContext, deviation: float, tolerance: float, check: Optional[str] = None,
               **details) -> CheckResult:
        deviation = float(deviation)
        passed = bool(np.isfinite(deviation) and deviation <= tolerance)
        return CheckResult(check or self.name, ctx.case.name, deviation, tolerance, passed, details=details)

    def slope_result(self, ctx: CaseContext, xs: Sequence[float], ys: Sequence[float],
                     check: Optional[str] = None) -> CheckResult:
        """Fit the decay of a deviation over a ladder against the configured target slope."""
        cfg = ctx.birkhoff
        pairs = [(x, y) for x, y in zip(xs, ys) if np.isfinite(y)]
        details = {"ladder": [float(x) for x, _ in pairs], "deviations": [float(y) for _, y in pairs]}
        name = check or self.name
        if pairs and max(y for _, y in pairs) <= NOISE_FLOOR:
            return CheckResult(name, ctx.case.name, max(y for _, y in pairs), cfg.slope_tolerance, True,
                               exact=True, details=details)
        if len(pairs) < 3:
            logging.warning(f"{name} on {ctx.case.name}: only {len(pairs)} usable ladder points.")
            return CheckResult(name, ctx.case.name, float("nan"), cfg.slope_tolerance, False, details=details)
        slope = loglog_slope(*zip(*pairs))
        miss = abs(slope - cfg.slope_target)
        return CheckResult(name, ctx.case.name, miss, cfg.slope_tolerance, miss <= cfg.slope_tolerance,
                           slope=slope, details=details)
