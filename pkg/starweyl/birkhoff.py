# starweyl/birkhoff.py
"""
Sector-wise large-|rho| machinery.

Two independent routes lead to the Stokes multipliers beta0_kj of
e_k(x) = sum_j beta0_kj C_j(x):

* double precision: e_k is integrated backward along a recessive ray of S*_k
  from a far point seeded by its formal asymptotic series, then matched
  against the Frobenius basis at |x| = x_match (solve_e, stokes_from_e);
* high precision (BirkhoffEngine): the optimally truncated formal series is
  matched against the Frobenius series at a far point in mpmath, which keeps
  recessive solutions y_k usable up to |rho x| = z_max.

The engine feeds the normalized quantities U0, U0* of the integral system
for the perturbed solutions Y_k, solved here by Nystrom discretization and
Picard iteration.
"""
import cmath
import logging
import math
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from mpmath import mp
from scipy import integrate

from .config import BirkhoffConfig, VolterraConfig
from .errors import (
    ContractionFailure, GapRegion, IllConditionedBasis, InvariantViolation, PicardDivergence,
    RayOutsideSector, RhoBelowThreshold,
)
from .model import PotentialSpec, in_sector
from .singular_ode import CharData, SeriesBasis, char_data, solve_volterra

# mpmath precision is a process-wide setting
_MP_LOCK = threading.RLock()
ANGLE_SLACK = 1e-9
# exponent used for kernel entries outside their branch; exp() underflows to 0
_MASKED = -1.0e4


def _wrap(angle: float) -> float:
    """Angle mapped into (-pi, pi]."""
    a = math.remainder(angle, 2 * math.pi)
    return math.pi if a == -math.pi else a


@dataclass(frozen=True)
class SectorData:
    """Roots of unity, sector bookkeeping and the ordering R_k for sector k0."""
    n: int
    k0: int
    eps: Tuple[complex, ...]
    perm: Tuple[int, ...]
    R: Tuple[complex, ...]
    omega: complex
    asymptotics_valid: bool

    @property
    def mid_angle(self) -> float:
        return _wrap((self.k0 + 0.5) * math.pi / self.n)

    def log_R(self, k: int) -> complex:
        """log R_k with the unreduced angle 2 pi (sigma(k)-1)/n."""
        return 2j * math.pi * (self.perm[k - 1] - 1) / self.n

    def eps_power(self, k: int, mu: complex) -> complex:
        """eps_k^mu = exp(2 pi i (k-1) mu / n)."""
        return cmath.exp(2j * math.pi * (k - 1) * mu / self.n)

    def s_star(self, k: int) -> Tuple[float, float]:
        """Argument interval of S*_k."""
        n = self.n
        if k == 1:
            return (n - 1) * math.pi / n, math.pi
        return (n - 2 * k + 1) * math.pi / n, (n - 2 * k + 3) * math.pi / n

    def q_sector(self, k: int) -> Tuple[float, float]:
        """Argument interval of Q_k, where the asymptotics of e_k hold."""
        n = self.n
        return max(-math.pi, (2 - 2 * k) * math.pi / n), min(math.pi, (2 * n - 2 * k + 2) * math.pi / n)

    def recessive_angle(self, k: int) -> float:
        lo, hi = self.s_star(k)
        return 0.5 * (lo + hi)


def _sector_edges(n: int, k0: int) -> Tuple[float, float]:
    lo = k0 * math.pi / n
    if lo >= math.pi - ANGLE_SLACK:
        lo -= 2 * math.pi
    return lo, lo + math.pi / n


def build_sector(n: int, k0: int) -> SectorData:
    """Order the n-th roots of unity so that Re(rho R_1) < ... < Re(rho R_n) inside sector k0."""
    if not 0 <= k0 < 2 * n:
        raise ValueError(f"sector index must lie in 0..{2 * n - 1}, got {k0}.")
    eps = tuple(cmath.exp(2j * math.pi * k / n) for k in range(n))
    lo, hi = _sector_edges(n, k0)
    mid = cmath.exp(1j * 0.5 * (lo + hi))
    order = sorted(range(n), key=lambda i: (mid * eps[i]).real)
    width = hi - lo
    for ang in (lo + 0.1 * width, 0.5 * (lo + hi), hi - 0.1 * width):
        re = [(cmath.exp(1j * ang) * eps[i]).real for i in order]
        if any(b <= a for a, b in zip(re, re[1:])):
            raise InvariantViolation(f"R_k ordering fails at arg rho = {ang:.6f} in sector {k0}.")
    R = tuple(eps[i] for i in order)
    perm = tuple(i + 1 for i in order)
    omega = complex(np.linalg.det(np.array([[r ** v for v in range(n)] for r in R])))
    sd = SectorData(n, k0, eps, perm, R, omega, True)
    valid = all(sd.q_sector(perm[k])[0] - ANGLE_SLACK <= lo and hi <= sd.q_sector(perm[k])[1] + ANGLE_SLACK
                for k in range(n))
    if not valid:
        logging.warning(f"Sector {k0} (n={n}) leaves some Q_k; Birkhoff solutions are not available there.")
    return SectorData(n, k0, eps, perm, R, omega, valid)


# --- high precision equation data -------------------------------------------------

class _MpEquation:
    """Series and formal-series coefficients of the equation without potential, in mpmath.

    Every method must run inside the precision context of its owner.
    """

    def __init__(self, nu: Sequence[complex], n: int, mu_guess: Sequence[complex]):
        self.n = n
        self.nu = [mp.mpc(v) for v in nu] + [mp.mpc(0), mp.mpc(1)]
        self.mu = [mp.findroot(self.delta, mp.mpc(m)) for m in mu_guess]
        self.eps = [mp.exp(mp.mpc(0, 2) * mp.pi * k / n) for k in range(n)]
        vander = mp.mpf(1)
        for i in range(n):
            for j in range(i + 1, n):
                vander *= self.mu[j] - self.mu[i]
        self._c = [[mp.mpc(1)] for _ in range(n)]
        self._c[-1][0] = 1 / vander
        self._a: Dict[int, List] = {}

    def delta(self, z):
        return mp.fsum(self.nu[j] * mp.ff(z, j) for j in range(self.n + 1))

    def c(self, j: int, k: int):
        """c_jk, 0-based j."""
        lst = self._c[j]
        while len(lst) <= k:
            s = len(lst)
            lst.append(lst[-1] / self.delta(self.mu[j] + s * self.n))
        return lst[k]

    def a(self, k: int, s_max: int) -> List:
        """Formal series coefficients a_0..a_{s_max} of e_k (0-based k), e_k = exp(eps x) sum a_s x^(-s)."""
        n, eps = self.n, self.eps[k]
        lst = self._a.setdefault(k, [mp.mpc(1)])
        while len(lst) <= s_max:
            S = len(lst)
            rhs = mp.mpc(0)
            for i in range(2, n + 1):
                s = S + 1 - i
                if s >= 0:
                    rhs += math.comb(n, i) * eps ** (n - i) * (-1) ** i * mp.rf(s, i) * lst[s]
            for m in range(n - 1):
                if self.nu[m] == 0:
                    continue
                for i in range(m + 1):
                    s = S + 1 + m - n - i
                    if s >= 0:
                        rhs += self.nu[m] * math.comb(m, i) * eps ** (m - i) * (-1) ** i * mp.rf(s, i) * lst[s]
            lst.append(rhs * eps / (n * S))
        return lst

    def C_values(self, z, derivs: int):
        """Matrix [nu][j] of C_j^(nu)(z) (lambda = 1)."""
        n = self.n
        w = z ** n
        logz = mp.log(z)
        tiny = mp.mpf(10) ** (-mp.dps)
        out = [[None] * n for _ in range(derivs)]
        for j in range(n):
            mu = self.mu[j]
            sums = [mp.mpc(0)] * derivs
            wk = mp.mpc(1)
            peak = mp.mpf(0)
            k = 0
            while True:
                t = self.c(j, k) * wk
                base = mu + n * k
                for v in range(derivs):
                    sums[v] += t * mp.ff(base, v)
                mag = abs(t)
                peak = max(peak, mag)
                if n * k > abs(z) + derivs and mag <= tiny * peak:
                    break
                wk *= w
                k += 1
            zmu = mp.exp(mu * logz)
            for v in range(derivs):
                out[v][j] = zmu * sums[v] / z ** v
        return out

    def formal_values(self, k: int, z, derivs: int):
        """e_k^(nu)(z), nu < derivs, from the optimally truncated formal series; also the last term size."""
        tiny = mp.mpf(10) ** (-mp.dps)
        acc = [mp.mpc(0)] * derivs
        prev = mp.mpf(0)
        quiet = 0
        s = 0
        zi = 1 / z
        zpow = mp.mpc(1)
        while True:
            a = self.a(k, s)[s]
            t = a * zpow
            mag = abs(t)
            # optimal truncation: stop before the terms start to grow
            if s > 2 and prev > 0 and mag > prev:
                break
            for i in range(derivs):
                acc[i] += t * (-1) ** i * mp.rf(s, i) * zi ** i
            # a_S depends on the previous n-1 coefficients only
            quiet = quiet + 1 if mag <= tiny * abs(acc[0]) else 0
            if quiet >= self.n - 1:
                break
            prev = mag
            zpow *= zi
            s += 1
        eps = self.eps[k]
        lead = mp.exp(eps * z)
        values = []
        for v in range(derivs):
            values.append(lead * mp.fsum(math.comb(v, i) * eps ** (v - i) * acc[i] for i in range(v + 1)))
        return values, mag


class BirkhoffEngine:
    """High-precision evaluator of e_k, y_k, y*_k and the normalized U0, U0* along one ray of rho."""

    def __init__(self, nu: Sequence[complex], n: int, sd: SectorData, z_max: float = 70.0, digits: int = 16):
        self.n = n
        self.sd = sd
        self.cd = char_data(nu, n)
        self.z_max = z_max
        self.gap = 2 * math.sin(math.pi / n)
        need = 0.87 * 2 * z_max + digits
        self.x_match = max(z_max, need * math.log(10) / self.gap)
        self.dps = int(0.87 * 2 * self.x_match) + 30
        with self._ctx():
            self.eq = _MpEquation(nu, n, self.cd.mu)
            self.beta = self._stokes()
        logging.info(f"Birkhoff engine n={n}: match at |x|={self.x_match:.1f}, {self.dps} digits.")

    def _ctx(self):
        return _PrecisionContext(self.dps)

    def _stokes(self):
        n = self.n
        beta = []
        for k in range(n):
            lo, hi = self.sd.s_star(k + 1)
            z0 = self.x_match * mp.exp(mp.mpc(0, 1) * (lo + hi) / 2)
            e, _ = self.eq.formal_values(k, z0, n)
            Cm = mp.matrix(self.eq.C_values(z0, n))
            sol = mp.lu_solve(Cm, mp.matrix(e))
            beta.append([sol[j] for j in range(n)])
        return beta

    def beta_matrix(self) -> np.ndarray:
        with self._ctx():
            return np.array([[complex(b) for b in row] for row in self.beta])

    def _y_mp(self, z, derivs: int):
        """Rows y_k^(nu)(z) for k = 1..n (z-derivatives)."""
        n, sd = self.n, self.sd
        if abs(z) <= self.z_max:
            Cv = self.eq.C_values(z, derivs)
            return [[mp.fsum(self.beta[sd.perm[k] - 1][j] * Cv[v][j] for j in range(n)) for v in range(derivs)]
                    for k in range(n)]
        if abs(z) >= self.x_match:
            return [self.eq.formal_values(sd.perm[k] - 1, z, derivs)[0] for k in range(n)]
        raise GapRegion(f"|rho x| = {float(abs(z)):.6g} lies between z_max={self.z_max} and {self.x_match:.6g}.")

    def _ystar_mp(self, Y):
        n = self.n
        omega = mp.mpc(self.sd.omega)
        out = []
        for j in range(n):
            rows = [k for k in range(n) if k != j]
            if n == 2:
                minor = Y[rows[0]][0]
            else:
                minor = mp.det(mp.matrix([[Y[k][v] for v in range(n - 1)] for k in rows]))
            out.append((-1) ** (n - j - 1) * minor / omega)
        return out

    def y_values(self, z: complex, derivs: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """y_k^(nu)(z) as [k, nu] and y*_k(z), both as functions of z = rho x."""
        derivs = self.n if derivs is None else derivs
        with self._ctx():
            zz = mp.mpc(z)
            Y = self._y_mp(zz, max(derivs, self.n - 1))
            ys = self._ystar_mp(Y)
            return (np.array([[complex(Y[k][v]) for v in range(derivs)] for k in range(self.n)]),
                    np.array([complex(v) for v in ys]))

    def normalized(self, z: complex) -> Tuple[np.ndarray, np.ndarray]:
        """U0_{k nu}(z) as [k, nu] and U0*_k(z)."""
        n, sd = self.n, self.sd
        mu1, mun = self.eq.mu[0], self.eq.mu[-1]
        with self._ctx():
            zz = mp.mpc(z)
            Y = self._y_mp(zz, n)
            ys = self._ystar_mp(Y)
            U0 = np.empty((n, n), dtype=complex)
            U0s = np.empty(n, dtype=complex)
            big = abs(zz) > 1
            logz = mp.log(zz)
            for k in range(n):
                Rk = mp.mpc(sd.R[k])
                lead = mp.exp(Rk * zz)
                for v in range(n):
                    F = Rk ** v * lead if big else mp.exp((mu1 - v) * logz)
                    U0[k, v] = complex(Y[k][v] / F)
                Fs = 1 / lead if big else mp.exp((n - 1 - mun) * logz)
                U0s[k] = complex(ys[k] / Fs)
            return U0, U0s


class _PrecisionContext:
    def __init__(self, dps: int):
        self.dps = dps

    def __enter__(self):
        _MP_LOCK.acquire()
        self._saved = mp.dps
        mp.dps = self.dps
        return self

    def __exit__(self, *exc):
        mp.dps = self._saved
        _MP_LOCK.release()
        return False


# --- double precision route -------------------------------------------------------

@dataclass
class EValues:
    """e_k^(nu) and z_{k nu} on points r exp(i angle) of a ray."""
    k: int
    angle: float
    r: np.ndarray
    e: np.ndarray
    z: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return self.r * cmath.exp(1j * self.angle)


def formal_seed(nu: Sequence[complex], n: int, k: int, x: complex, dps: int = 40) -> np.ndarray:
    """W_nu = e_k^(nu)(x) exp(-eps_k x) from the formal series, as complex128."""
    cd = char_data(nu, n)
    with _PrecisionContext(dps):
        eq = _MpEquation(nu, n, cd.mu)
        vals, last = eq.formal_values(k - 1, mp.mpc(x), n)
        lead = mp.exp(eq.eps[k - 1] * mp.mpc(x))
        return np.array([complex(v / lead) for v in vals])


def solve_e(sd: SectorData, cd: CharData, k: int, radii: Sequence[float], angle: Optional[float] = None,
            x_max: Optional[float] = None, rtol: float = 1e-12) -> EValues:
    """e_k and z_{k nu} along a ray of S*_k, integrated backward from x_max."""
    n = cd.n
    angle = sd.recessive_angle(k) if angle is None else angle
    lo, hi = sd.s_star(k)
    if not lo - ANGLE_SLACK <= angle <= hi + ANGLE_SLACK:
        raise RayOutsideSector(f"arg x = {angle:.6f} is outside S*_{k} = [{lo:.6f}, {hi:.6f}].")
    radii = np.sort(np.asarray(radii, dtype=float))
    x_max = x_max or max(40.0, 1.5 * float(radii[-1]))
    if radii[-1] > x_max:
        raise RayOutsideSector(f"requested |x| = {radii[-1]} beyond x_max = {x_max}.")
    nu = cd.nu
    eps = sd.eps[k - 1]
    phase = cmath.exp(1j * angle)
    seed = formal_seed(nu, n, k, x_max * phase)

    def rhs(r, W):
        x = r * phase
        dW = np.empty_like(W)
        dW[:-1] = W[1:] - eps * W[:-1]
        dW[-1] = W[0] - sum(nu[m] * x ** (m - n) * W[m] for m in range(n - 1)) - eps * W[-1]
        return phase * dW

    sol = integrate.solve_ivp(rhs, (x_max, radii[0]), seed, method="DOP853", t_eval=radii[::-1],
                              rtol=rtol, atol=rtol * 1e-6)
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        raise PicardDivergence(f"backward integration of e_{k} failed: {sol.message}")
    W = sol.y[:, ::-1]
    xs = radii * phase
    e = W * np.exp(eps * xs)[None, :]
    z = W / np.array([eps ** v for v in range(n)])[:, None]
    return EValues(k, angle, radii, e, z)


@dataclass
class StokesData:
    """beta0_{kj}; b0_{kj} = beta0_{sigma(k) j} for the sector ordering."""
    beta: np.ndarray
    sd: SectorData
    mu: Tuple[complex, ...]
    condition: float = 0.0

    @property
    def b0(self) -> np.ndarray:
        return self.beta[[p - 1 for p in self.sd.perm]]

    def rotation_rule_deviation(self) -> float:
        n = self.sd.n
        pred = np.array([[self.beta[0, j] * self.sd.eps_power(k, self.mu[j]) for j in range(n)]
                         for k in range(1, n + 1)])
        return float(np.max(np.abs(self.beta - pred) / np.maximum(np.abs(pred), 1e-300)))

    def product_rule_deviation(self) -> float:
        n = self.sd.n
        E_mu = np.array([[self.sd.eps_power(k, self.mu[j]) for j in range(n)] for k in range(1, n + 1)])
        E_int = np.array([[self.sd.eps[k] ** j for j in range(n)] for k in range(n)])
        rhs = np.linalg.det(E_int) / np.linalg.det(E_mu)
        return float(abs(np.prod(self.beta[0]) - rhs) / abs(rhs))

    def determinant_deviation(self) -> float:
        """det beta equals det[eps_k^(nu-1)] because the C-Wronskian is 1."""
        n = self.sd.n
        target = np.linalg.det(np.array([[self.sd.eps[k] ** v for v in range(n)] for k in range(n)]))
        return float(abs(np.linalg.det(self.beta) - target) / abs(target))


def stokes_from_e(sd: SectorData, series: SeriesBasis, x_match: float = 0.5,
                  cond_limit: float = 1e8) -> StokesData:
    """Match e_k at |x| = x_match on its recessive ray against the Frobenius basis (lambda = 1)."""
    n = sd.n
    cd = series.cd
    beta = np.empty((n, n), dtype=complex)
    worst = 0.0
    for k in range(1, n + 1):
        ev = solve_e(sd, cd, k, [x_match])
        x0 = complex(ev.x[0])
        Cm = series.values(x0, 1.0)[:, :, 0]
        cond = float(np.linalg.cond(Cm))
        worst = max(worst, cond)
        if cond > cond_limit:
            raise IllConditionedBasis(f"C-Wronskian system at x0={x0:.4g} has condition {cond:.3g}.")
        beta[k - 1] = np.linalg.solve(Cm, ev.e[:, 0])
    data = StokesData(beta, sd, cd.mu, worst)
    checks = (("rotation rule", data.rotation_rule_deviation()), ("product rule", data.product_rule_deviation()))
    for name, dev in checks:
        if dev > 1e-6:
            raise InvariantViolation(f"Stokes relation {name} deviates by {dev:.3g}.")
    if np.min(np.abs(beta[0])) == 0:
        raise InvariantViolation("a Stokes multiplier beta0_1j vanishes.")
    return data


def rotation_deviation(sd: SectorData, cd: CharData, s: int, radius: float = 1.0) -> float:
    """|e_1(eps^s x) - e_{s+1}(x)| relative, for x on a ray where both sides are recessive."""
    n = sd.n
    angle = (n - 2 * s - 0.5) * math.pi / n
    lhs = solve_e(sd, cd, 1, [radius], angle=_wrap(angle + 2 * math.pi * s / n)).e[0, 0]
    rhs = solve_e(sd, cd, s + 1, [radius], angle=angle).e[0, 0]
    return abs(lhs - rhs) / abs(rhs)


@dataclass
class YValues:
    """y_k^(nu)(x, rho) as [k, nu] and y*_k(x, rho)."""
    y: np.ndarray
    ystar: np.ndarray


def eval_y(sd: SectorData, engine: BirkhoffEngine, x: float, rho: complex) -> YValues:
    """y_k(x, rho) = y_k(rho x) with x-derivatives, and the dual solutions y*_k."""
    if not in_sector(rho, sd.k0, sd.n):
        raise RayOutsideSector(f"rho={rho} outside closed sector {sd.k0}.")
    if not sd.asymptotics_valid:
        raise RayOutsideSector(f"sector {sd.k0} is not covered by the Q_k sectors.")
    yz, ys = engine.y_values(rho * x)
    scale = np.array([rho ** v for v in range(sd.n)])
    return YValues(yz * scale[None, :], ys)


def green_bilinear(sd: SectorData, engine: BirkhoffEngine, x: float, t: float, rho: complex) -> complex:
    """rho^(1-n) sum_j y_j(x) y*_j(t)."""
    yx = eval_y(sd, engine, x, rho)
    yt = eval_y(sd, engine, t, rho)
    return complex(np.sum(yx.y[:, 0] * yt.ystar) / rho ** (sd.n - 1))


# --- the integral system for Y_k ----------------------------------------------------

@dataclass
class JEstimate:
    J: float
    parts: List[float]
    Q: float

    def bound_holds(self, rho_abs: float) -> bool:
        return self.J * rho_abs <= self.Q * (1 + 1e-9) + 1e-14


def estimate_J(potential: PotentialSpec, cd: CharData, rho: complex, length: float) -> JEstimate:
    """J(rho) = sum_m J_m(rho) and Q = sum_m int |q_0m|, the contraction constants of the integral system."""
    n = cd.n
    a = abs(rho)
    theta = cd.theta
    spread = (cd.mu[0] - cd.mu[-1]).real
    parts = []
    for m in range(n - 1):
        if potential.is_zero(m):
            parts.append(0.0)
            continue
        f = lambda t: abs(complex(potential.evaluate(m, t)))
        cut = min(1.0 / a, length)
        near, _ = integrate.quad(lambda t: t ** (theta - m) * f(t), 0.0, cut, limit=200)
        far = 0.0
        if cut < length:
            far, _ = integrate.quad(f, cut, length, limit=200)
        parts.append(a ** spread * near + a ** (m - n + 1) * far)
    Q = sum(potential.weighted_l1(m, theta, length) for m in range(n - 1))
    return JEstimate(sum(parts), parts, Q)


def r_grid(reach: float, z_step: float = 0.125, small: int = 40) -> np.ndarray:
    """|rho x| nodes: geometric below 1 (including 0.5), uniform up to reach."""
    geo = np.geomspace(1e-4, 1.0, small, endpoint=False)
    uni = np.arange(1.0, reach, z_step)
    return np.unique(np.concatenate([geo, [0.5], uni, [reach]]))


class BirkhoffScaffold:
    """Normalized U0, U0* on the |rho x| nodes of one ray, with the measured constants M0, M1."""

    def __init__(self, engine: BirkhoffEngine, angle: float):
        self.engine = engine
        self.sd = engine.sd
        self.angle = angle
        self._cache: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}
        self.M0 = 0.0
        self.M1 = 0.0

    def u0(self, r: float) -> Tuple[np.ndarray, np.ndarray]:
        key = round(float(r), 12)
        if key not in self._cache:
            U0, U0s = self.engine.normalized(key * cmath.exp(1j * self.angle))
            self._cache[key] = (U0, U0s)
            self.M1 = max(self.M1, float(np.max(np.abs(U0))), float(np.max(np.abs(U0s))))
            if key >= 1.0:
                self.M0 = max(self.M0, float(np.max(np.abs(U0 - 1))) * key)
        return self._cache[key]

    def table(self, rs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """U0 as [k, nu, node] and U0* as [k, node]."""
        pairs = [self.u0(r) for r in rs]
        return np.stack([p[0] for p in pairs], axis=-1), np.stack([p[1] for p in pairs], axis=-1)

    def calibrate(self, reach: float, z_step: float = 0.125) -> Tuple[float, float]:
        self.table(r_grid(reach, z_step))
        logging.info(f"Measured M0={self.M0:.4g}, M1={self.M1:.4g} on |rho x| <= {reach:g}.")
        return self.M0, self.M1


def _log_F(sd: SectorData, mu1: complex, z: np.ndarray) -> np.ndarray:
    """log F_{k nu}(z) as [k, nu, node]."""
    n = sd.n
    big = np.abs(z) > 1
    logz = np.log(z)
    out = np.empty((n, n, z.size), dtype=complex)
    for k in range(n):
        for v in range(n):
            out[k, v] = np.where(big, v * sd.log_R(k + 1) + sd.R[k] * z, (mu1 - v) * logz)
    return out


def _log_Fs(sd: SectorData, mun: complex, z: np.ndarray) -> np.ndarray:
    n = sd.n
    big = np.abs(z) > 1
    logz = np.log(z)
    return np.array([np.where(big, -sd.R[k] * z, (n - 1 - mun) * logz) for k in range(n)])


@dataclass
class YSolution:
    """U_{k nu} on the nodes x of (0, length] for one rho, with U0 for comparison."""
    rho: complex
    x: np.ndarray
    r: np.ndarray
    U: np.ndarray
    U0: np.ndarray
    sweeps: List[int]
    contraction: float
    residual: float

    def Y(self, sd: SectorData, mu1: complex, i: int) -> np.ndarray:
        """Y_k^(nu)(x_i) as [k, nu]."""
        z = self.rho * self.x[i]
        logF = _log_F(sd, mu1, np.array([z]))[:, :, 0]
        scale = np.array([self.rho ** v for v in range(sd.n)])
        return scale[None, :] * np.exp(logF) * self.U[:, :, i]

    def node(self, r: float) -> int:
        return int(np.argmin(np.abs(self.r - r)))


def _trapezoid_parts(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Left and right halves of the trapezoid weight at each node; [0, x_0] goes to node 0."""
    d = np.diff(x)
    left = np.concatenate([[x[0]], 0.5 * d])
    right = np.concatenate([0.5 * d, [0.0]])
    return left, right


def solve_Y(sd: SectorData, scaffold: BirkhoffScaffold, potential: PotentialSpec, rho: complex, length: float,
            config: Optional[BirkhoffConfig] = None, tol: float = 1e-13) -> YSolution:
    """Solve the integral system for U_{k nu}(x, rho) on (0, length] by Picard iteration."""
    config = config or BirkhoffConfig()
    n = sd.n
    cd = scaffold.engine.cd
    if not in_sector(rho, sd.k0, n):
        raise RayOutsideSector(f"rho={rho} outside closed sector {sd.k0}.")
    a = abs(rho)
    rs = r_grid(a * length, config.z_step)
    x = rs / a
    U0, U0s = scaffold.table(rs)

    if potential.is_zero():
        return YSolution(rho, x, rs, U0.copy(), U0, [0] * n, 0.0, 0.0)

    Q = estimate_J(potential, cd, rho, length).Q
    rho0 = 2 * scaffold.M1 * Q + 1
    if a < rho0:
        raise RhoBelowThreshold(f"|rho|={a:.4g} below rho0 = 2 M1 Q + 1 = {rho0:.4g} (M1={scaffold.M1:.4g}, Q={Q:.4g}).")

    z = rho * x
    mu1, mun = cd.mu[0], cd.mu[-1]
    logF = _log_F(sd, mu1, z)
    logFs = _log_Fs(sd, mun, z)
    q = np.array([potential.evaluate(m, x) for m in range(n - 1)])
    left, right = _trapezoid_parts(x)
    full = left + right
    N = x.size
    I, T = np.indices((N, N))
    lower_w = np.where(T < I, full[T], np.where(T == I, left[T], 0.0))
    upper_w = np.where(T > I, full[T], np.where(T == I, right[T], 0.0))

    U = np.empty_like(U0)
    sweeps = []
    worst_norm = 0.0
    worst_res = 0.0
    for k in range(n):
        K = np.zeros((n, n - 1, N, N), dtype=complex)
        for v in range(n):
            for m in range(n - 1):
                base = logF[k, m][None, :] - logF[k, v][:, None]
                low = np.zeros((N, N), dtype=complex)
                up = np.zeros((N, N), dtype=complex)
                for j in range(n):
                    E = logF[j, v][:, None] + logFs[j][None, :] + base
                    amp = U0[j, v][:, None] * U0s[j][None, :]
                    if j <= k:
                        low -= np.exp(np.where(lower_w > 0, E, _MASKED)) * amp
                    else:
                        up += np.exp(np.where(upper_w > 0, E, _MASKED)) * amp
                K[v, m] = (q[m][None, :] / rho ** (n - 1 - m)) * (lower_w * low + upper_w * up)
        closed = K[: n - 1].transpose(0, 2, 1, 3).reshape((n - 1) * N, (n - 1) * N)
        norm = float(np.max(np.sum(np.abs(closed), axis=1)))
        worst_norm = max(worst_norm, norm)
        base_vec = U0[k, : n - 1].reshape(-1)
        cur = base_vec.copy()
        for sweep in range(1, config.picard_max_sweeps + 1):
            nxt = base_vec + closed @ cur
            change = float(np.max(np.abs(nxt - cur)))
            cur = nxt
            if change <= tol * max(1.0, float(np.max(np.abs(cur)))):
                break
            if not np.isfinite(change) or change > 1e6:
                raise ContractionFailure(f"Picard iteration for k={k + 1} diverges at rho={rho:.4g}.")
        else:
            raise ContractionFailure(
                f"Picard iteration for k={k + 1} not converged after {config.picard_max_sweeps} sweeps (rho={rho:.4g}).")
        sweeps.append(sweep)
        Um = cur.reshape(n - 1, N)
        U[k, : n - 1] = Um
        U[k, n - 1] = U0[k, n - 1] + np.einsum("mij,mj->i", K[n - 1], Um)
        res = Um - U0[k, : n - 1] - np.einsum("vmij,mj->vi", K[: n - 1], Um)
        worst_res = max(worst_res, float(np.max(np.abs(res))))
    logging.debug(f"Y-system at |rho|={a:g}: operator norm {worst_norm:.3g}, sweeps {sweeps}.")
    return YSolution(rho, x, rs, U, U0, sweeps, worst_norm, worst_res)


def connection_coefficients(ysol: YSolution, sd: SectorData, series: SeriesBasis, potential: PotentialSpec,
                            volterra: Optional[VolterraConfig] = None, r_match: float = 0.5) -> np.ndarray:
    """b_kj(rho) with Y_k = sum_j b_kj S_j, read off at |rho x| = r_match."""
    i = ysol.node(r_match)
    x_m = float(ysol.x[i])
    lam = ysol.rho ** sd.n
    basis = solve_volterra(series, potential, lam, x_m, volterra)
    S = basis.endpoint()
    Y = ysol.Y(sd, series.cd.mu[0], i)
    return np.linalg.solve(S, Y.T).T


def connection_deviation(b: np.ndarray, stokes: StokesData, rho: complex) -> float:
    """max |b_kj rho^(-mu_j) / b0_kj - 1|."""
    mu = np.array(stokes.mu)
    ratio = b * np.exp(-mu * cmath.log(rho))[None, :] / stokes.b0
    return float(np.max(np.abs(ratio - 1)))


def stokes_high_precision(engine: BirkhoffEngine) -> StokesData:
    return StokesData(engine.beta_matrix(), engine.sd, engine.cd.mu)
