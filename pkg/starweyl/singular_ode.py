# starweyl/singular_ode.py
"""
Per-edge machinery near the regular singular point x = 0.

The characteristic polynomial Delta(mu) and its roots, the Frobenius series
C_j(x, lambda), the Cauchy Green's function g(x, t, lambda), and the basis
S_j(x, lambda) of the equation with potential, built from the Volterra system

    S_j^(nu) = C_j^(nu) - int_0^x d^nu/dx^nu g(x, t) sum_m q_m(t) S_j^(m)(t) dt.

The kernel is separable, g(x, t) = sum_i sigma_i C_i(x) C*_{n-i+1}(t), so the
system is integrated as a linear ODE for the moments
A_ij(x) = int_0^x C*_{n-i+1}(t) f_j(t) dt on a mesh graded toward 0. Once
|rho x| reaches 1 the construction continues by integrating the equation
itself, which keeps the growing exponentials from cancelling.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, linalg
from scipy.interpolate import CubicSpline

from .config import Tolerances, VolterraConfig, VolterraScheme
from .errors import (
    CharacteristicError, EqualRealParts, OutOfConvergenceBudget, QuadratureNonconvergence,
    RootInForbiddenIntegerSet, RootsDifferByMultipleOfN, WrongCoefficientCount,
)
from .model import PotentialSpec

# Root clusters closer than this count as coincident (multiple roots come out of
# the companion matrix split by about sqrt(machine epsilon)).
ROOT_TOL = 1e-7


def falling(a, k: int):
    """Falling factorial a (a-1) ... (a-k+1), vectorized over a."""
    out = np.ones_like(np.asarray(a, dtype=complex))
    for i in range(k):
        out = out * (a - i)
    return out


def _falling_poly(k: int) -> np.ndarray:
    """Descending coefficients of mu (mu-1) ... (mu-k+1)."""
    return np.poly(np.arange(k)) if k else np.array([1.0])


def build_char_poly(nu: Sequence[complex], n: int) -> np.ndarray:
    """Descending coefficients of Delta(mu) = sum_j nu_j prod_{k<j} (mu - k), nu_n = 1, nu_{n-1} = 0."""
    if len(nu) != n - 1:
        raise WrongCoefficientCount(f"order {n} needs {n - 1} nu coefficients, got {len(nu)}.")
    full = [complex(v) for v in nu] + [0j, 1.0 + 0j]
    poly = np.zeros(n + 1, dtype=complex)
    for j, c in enumerate(full):
        if c != 0:
            poly[n - j:] += c * _falling_poly(j)
    return poly


def nu_from_poly(poly: np.ndarray) -> Tuple[complex, ...]:
    """Inverse of build_char_poly: expand a monic Delta in the falling-factorial basis."""
    n = len(poly) - 1
    rest = np.array(poly, dtype=complex)
    coeffs = [0j] * (n + 1)
    for j in range(n, -1, -1):
        c = rest[n - j]
        coeffs[j] = c
        rest[n - j:] -= c * _falling_poly(j)
    return tuple(coeffs[:n - 1])


@dataclass(frozen=True)
class CharData:
    """Characteristic data of one equation: roots sorted by real part."""
    n: int
    poly: Tuple[complex, ...]
    mu: Tuple[complex, ...]

    @property
    def nu(self) -> Tuple[complex, ...]:
        return nu_from_poly(np.array(self.poly))

    @property
    def theta(self) -> float:
        return self.n - 1 - (self.mu[-1] - self.mu[0]).real

    def delta(self, z):
        return np.polyval(np.array(self.poly), z)

    @property
    def vandermonde(self) -> complex:
        """det[mu_j^(nu-1)]."""
        mu = np.array(self.mu)
        return complex(np.linalg.det(np.vander(mu, increasing=True).T))


def _polish(poly: np.ndarray, roots: np.ndarray, steps: int = 8) -> np.ndarray:
    dpoly = np.polyder(poly)
    out = []
    for r in roots:
        for _ in range(steps):
            d = np.polyval(dpoly, r)
            if abs(d) < 1e-14:
                break
            step = np.polyval(poly, r) / d
            if not np.isfinite(step) or abs(step) > 1e-3 * (1 + abs(r)):
                break
            r = r - step
            if abs(step) < 1e-16 * (1 + abs(r)):
                break
        out.append(r)
    return np.array(out)


def compute_char_roots(poly) -> CharData:
    """
    Roots of a monic Delta via companion-matrix eigenvalues polished by Newton.
    Raises when the standing assumptions on the roots fail.
    """
    poly = np.array(poly, dtype=complex)
    if poly[0] == 0:
        raise CharacteristicError("leading coefficient of the characteristic polynomial is zero.")
    poly = poly / poly[0]
    n = len(poly) - 1
    if n < 2:
        raise WrongCoefficientCount(f"characteristic polynomial must have degree >= 2, got {n}.")
    vieta = n * (n - 1) / 2
    if abs(-poly[1] - vieta) > 1e-10 * (1 + vieta):
        raise CharacteristicError(
            f"root sum {-poly[1]} differs from n(n-1)/2 = {vieta}; nu_(n-1) must vanish.")

    roots = np.linalg.eigvals(linalg.companion(poly))
    roots = _polish(poly, roots)
    roots = np.array(sorted(roots, key=lambda z: (round(z.real, 12), z.imag)))

    for a, b in zip(roots, roots[1:]):
        if abs(b.real - a.real) <= ROOT_TOL * (1 + abs(a)):
            raise EqualRealParts(f"roots {a:.6g} and {b:.6g} have equal real parts.")
    for i in range(n):
        for k in range(i + 1, n):
            d = (roots[k] - roots[i]) / n
            s = round(d.real)
            if s != 0 and abs(d - s) <= ROOT_TOL * (1 + abs(d)):
                raise RootsDifferByMultipleOfN(f"roots {roots[i]:.6g} and {roots[k]:.6g} differ by {s}*{n}.")
    for r in roots:
        s = round(r.real)
        if 0 <= s <= n - 3 and abs(r - s) <= ROOT_TOL:
            raise RootInForbiddenIntegerSet(f"root {r:.6g} lies in {{0, ..., {n - 3}}}.")

    scale = 1 + np.sum(np.abs(poly))
    for r in roots:
        if abs(np.polyval(poly, r)) > 1e-10 * scale * (1 + abs(r)) ** n:
            raise CharacteristicError(f"root {r} does not annihilate Delta to tolerance.")
    if abs(np.sum(roots) - vieta) > 1e-10 * (1 + vieta):
        raise CharacteristicError(f"sum of roots {np.sum(roots)} differs from {vieta}.")
    return CharData(n, tuple(complex(c) for c in poly), tuple(complex(r) for r in roots))


def char_data(nu: Sequence[complex], n: int) -> CharData:
    return compute_char_roots(build_char_poly(nu, n))


@dataclass(eq=False)
class SeriesSolution:
    """C_j(x, lambda) = x^mu_j sum_k c_jk lambda^k x^(nk)."""
    j: int
    mu: complex
    coeffs: np.ndarray
    K: int
    tol: float
    r_max: float


def build_series(cd: CharData, tol: float = 1e-14, r_max: float = 25.0) -> List[SeriesSolution]:
    """Series coefficients with c_j0 = 1 for j < n and c_n0 = 1/det[mu_j^(nu-1)]."""
    n = cd.n
    rn = r_max ** n
    out = []
    for j, mu in enumerate(cd.mu, start=1):
        c0 = 1.0 + 0j if j < n else 1.0 / cd.vandermonde
        coeffs = [c0]
        peak = abs(c0)
        k = 0
        while True:
            k += 1
            coeffs.append(coeffs[-1] / complex(cd.delta(mu + k * n)))
            size = abs(coeffs[-1]) * rn ** k
            peak = max(peak, size)
            ratio = abs(coeffs[-1] / coeffs[-2]) * rn if coeffs[-2] != 0 else 0.0
            if ratio < 0.5 and 2 * size <= tol * peak:
                break
            if k > 4000:
                raise OutOfConvergenceBudget(f"series for C_{j} does not settle for r_max={r_max}.")
        out.append(SeriesSolution(j, mu, np.array(coeffs), k, tol, r_max))
    return out


def _xpow(x, a):
    """x^a with the principal logarithm, arg x in (-pi, pi]."""
    return np.exp(a * np.log(np.asarray(x, dtype=complex)))


class SeriesBasis:
    """Evaluators for C_j, C*_j and the Cauchy Green's function of one equation."""

    def __init__(self, cd: CharData, tol: float = 1e-14, r_max: float = 25.0):
        self.cd = cd
        self.n = cd.n
        self.r_max = r_max
        self.series = build_series(cd, tol, r_max)
        self.sigma = np.array([(-1.0) ** (self.n - i) for i in range(1, self.n + 1)])

    def _check_budget(self, x, lam: complex):
        reach = np.max(np.abs(np.asarray(x))) * abs(lam) ** (1.0 / self.n)
        if reach > self.r_max * (1 + 1e-12):
            raise OutOfConvergenceBudget(f"|rho x| = {reach:.6g} exceeds calibrated r_max = {self.r_max}.")

    def values(self, x, lam: complex, derivs: Optional[int] = None) -> np.ndarray:
        """C_j^(nu)(x, lambda) as an array [nu, j, point] for array x (real or complex)."""
        derivs = self.n if derivs is None else derivs
        x = np.atleast_1d(np.asarray(x, dtype=complex))
        self._check_budget(x, lam)
        n = self.n
        w = lam * x ** n
        out = np.empty((derivs, n, x.size), dtype=complex)
        logx = np.log(x)
        for col, sol in enumerate(self.series):
            k = np.arange(sol.K + 1)
            terms = sol.coeffs[None, :] * np.vander(w, sol.K + 1, increasing=True)
            xmu = np.exp(sol.mu * logx)
            for nu in range(derivs):
                ff = falling(sol.mu + n * k, nu)
                out[nu, col] = xmu * x ** (-nu) * (terms @ ff)
        return out

    def eval_C(self, j: int, x, lam: complex) -> np.ndarray:
        """Value and derivatives 0..n-1 of C_j (j is 1-based) at scalar x."""
        return self.values(x, lam)[:, j - 1, 0]

    def cstar(self, x, lam: complex) -> np.ndarray:
        """C*_1..C*_n at scalar x: minors of rows nu = 0..n-2 dropping column n-j+1."""
        Cv = self.values(x, lam, self.n - 1)[:, :, 0]
        return _cstar_from(Cv, self.n)

    def green_g(self, x: float, t: float, lam: complex, deriv: int = 0) -> complex:
        """d^nu/dx^nu g(x, t, lambda) = sum_j (-1)^(n-j) C_j^(nu)(x) C*_{n-j+1}(t)."""
        Cx = self.values(x, lam, deriv + 1)[deriv, :, 0]
        cs = self.cstar(t, lam)
        return complex(np.sum(self.sigma * Cx * cs[::-1]))

    def wronskian(self, x, lam: complex) -> complex:
        return complex(np.linalg.det(self.values(x, lam)[:, :, 0]))

    def green_bound_constant(self, lam: complex, samples: Sequence[Tuple[float, float]]) -> float:
        """Smallest M with |d^nu g| <= M sum_j |x^(mu_j-nu) t^(n-1-mu_j)| over the samples (t <= x)."""
        worst = 0.0
        mu = np.array(self.cd.mu)
        for x, t in samples:
            for nu in range(self.n):
                bound = np.sum(np.abs(_xpow(x, mu - nu) * _xpow(t, self.n - 1 - mu)))
                worst = max(worst, abs(self.green_g(x, t, lam, nu)) / bound)
        return worst


def _cstar_from(Cv: np.ndarray, n: int) -> np.ndarray:
    """Minors of Cv (rows nu = 0..n-2, columns j) for C*_1..C*_n."""
    out = np.empty(n, dtype=complex)
    for j in range(1, n + 1):
        drop = n - j
        cols = [c for c in range(n) if c != drop]
        sub = Cv[: n - 1][:, cols]
        out[j - 1] = sub[0, 0] if n == 2 else np.linalg.det(sub)
    return out


def eval_C(basis: SeriesBasis, j: int, x, lam: complex) -> np.ndarray:
    return basis.eval_C(j, x, lam)


def green_g(basis: SeriesBasis, x: float, t: float, lam: complex, deriv: int = 0) -> complex:
    if not 0 < t <= x:
        raise ValueError("green_g needs 0 < t <= x.")
    return basis.green_g(x, t, lam, deriv)


def grading_exponent(cd: CharData, potential: PotentialSpec, length: float) -> float:
    """Mesh grading x = l s^gamma so the Volterra integrand stays bounded near 0."""
    alpha = math.inf
    for m in range(cd.n - 1):
        if potential.is_zero(m):
            continue
        low = potential.lowest_power(m)
        alpha = min(alpha, cd.theta - m + (low if low is not None else 0))
    if alpha == math.inf:
        return 1.0
    if alpha <= -1:
        raise QuadratureNonconvergence(
            f"potential is not integrable against the Volterra weight (exponent {alpha:.4g} <= -1).")
    return min(10.0, max(1.0, 2.0 / (1.0 + alpha)))


@dataclass(eq=False)
class RegularBasis:
    """S_j(x, lambda), j = 1..n, with derivatives up to n-1, on (0, length]."""
    lam: complex
    length: float
    series: SeriesBasis
    potential: PotentialSpec
    gamma: float
    mesh: np.ndarray
    _near: Optional[object] = None
    _far: Optional[object] = None
    _handoff: float = 0.0
    _s0: float = 0.0
    _table: Optional[Tuple[np.ndarray, np.ndarray]] = None
    _cache: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.series.n

    @property
    def cd(self) -> CharData:
        return self.series.cd

    def _moments(self, x: float) -> np.ndarray:
        n = self.n
        if self._near is None:
            return np.zeros((n, n), dtype=complex)
        s = (x / self.length) ** (1.0 / self.gamma)
        if s < self._s0:
            return np.zeros((n, n), dtype=complex)
        return self._near(s).reshape(n, n)

    def evaluate(self, x: float) -> np.ndarray:
        """Array [nu, j] of S_j^(nu)(x, lambda)."""
        if not 0 < x <= self.length * (1 + 1e-12):
            raise ValueError(f"x={x} outside (0, {self.length}].")
        if self._table is not None:
            return self._from_table(x)
        if x <= self._handoff or self._far is None:
            Cv = self.series.values(x, self.lam)[:, :, 0]
            A = self._moments(x)
            return Cv - Cv @ (self.series.sigma[:, None] * A)
        return self._far(x).reshape(self.n, self.n)

    def _from_table(self, x: float) -> np.ndarray:
        s_mesh, vals = self._table
        s = (x / self.length) ** (1.0 / self.gamma)
        if s <= s_mesh[0]:
            return self.series.values(x, self.lam)[:, :, 0]
        if "splines" not in self._cache:
            flat = vals.reshape(len(s_mesh), -1)
            self._cache["splines"] = (CubicSpline(s_mesh, flat.real), CubicSpline(s_mesh, flat.imag))
        re, im = self._cache["splines"]
        return (re(s) + 1j * im(s)).reshape(self.n, self.n)

    def endpoint(self) -> np.ndarray:
        """S_j^(nu)(l, lambda) as [nu, j]."""
        if "end" not in self._cache:
            self._cache["end"] = self.evaluate(self.length)
        return self._cache["end"]

    def wronskian(self, x: float) -> complex:
        return complex(np.linalg.det(self.evaluate(x)))

    def equation_residual(self, x: float, rel_step: float = 1e-4) -> float:
        """Relative residual of the equation with S^(n) from a central difference of S^(n-1)."""
        n = self.n
        h = rel_step * x
        Sx = self.evaluate(x)
        top = (self.evaluate(x + h)[n - 1] - self.evaluate(x - h)[n - 1]) / (2 * h)
        nu = self.cd.nu
        res = top - self.lam * Sx[0]
        scale = np.abs(top) + abs(self.lam) * np.abs(Sx[0])
        for m in range(n - 1):
            coef = nu[m] * x ** (m - n) + complex(self.potential.evaluate(m, x))
            res = res + coef * Sx[m]
            scale = scale + abs(coef) * np.abs(Sx[m])
        return float(np.max(np.abs(res) / np.maximum(scale, 1e-300)))

    def asymptotic_match_ratios(self, count: int = 2) -> List[float]:
        """|S_j - C_j| x^(-mu_j) / |x^(mu_n - mu_1)| at the smallest mesh points, max over j."""
        mu = np.array(self.cd.mu)
        out = []
        for x in self.mesh[:count]:
            S = self.evaluate(float(x))[0]
            C = self.series.values(float(x), self.lam, 1)[0, :, 0]
            r = np.abs((S - C) * _xpow(x, -mu)) / abs(_xpow(x, mu[-1] - mu[0]))
            out.append(float(np.max(r)))
        return out


def _graded_mesh(length: float, gamma: float, points: int, min_scale: float) -> Tuple[np.ndarray, float]:
    s0 = min_scale ** (1.0 / gamma)
    s = s0 + (1.0 - s0) * np.arange(points + 1) / points
    return s, s0


def _potential_row(potential: PotentialSpec, n: int, x) -> np.ndarray:
    return np.array([complex(potential.evaluate(m, x)) for m in range(n - 1)])


def _head_integral(g, t0: float) -> np.ndarray:
    """Integral of g over (0, t0] for an integrand behaving like a power of t near 0.

    The power is estimated entrywise from g(t0) and g(t0 / 2).
    """
    g0 = np.asarray(g(t0))
    g1 = np.asarray(g(0.5 * t0))
    a0, a1 = np.abs(g0), np.abs(g1)
    ok = (a0 > 0) & (a1 > 0)
    k = np.zeros(g0.shape)
    k[ok] = np.log2(a0[ok] / a1[ok])
    k = np.clip(k, -0.9, 50.0)
    return t0 * g0 / (k + 1.0)


def _solve_near(series: SeriesBasis, potential: PotentialSpec, lam: complex, length: float,
                gamma: float, s_mesh: np.ndarray, s_end: float, rtol: float):
    """Moments A_ij on the graded mesh up to s_end; returns dense output."""
    n = series.n
    sigma = series.sigma

    def rhs(s, a):
        x = length * s ** gamma
        dxds = length * gamma * s ** (gamma - 1)
        Cv = series.values(x, lam, n - 1)[:, :, 0]
        A = a.reshape(n, n)
        h = _potential_row(potential, n, x) @ Cv
        f = h - (h * sigma) @ A
        return (np.outer(_cstar_from(Cv, n)[::-1], f) * dxds).ravel()

    s_eval = s_mesh[s_mesh <= s_end]
    # moments accumulated over (0, s_mesh[0]] before the first mesh point
    a0 = _head_integral(lambda s: rhs(s, np.zeros(n * n, dtype=complex)), s_mesh[0])
    sol = integrate.solve_ivp(rhs, (s_mesh[0], s_end), a0, method="DOP853",
                              t_eval=s_eval, dense_output=True, rtol=rtol, atol=rtol * 1e-10)
    if sol.status != 0:
        raise QuadratureNonconvergence(f"Volterra moment integration failed: {sol.message}")
    return sol


def _solve_far(series: SeriesBasis, potential: PotentialSpec, lam: complex, start: float, length: float,
               S0: np.ndarray, rtol: float):
    """Continue the basis from x = start to x = length by integrating the equation itself."""
    n = series.n
    nu = series.cd.nu

    def rhs(x, y):
        Y = y.reshape(n, n)
        dY = np.empty_like(Y)
        dY[:-1] = Y[1:]
        coef = np.array([nu[m] * x ** (m - n) for m in range(n - 1)]) + _potential_row(potential, n, x)
        dY[-1] = lam * Y[0] - coef @ Y[: n - 1]
        return dY.ravel()

    sol = integrate.solve_ivp(rhs, (start, length), S0.ravel(), method="DOP853", dense_output=True,
                              rtol=rtol, atol=rtol * 1e-10)
    if sol.status != 0:
        raise QuadratureNonconvergence(f"continuation of the S-basis failed: {sol.message}")
    return sol


def _solve_trapezoid(series: SeriesBasis, potential: PotentialSpec, lam: complex, length: float,
                     gamma: float, s_mesh: np.ndarray) -> np.ndarray:
    """Product-trapezoid stepping of the Volterra system; S values [point, nu, j]."""
    n = series.n
    sigma = series.sigma
    xs = length * s_mesh ** gamma
    out = np.empty((len(xs), n, n), dtype=complex)

    def head(x):
        Cx = series.values(x, lam)[:, :, 0]
        return np.outer(_cstar_from(Cx, n)[::-1], _potential_row(potential, n, x) @ Cx[: n - 1])

    B = _head_integral(head, xs[0])
    prev = None
    for i, x in enumerate(xs):
        Cv = series.values(x, lam)[:, :, 0]
        cs = _cstar_from(Cv, n)[::-1]
        q = _potential_row(potential, n, x)
        if i == 0:
            S = Cv - Cv @ (sigma[:, None] * B)
        else:
            half = 0.5 * (x - xs[i - 1])
            partial = B + half * prev
            S = Cv - Cv @ (sigma[:, None] * partial)
            f = q @ S[: n - 1]
            B = partial + half * np.outer(cs, f)
            S = Cv - Cv @ (sigma[:, None] * B)
        f = q @ S[: n - 1]
        prev = np.outer(cs, f)
        out[i] = S
    return out


def solve_volterra(series: SeriesBasis, potential: PotentialSpec, lam: complex, length: float,
                   config: Optional[VolterraConfig] = None, tol: Optional[Tolerances] = None) -> RegularBasis:
    """Build the S-basis on (0, length] at lambda."""
    config = config or VolterraConfig()
    tol = tol or Tolerances()
    cd = series.cd
    n = cd.n
    gamma = grading_exponent(cd, potential, length)
    s_mesh, s0 = _graded_mesh(length, gamma, config.mesh_points, config.min_scale)
    rho_abs = abs(lam) ** (1.0 / n)

    if config.scheme is VolterraScheme.TRAPEZOID:
        series._check_budget(length, lam)
        vals = _solve_trapezoid(series, potential, lam, length, gamma, s_mesh)
        basis = RegularBasis(lam, length, series, potential, gamma, length * s_mesh ** gamma,
                             _table=(s_mesh, vals), _s0=s0)
    else:
        handoff = min(length, 1.0 / rho_abs) if rho_abs > 0 else length
        if potential.is_zero() and rho_abs * length <= series.r_max:
            # S = C: the series covers the whole edge
            handoff = length
        s_end = max((handoff / length) ** (1.0 / gamma), s_mesh[1])
        handoff = length * s_end ** gamma
        near = None
        mesh = length * s_mesh[s_mesh <= s_end] ** gamma
        if not potential.is_zero():
            sol = _solve_near(series, potential, lam, length, gamma, s_mesh, s_end, tol.volterra)
            near = sol.sol
        basis = RegularBasis(lam, length, series, potential, gamma, mesh, _near=near, _handoff=handoff, _s0=s0)
        if handoff < length * (1 - 1e-14):
            far = _solve_far(series, potential, lam, handoff, length, basis.evaluate(handoff), tol.volterra)
            basis._far = far.sol
            basis.mesh = np.concatenate([mesh, far.t[1:]])
        else:
            basis._handoff = length

    _check_wronskian(basis)
    return basis


def _check_wronskian(basis: RegularBasis, limit: float = 1e-6) -> None:
    for x in (basis.mesh[len(basis.mesh) // 2], basis.length):
        S = basis.evaluate(float(x))
        scale = float(np.prod(np.linalg.norm(S, axis=0)))
        dev = abs(np.linalg.det(S) - 1)
        if dev > limit * max(1.0, scale):
            raise QuadratureNonconvergence(
                f"Wronskian of the S-basis drifted to {dev:.3g} at x={x:.6g}, lambda={basis.lam}.")
    logging.debug(f"S-basis at lambda={basis.lam:.6g} passed the Wronskian check.")
