# starweyl/model.py
"""
Domain types for the star graph: edges, potentials, spectral grids, and the
structural validation that happens before any numerics run.

Edges, boundary vertices s, w and row/column indices k, mu are 1-based as in
the equations; derivative orders nu are 0-based.
"""
import cmath
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import polynomial as P
from scipy import integrate
from scipy.interpolate import CubicSpline

from .config import GridKind, PotentialKind
from .errors import (
    DuplicatePoint, EmptyRange, GammaDiagonalZero, InvalidW, ModelError,
    NonmonotoneOrders, SectorMismatch, WrongCoefficientCount,
)

# Sector membership is tested on the closed sector with this angular slack.
ARG_SLACK = 1e-12


@dataclass(frozen=True)
class PotentialSpec:
    """
    The potential coefficients q_0..q_{n-2} of one edge.

    POLYNOMIAL stores ascending-power coefficients per component; TABLE stores
    (x, values) samples per component, interpolated with a cubic spline.
    Missing components are identically zero.
    """
    kind: PotentialKind = PotentialKind.ZERO
    coeffs: Tuple[Tuple[complex, ...], ...] = ()
    samples: Tuple[Tuple[Tuple[float, ...], Tuple[complex, ...]], ...] = ()

    def __post_init__(self):
        if self.kind is PotentialKind.TABLE:
            for xs, vals in self.samples:
                if len(xs) != len(vals) or len(xs) < 4:
                    raise ModelError("table potentials need at least 4 (x, q) samples per component.")
                if any(b <= a for a, b in zip(xs, xs[1:])):
                    raise ModelError("table potential abscissae must be strictly increasing.")

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls()

    @classmethod
    def polynomial(cls, coeffs: Sequence[Sequence[complex]]) -> "PotentialSpec":
        return cls(PotentialKind.POLYNOMIAL, tuple(tuple(complex(c) for c in row) for row in coeffs))

    @classmethod
    def table(cls, samples: Sequence[Tuple[Sequence[float], Sequence[complex]]]) -> "PotentialSpec":
        return cls(PotentialKind.TABLE, samples=tuple(
            (tuple(float(x) for x in xs), tuple(complex(v) for v in vals)) for xs, vals in samples))

    def _count(self) -> int:
        if self.kind is PotentialKind.POLYNOMIAL:
            return len(self.coeffs)
        if self.kind is PotentialKind.TABLE:
            return len(self.samples)
        return 0

    def is_zero(self, m: Optional[int] = None) -> bool:
        if self.kind is PotentialKind.ZERO:
            return True
        ms = range(self._count()) if m is None else [m]
        for i in ms:
            if i >= self._count():
                continue
            if self.kind is PotentialKind.POLYNOMIAL and any(c != 0 for c in self.coeffs[i]):
                return False
            if self.kind is PotentialKind.TABLE and any(v != 0 for v in self.samples[i][1]):
                return False
        return True

    @cached_property
    def _splines(self) -> List[Tuple[CubicSpline, CubicSpline]]:
        out = []
        for xs, vals in self.samples:
            v = np.asarray(vals, dtype=complex)
            out.append((CubicSpline(xs, v.real), CubicSpline(xs, v.imag)))
        return out

    def evaluate(self, m: int, x, deriv: int = 0) -> np.ndarray:
        """q_m^{(deriv)}(x), vectorized over x."""
        x = np.asarray(x, dtype=float)
        if m >= self._count() or self.kind is PotentialKind.ZERO:
            return np.zeros_like(x, dtype=complex)
        if self.kind is PotentialKind.POLYNOMIAL:
            c = np.asarray(self.coeffs[m], dtype=complex)
            if deriv:
                c = P.polyder(c, deriv) if len(c) > deriv else np.zeros(1, dtype=complex)
            return P.polyval(x, c)
        re, im = self._splines[m]
        return re(x, deriv) + 1j * im(x, deriv)

    def lowest_power(self, m: int, deriv: int = 0) -> Optional[int]:
        """Lowest power of x present in q_m^{(deriv)} for polynomial potentials; None if it vanishes."""
        if self.kind is not PotentialKind.POLYNOMIAL or m >= len(self.coeffs):
            return None
        for power, c in enumerate(self.coeffs[m]):
            if c != 0 and power >= deriv:
                return power - deriv
        return None

    def integrable_with_weight(self, m: int, exponent: float, length: float, deriv: int = 0) -> bool:
        """Whether q_m^{(deriv)}(x) x^exponent is integrable on (0, length]."""
        if self.is_zero(m):
            return True
        if self.kind is PotentialKind.POLYNOMIAL:
            low = self.lowest_power(m, deriv)
            return low is None or low + exponent > -1.0
        f = lambda x: abs(complex(self.evaluate(m, x, deriv))) * x ** exponent
        near, _ = integrate.quad(f, 1e-8 * length, 1e-4 * length, limit=200)
        far, _ = integrate.quad(f, 1e-4 * length, length, limit=200)
        return math.isfinite(near) and near <= 1e-2 * (1.0 + abs(far))

    def weighted_l1(self, m: int, theta: float, length: float) -> float:
        """Integral of |q_m| x^{min(theta - m, 0)} over (0, length], the weight of the Volterra bound."""
        if self.is_zero(m):
            return 0.0
        w = min(theta - m, 0.0)
        value, _ = integrate.quad(lambda x: abs(complex(self.evaluate(m, x))) * x ** w,
                                  0.0, min(length, 1.0), limit=200)
        if length > 1.0:
            tail, _ = integrate.quad(lambda x: abs(complex(self.evaluate(m, x))), 1.0, length, limit=200)
            value += tail
        return value


@dataclass(frozen=True)
class EdgeSpec:
    """One edge: order n_j, length l_j, coefficients nu_{0..n-2}, potential and boundary forms."""
    order: int
    length: float
    nu: Tuple[complex, ...]
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    gamma: Optional[Tuple[Tuple[complex, ...], ...]] = None
    index: Optional[int] = None

    def __post_init__(self):
        if self.order < 2:
            raise ModelError(f"edge {self.index}: order must be at least 2, got {self.order}.")
        if not self.length > 0:
            raise ModelError(f"edge {self.index}: length must be positive, got {self.length}.")
        object.__setattr__(self, "nu", tuple(complex(v) for v in self.nu))
        if len(self.nu) != self.order - 1:
            raise WrongCoefficientCount(
                f"edge {self.index}: expected {self.order - 1} nu coefficients, got {len(self.nu)}.")
        if self.gamma is None:
            identity = tuple(tuple(1.0 + 0j if a == b else 0j for b in range(self.order)) for a in range(self.order))
            object.__setattr__(self, "gamma", identity)
        gamma = tuple(tuple(complex(v) for v in row) for row in self.gamma)
        object.__setattr__(self, "gamma", gamma)
        if len(gamma) != self.order or any(len(row) != self.order for row in gamma):
            raise ModelError(f"edge {self.index}: gamma must be {self.order}x{self.order}.")
        for a in range(self.order):
            if any(gamma[a][b] != 0 for b in range(a + 1, self.order)):
                raise ModelError(f"edge {self.index}: gamma must be lower-triangular.")
            if gamma[a][a] == 0:
                raise GammaDiagonalZero(self.index, a)

    @property
    def gamma_matrix(self) -> np.ndarray:
        return np.array(self.gamma, dtype=complex)

    def cache_key(self) -> str:
        return repr((self.order, self.length, self.nu, self.potential, self.gamma))


def group_boundaries(orders: Sequence[int]) -> List[int]:
    """Group boundaries p_1 < ... < p_m (1-based last index of each run of equal orders)."""
    bounds = []
    for i, n in enumerate(orders):
        if i + 1 == len(orders) or orders[i + 1] != n:
            bounds.append(i + 1)
    return bounds


def check_structure(edges: Sequence[EdgeSpec], w: int) -> None:
    """Raise on the structural errors: order monotonicity and the w group boundary."""
    orders = [e.order for e in edges]
    if len(edges) < 2:
        raise ModelError("a star graph needs at least two edges.")
    for j in range(1, len(orders)):
        if orders[j] > orders[j - 1]:
            raise NonmonotoneOrders(
                f"edge orders must be non-increasing, edge {j + 1} has order {orders[j]} > {orders[j - 1]}.")
    if not 2 <= w <= len(edges):
        raise InvalidW(f"w={w} must lie in 2..{len(edges)}.")
    bounds = group_boundaries(orders)
    if w not in bounds:
        raise InvalidW(f"w={w} is not a group boundary; boundaries are {bounds}.")


@dataclass(frozen=True)
class StarGraph:
    """Edges with non-increasing orders and the target boundary vertex w."""
    edges: Tuple[EdgeSpec, ...]
    w: int

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        check_structure(self.edges, self.w)

    @property
    def p(self) -> int:
        return len(self.edges)

    @property
    def orders(self) -> List[int]:
        return [e.order for e in self.edges]

    def edge(self, j: int) -> EdgeSpec:
        """Edge e_j, 1-based."""
        return self.edges[j - 1]


@dataclass(frozen=True)
class SpectralPoint:
    """lambda together with rho, rho**n == lambda, arg rho in the sector (k0 pi/n, (k0+1) pi/n]."""
    lam: complex
    rho: complex
    sector: int
    n: int

    def __post_init__(self):
        if abs(self.rho ** self.n - self.lam) > 1e-12 * max(1.0, abs(self.lam)):
            raise ModelError(f"rho**{self.n} does not reproduce lambda={self.lam}.")
        if self.rho != 0 and not in_sector(self.rho, self.sector, self.n):
            raise SectorMismatch(f"arg rho={cmath.phase(self.rho):.6f} outside sector {self.sector}.")


@dataclass(frozen=True)
class SpectralGrid:
    kind: GridKind = GridKind.RAY
    theta: float = math.pi / 2
    t_min: float = 1.0
    t_max: float = 100.0
    count: int = 20
    points: Tuple[complex, ...] = ()
    sector: Optional[int] = None


def _sector_offset(rho: complex, k0: int, n: int) -> float:
    """Angle of rho measured from the lower edge k0*pi/n of sector k0, in [0, 2pi)."""
    return (cmath.phase(rho) - k0 * math.pi / n) % (2 * math.pi)


def in_sector(rho: complex, k0: int, n: int) -> bool:
    d = _sector_offset(rho, k0, n)
    return d <= math.pi / n + ARG_SLACK or d >= 2 * math.pi - ARG_SLACK


def default_sector(lam: complex, n: int) -> int:
    """Sector holding the principal n-th root of lambda."""
    arg = cmath.phase(lam) / n if lam != 0 else 0.0
    return (math.ceil(arg * n / math.pi - ARG_SLACK) - 1) % (2 * n)


def root_in_sector(lam: complex, n: int, k0: int) -> complex:
    """Principal n-th root of lambda rotated by powers of exp(2 pi i/n) into sector k0."""
    if lam == 0:
        return 0j
    base = abs(lam) ** (1.0 / n) * cmath.exp(1j * cmath.phase(lam) / n)
    candidates = [base * cmath.exp(2j * math.pi * m / n) for m in range(n)]
    # interior (half-open) membership first, the closure only as a fallback
    for rho in candidates:
        d = _sector_offset(rho, k0, n)
        if ARG_SLACK < d <= math.pi / n + ARG_SLACK:
            return rho
    for rho in candidates:
        if in_sector(rho, k0, n):
            return rho
    raise SectorMismatch(f"no {n}-th root of lambda={lam} lies in sector {k0}.")


def build_grid(spec: SpectralGrid, n: int) -> List[SpectralPoint]:
    """Spectral points of a grid, ordered by |lambda|, each with its sector-consistent rho."""
    if spec.kind is GridKind.RAY:
        if spec.count < 1:
            raise EmptyRange("grid count must be at least 1.")
        if spec.t_min < 0 or spec.t_max < spec.t_min:
            raise EmptyRange(f"invalid |lambda| range [{spec.t_min}, {spec.t_max}].")
        ts = np.linspace(spec.t_min, spec.t_max, spec.count) if spec.count > 1 else np.array([spec.t_min])
        lams = [complex(t * cmath.exp(1j * spec.theta)) for t in ts]
    else:
        if not spec.points:
            raise EmptyRange("list grid has no points.")
        lams = [complex(v) for v in spec.points]

    lams.sort(key=lambda v: (abs(v), cmath.phase(v)))
    for a, b in zip(lams, lams[1:]):
        if abs(a - b) <= 1e-14 * max(1.0, abs(a)):
            raise DuplicatePoint(f"grid point {a} appears twice.")

    points = []
    for lam in lams:
        k0 = spec.sector if spec.sector is not None else default_sector(lam, n)
        points.append(SpectralPoint(lam, root_in_sector(lam, n, k0), k0, n))
    logging.debug(f"Built grid of {len(points)} points for order {n}.")
    return points


@dataclass
class EdgeValidation:
    index: int
    order: int
    roots: Optional[Tuple[complex, ...]]
    roots_ok: bool
    integrable: bool
    message: str = ""

    @property
    def admissible(self) -> bool:
        return self.roots_ok and self.integrable


@dataclass
class ValidationReport:
    edges: List[EdgeValidation]

    @property
    def passes(self) -> bool:
        return all(e.admissible for e in self.edges)

    def failures(self) -> List[str]:
        return [f"edge {e.index}: {e.message}" for e in self.edges if not e.admissible]


def potential_admissible(edge: EdgeSpec, theta: float) -> bool:
    """The Volterra weight condition and the smoothness condition q_m^{(m)} x^theta in L."""
    q = edge.potential
    for m in range(edge.order - 1):
        if not q.integrable_with_weight(m, min(theta - m, 0.0), edge.length):
            return False
        if not q.integrable_with_weight(m, theta, edge.length, deriv=m):
            return False
    return True


def validate_graph(g: StarGraph) -> ValidationReport:
    """Per-edge admissibility of characteristic roots and potentials; structural errors raise."""
    from .errors import CharacteristicError
    from .singular_ode import build_char_poly, compute_char_roots

    check_structure(g.edges, g.w)
    results = []
    for j, edge in enumerate(g.edges, start=1):
        try:
            cd = compute_char_roots(build_char_poly(edge.nu, edge.order))
        except CharacteristicError as e:
            results.append(EdgeValidation(j, edge.order, None, False, False, f"{e.__class__.__name__}: {e}"))
            continue
        ok = potential_admissible(edge, cd.theta)
        message = "" if ok else f"potential not integrable with weight (theta={cd.theta:.6g})"
        results.append(EdgeValidation(j, edge.order, tuple(cd.mu), True, ok, message))
    return ValidationReport(results)
