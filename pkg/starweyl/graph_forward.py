# starweyl/graph_forward.py
"""
Forward problem on the star graph.

For a boundary vertex s and k < n_s the Weyl-type solution Psi_sk is expanded
edge by edge in the S-basis, psi_skj = sum_mu M_skjmu S_muj. The boundary
behaviour at x_j = 0 fixes which coefficients can be nonzero; the matching
conditions at the internal vertex (continuity of U_jnu for nu < k and the
generalized Kirchhoff sums for nu >= k) give a square system for the rest.
"""
import cmath
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from .caching import BasisCache
from .config import WeylKind
from .errors import DenominatorNearZero, IllConditioned, MissingWeylData, PointError, SeriesError, SingularAtLambda
from .model import EdgeSpec, StarGraph
from .singular_ode import CharData, char_data

ILL_CONDITIONED = 1e13


def edge_char(edge: EdgeSpec) -> CharData:
    """Roots xi_1j..xi_nj of delta_j, with theta_j."""
    return char_data(edge.nu, edge.order)


@dataclass(frozen=True)
class LinearForm:
    """U_jnu(y) = sum_{mu <= nu} gamma_jnumu y^(mu)(l_j)."""
    edge: int
    nu: int
    coeffs: Tuple[complex, ...]

    def __post_init__(self):
        if len(self.coeffs) != self.nu + 1:
            raise ValueError(f"U_{self.edge},{self.nu} needs {self.nu + 1} coefficients.")
        if self.coeffs[-1] == 0:
            raise ValueError(f"U_{self.edge},{self.nu} has a vanishing leading coefficient.")

    @classmethod
    def from_edge(cls, edge: EdgeSpec, j: int, nu: int) -> "LinearForm":
        return cls(j, nu, tuple(edge.gamma[nu][: nu + 1]))


def apply_form(form: LinearForm, derivs: Sequence[complex]) -> complex:
    """Apply U to the endpoint derivatives y(l), y'(l), ... of a solution."""
    return complex(sum(c * derivs[m] for m, c in enumerate(form.coeffs)))


def form_matrix(edge: EdgeSpec, S_end: np.ndarray) -> np.ndarray:
    """UF[nu, mu] = U_jnu(S_mu) from the endpoint table S_end[kappa, mu]."""
    return edge.gamma_matrix @ S_end


def lower_index(order: int, k: int) -> int:
    """First S-index allowed on an edge j != s by the boundary condition: <n_j-k-1>+2."""
    return max(0, order - k - 1) + 2


@dataclass
class WeylAssembly:
    """The linear system for Psi_sk at one lambda and its solution."""
    s: int
    k: int
    lam: complex
    unknowns: List[Tuple[int, int]]
    matrix: np.ndarray
    rhs: np.ndarray
    coeffs: Dict[Tuple[int, int], complex] = field(default_factory=dict)
    delta: complex = 0j
    condition: float = 0.0
    residual: float = 0.0

    def edge_coeffs(self, j: int, order: int) -> np.ndarray:
        """M_skj1..M_skjn as a vector."""
        return np.array([self.coeffs.get((j, mu), 0j) for mu in range(1, order + 1)])

    def psi_end(self, j: int, S_end: np.ndarray) -> np.ndarray:
        """psi_skj^(nu)(l_j) for nu = 0..n_j-1."""
        return S_end @ self.edge_coeffs(j, S_end.shape[1])


def _endpoints(g: StarGraph, cache: BasisCache, lam: complex) -> List[np.ndarray]:
    return [cache.get(edge, lam).endpoint() for edge in g.edges]


def _equations(g: StarGraph, s: int, k: int) -> List[Tuple[str, int, int]]:
    """Rows of the matching system: ("cont", nu, j) and ("kirch", nu, 0)."""
    rows = []
    for nu in range(k):
        for j in range(2, g.p + 1):
            if g.edge(j).order > nu + 1:
                rows.append(("cont", nu, j))
    for nu in range(k, g.edge(s).order):
        rows.append(("kirch", nu, 0))
    return rows


def weyl_unknowns(g: StarGraph, s: int, k: int) -> List[Tuple[int, int]]:
    """Free coefficients (j, mu) of Psi_sk after the boundary conditions."""
    out = [(s, mu) for mu in range(k + 1, g.edge(s).order + 1)]
    for j in range(1, g.p + 1):
        if j != s:
            n = g.edge(j).order
            out.extend((j, mu) for mu in range(lower_index(n, k), n + 1))
    return sorted(out)


def _assemble(g: StarGraph, s: int, k: int, UF: List[np.ndarray]
              ) -> Tuple[np.ndarray, np.ndarray, List[Tuple[int, int]]]:
    unknowns = weyl_unknowns(g, s, k)
    col = {u: i for i, u in enumerate(unknowns)}
    rows = _equations(g, s, k)
    A = np.zeros((len(rows), len(unknowns)), dtype=complex)
    b = np.zeros(len(rows), dtype=complex)

    def add(r: int, j: int, nu: int, sign: float):
        uf = UF[j - 1]
        for mu in range(1, g.edge(j).order + 1):
            if (j, mu) in col:
                A[r, col[(j, mu)]] += sign * uf[nu, mu - 1]
        if j == s:
            # fixed leading term S_ks of psi_sks
            b[r] -= sign * uf[nu, k - 1]

    for r, (kind, nu, j) in enumerate(rows):
        if kind == "cont":
            add(r, 1, nu, 1.0)
            add(r, j, nu, -1.0)
        else:
            for jj in range(1, g.p + 1):
                if g.edge(jj).order > nu:
                    add(r, jj, nu, 1.0)
    return A, b, unknowns


def hadamard_ratio(A: np.ndarray) -> Tuple[float, float]:
    """|det| over the product of row norms, and the condition number, after unit-norm column scaling."""
    cols = np.linalg.norm(A, axis=0)
    B = A / np.where(cols > 0, cols, 1.0)
    rows = np.linalg.norm(B, axis=1)
    if np.any(rows == 0):
        return 0.0, math.inf
    return float(abs(np.linalg.det(B)) / np.prod(rows)), float(np.linalg.cond(B))


def build_weyl_solution(g: StarGraph, s: int, k: int, lam: complex, cache: BasisCache,
                        endpoints: Optional[List[np.ndarray]] = None, singular_limit: float = 1e-10
                        ) -> WeylAssembly:
    """Solve the boundary and matching conditions for Psi_sk at lambda."""
    n_s = g.edge(s).order
    if not 1 <= k <= n_s - 1:
        raise ValueError(f"k must lie in 1..{n_s - 1}, got {k}.")
    ends = endpoints if endpoints is not None else _endpoints(g, cache, lam)
    UF = [form_matrix(e, S) for e, S in zip(g.edges, ends)]
    A, b, unknowns = _assemble(g, s, k, UF)
    if A.shape[0] != A.shape[1]:
        raise PointError(f"matching system for s={s}, k={k} is {A.shape[0]}x{A.shape[1]}.", lam)

    delta = complex(np.linalg.det(A))
    ratio, cond = hadamard_ratio(A)
    if ratio < singular_limit:
        raise SingularAtLambda(f"Weyl system for s={s}, k={k} is singular (scaled |det|={ratio:.3g}).", lam)
    if cond > ILL_CONDITIONED:
        raise IllConditioned(f"Weyl system for s={s}, k={k} has condition {cond:.3g}.", lam)
    x = np.linalg.solve(A, b)
    residual = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))

    coeffs = {(s, mu): (1.0 + 0j if mu == k else 0j) for mu in range(1, k + 1)}
    coeffs.update({u: complex(v) for u, v in zip(unknowns, x)})
    return WeylAssembly(s, k, lam, unknowns, A, b, coeffs, delta, cond, residual)


def matching_residuals(g: StarGraph, asm: WeylAssembly, endpoints: List[np.ndarray]) -> Tuple[float, float]:
    """Relative residuals of the continuity and Kirchhoff conditions for an assembled Psi_sk."""
    U = {}
    scale = 1e-300
    for j, (edge, S) in enumerate(zip(g.edges, endpoints), start=1):
        vals = form_matrix(edge, S) @ asm.edge_coeffs(j, edge.order)
        U[j] = vals
        scale = max(scale, float(np.max(np.abs(vals))))
    cont = 0.0
    for nu in range(asm.k):
        for j in range(2, g.p + 1):
            if g.edge(j).order > nu + 1:
                cont = max(cont, abs(U[1][nu] - U[j][nu]))
    kirch = 0.0
    for nu in range(asm.k, g.edge(asm.s).order):
        kirch = max(kirch, abs(sum(U[j][nu] for j in U if g.edge(j).order > nu)))
    return cont / scale, kirch / scale


def boundary_M(g: StarGraph, s: int, lam: complex, cache: BasisCache,
               endpoints: Optional[List[np.ndarray]] = None) -> Tuple[np.ndarray, List[WeylAssembly]]:
    """M_s(lambda): unit upper-triangular, row k from Psi_sk, last row e_{n_s}."""
    n_s = g.edge(s).order
    ends = endpoints if endpoints is not None else _endpoints(g, cache, lam)
    M = np.eye(n_s, dtype=complex)
    assemblies = []
    for k in range(1, n_s):
        asm = build_weyl_solution(g, s, k, lam, cache, ends)
        assemblies.append(asm)
        for mu in range(k + 1, n_s + 1):
            M[k - 1, mu - 1] = asm.coeffs[(s, mu)]
    return M, assemblies


def internal_m(edge: EdgeSpec, S_end: np.ndarray, lam: Optional[complex] = None) -> np.ndarray:
    """m_j(lambda) from phi_jk = sum_{mu > n-k} a_mu S_mu with phi^(nu-1)(l) = delta_knu, nu <= k."""
    n = edge.order
    m = np.eye(n, dtype=complex)
    for k in range(1, n + 1):
        cols = list(range(n - k, n))
        sub = S_end[:k][:, cols]
        rhs = np.zeros(k, dtype=complex)
        rhs[k - 1] = 1.0
        if hadamard_ratio(sub)[0] < 1e-12:
            raise SingularAtLambda(f"phi_{k} on edge {edge.index} is not determined.", lam)
        a = np.linalg.solve(sub, rhs)
        m[k - 1] = S_end[:, cols] @ a
    return m


def m_from_psi(psi: np.ndarray, order: int, lam: Optional[complex] = None, limit: float = 1e-12) -> np.ndarray:
    """m_j from the endpoint table psi[mu-1, nu] = psi_s,mu,j^(nu)(l_j), mu = 1..n_j-1, by ratios and Cramer's rule."""
    n = order
    m = np.eye(n, dtype=complex)
    if abs(psi[0, 0]) < limit * max(1.0, float(np.max(np.abs(psi[0])))):
        raise DenominatorNearZero("psi_s1j(l_j) vanishes.", lam)
    for nu in range(2, n + 1):
        m[0, nu - 1] = psi[0, nu - 1] / psi[0, 0]
    for k in range(2, n):
        rows = psi[:k]
        den_mat = rows[:, :k]
        den = np.linalg.det(den_mat)
        if hadamard_ratio(den_mat)[0] < limit:
            raise DenominatorNearZero(f"Wronskian-type denominator for k={k} vanishes.", lam)
        for nu in range(k + 1, n + 1):
            num = np.column_stack([rows[:, : k - 1], rows[:, nu - 1]])
            m[k - 1, nu - 1] = np.linalg.det(num) / den
    return m


@dataclass
class WeylSample:
    """One Weyl-type matrix (M_s or m_j) over a lambda grid, NaN where flagged."""
    kind: WeylKind
    index: int
    lams: np.ndarray
    values: np.ndarray
    flags: List[str]
    residuals: Optional[np.ndarray] = None
    conditions: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.values.shape[1]

    @property
    def ok(self) -> np.ndarray:
        return np.array([not f for f in self.flags])

    def flagged_fraction(self) -> float:
        return 1.0 - float(np.mean(self.ok)) if self.flags else 0.0

    def rows(self) -> List[Tuple[float, float, int, int, complex, str]]:
        """CSV rows (lambda_re, lambda_im, row, col, value, flag), 1-based row/col."""
        out = []
        for i, lam in enumerate(self.lams):
            for r in range(self.size):
                for c in range(self.size):
                    out.append((lam.real, lam.imag, r + 1, c + 1, self.values[i, r, c], self.flags[i]))
        return out

    @classmethod
    def from_rows(cls, kind: WeylKind, index: int, rows: Sequence[Tuple[float, float, int, int, complex, str]]
                  ) -> "WeylSample":
        pos: Dict[complex, int] = {}
        for re, im, *_ in rows:
            pos.setdefault(complex(re, im), len(pos))
        lam_keys = list(pos)
        size = max(r for _, _, r, _, _, _ in rows)
        values = np.full((len(lam_keys), size, size), np.nan, dtype=complex)
        flags = [""] * len(lam_keys)
        for re, im, r, c, v, flag in rows:
            i = pos[complex(re, im)]
            values[i, r - 1, c - 1] = v
            if flag:
                flags[i] = flag
        return cls(kind, index, np.array(lam_keys), values, flags)

    def at(self, lam: complex) -> np.ndarray:
        """Matrix at lambda: exact at grid points, cubic-spline in |lambda| along a ray otherwise."""
        hits = np.nonzero(np.abs(self.lams - lam) <= 1e-12 * max(1.0, abs(lam)))[0]
        if hits.size:
            i = int(hits[0])
            if self.flags[i]:
                raise MissingWeylData(f"{self.kind.value} matrix {self.index} is flagged at lambda={lam}: {self.flags[i]}")
            return self.values[i]
        good = self.ok
        lams = self.lams[good]
        phases = np.angle(lams)
        if lams.size < 4 or np.ptp(phases) > 1e-9 or abs(cmath.phase(lam) - phases[0]) > 1e-9:
            raise MissingWeylData(f"{self.kind.value} matrix {self.index} has no data near lambda={lam}.")
        t = np.abs(lams)
        if not t[0] <= abs(lam) <= t[-1]:
            raise MissingWeylData(f"lambda={lam} outside the sampled range of {self.kind.value} matrix {self.index}.")
        flat = self.values[good].reshape(len(t), -1)
        re, im = CubicSpline(t, flat.real), CubicSpline(t, flat.imag)
        return (re(abs(lam)) + 1j * im(abs(lam))).reshape(self.size, self.size)


@dataclass
class ForwardPoint:
    """Everything computed at one lambda: all M_s, all m_j, diagnostics, and flags."""
    lam: complex
    M: Dict[int, np.ndarray] = field(default_factory=dict)
    m: Dict[int, np.ndarray] = field(default_factory=dict)
    flags: Dict[str, str] = field(default_factory=dict)
    residual: float = 0.0
    condition: float = 0.0


def forward_point(g: StarGraph, lam: complex, cache: BasisCache) -> ForwardPoint:
    """M_s for every s and m_j for every j at one lambda; per-matrix failures are flagged."""
    point = ForwardPoint(lam)
    try:
        ends = _endpoints(g, cache, lam)
    except Exception as e:
        logging.warning(f"S-basis failed at lambda={lam:.6g}: {e}")
        for s in range(1, g.p + 1):
            point.flags[f"M{s}"] = point.flags[f"m{s}"] = e.__class__.__name__
        return point
    for s in range(1, g.p + 1):
        try:
            M, asms = boundary_M(g, s, lam, cache, ends)
            point.M[s] = M
            for asm in asms:
                cont, kirch = matching_residuals(g, asm, ends)
                point.residual = max(point.residual, asm.residual, cont, kirch)
                point.condition = max(point.condition, asm.condition)
        except PointError as e:
            logging.warning(f"Flagged M_{s}: {e}")
            point.flags[f"M{s}"] = e.__class__.__name__
        try:
            point.m[s] = internal_m(g.edge(s), ends[s - 1], lam)
        except PointError as e:
            logging.warning(f"Flagged m_{s}: {e}")
            point.flags[f"m{s}"] = e.__class__.__name__
    return point


def collect_samples(g: StarGraph, points: Sequence[ForwardPoint]) -> Tuple[Dict[int, WeylSample], Dict[int, WeylSample]]:
    """Turn per-lambda results into one WeylSample per M_s and per m_j."""
    lams = np.array([p.lam for p in points])
    M_out, m_out = {}, {}
    for s in range(1, g.p + 1):
        n = g.edge(s).order
        for kind, store, key, src in ((WeylKind.BOUNDARY, M_out, "M", "M"), (WeylKind.INTERNAL, m_out, "m", "m")):
            values = np.full((len(points), n, n), np.nan, dtype=complex)
            flags = []
            for i, p in enumerate(points):
                mats = p.M if src == "M" else p.m
                if s in mats:
                    values[i] = mats[s]
                    flags.append("")
                else:
                    flags.append(p.flags.get(f"{key}{s}", "missing"))
            residuals = np.array([p.residual for p in points])
            conditions = np.array([p.condition for p in points])
            store[s] = WeylSample(kind, s, lams, values, flags, residuals, conditions)
    return M_out, m_out


def weyl_matrix_M(g: StarGraph, s: int, lams: Sequence[complex], cache: BasisCache) -> WeylSample:
    """M_s over a grid; points where the system is singular are flagged."""
    n = g.edge(s).order
    values = np.full((len(lams), n, n), np.nan, dtype=complex)
    flags, res, cond = [], [], []
    for i, lam in enumerate(lams):
        try:
            ends = _endpoints(g, cache, lam)
            M, asms = boundary_M(g, s, lam, cache, ends)
            values[i] = M
            flags.append("")
            res.append(max(max(a.residual, *matching_residuals(g, a, ends)) for a in asms))
            cond.append(max(a.condition for a in asms))
        except (PointError, SeriesError) as e:
            logging.warning(f"Flagged M_{s}: {e}")
            flags.append(e.__class__.__name__)
            res.append(np.nan)
            cond.append(np.nan)
    return WeylSample(WeylKind.BOUNDARY, s, np.asarray(lams, dtype=complex), values, flags,
                      np.array(res), np.array(cond))


def weyl_matrix_m(g: StarGraph, j: int, lams: Sequence[complex], cache: BasisCache) -> WeylSample:
    """m_j over a grid, computed on edge e_j alone."""
    edge = g.edge(j)
    n = edge.order
    values = np.full((len(lams), n, n), np.nan, dtype=complex)
    flags = []
    for i, lam in enumerate(lams):
        try:
            values[i] = internal_m(edge, cache.get(edge, lam).endpoint(), lam)
            flags.append("")
        except (PointError, SeriesError) as e:
            logging.warning(f"Flagged m_{j}: {e}")
            flags.append(e.__class__.__name__)
    return WeylSample(WeylKind.INTERNAL, j, np.asarray(lams, dtype=complex), values, flags)


def boundary_asymptotic_ratio(g: StarGraph, asm: WeylAssembly, cache: BasisCache, x: float) -> complex:
    """psi_sks(x) x^(-xi_ks) near x = 0, which tends to c_ks0."""
    edge = g.edge(asm.s)
    basis = cache.get(edge, asm.lam)
    S = basis.evaluate(x)[0]
    xi = basis.cd.mu[asm.k - 1]
    return complex(S @ asm.edge_coeffs(asm.s, edge.order) * cmath.exp(-xi * math.log(x)))


def cauchy_defect(delta: Callable[[complex], complex], center: complex, radius: float, count: int = 64) -> float:
    """|contour integral of delta| over the circle, relative to the integral of |delta|; ~0 for entire delta."""
    t = 2 * np.pi * np.arange(count) / count
    pts = center + radius * np.exp(1j * t)
    vals = np.array([delta(p) for p in pts])
    dl = 1j * radius * np.exp(1j * t)
    return float(abs(np.sum(vals * dl)) / np.sum(np.abs(vals * dl)))


def delta_sk(g: StarGraph, s: int, k: int, cache: BasisCache) -> Callable[[complex], complex]:
    """lambda -> Delta_sk(lambda), the determinant of the matching system (no singularity check)."""

    def f(lam: complex) -> complex:
        ends = _endpoints(g, cache, lam)
        A, _, _ = _assemble(g, s, k, [form_matrix(e, S) for e, S in zip(g.edges, ends)])
        return complex(np.linalg.det(A))

    return f


def numerator_skmu(g: StarGraph, s: int, k: int, mu: int, cache: BasisCache) -> Callable[[complex], complex]:
    """lambda -> Delta_sk(lambda) M_skmu(lambda), the Cramer numerator."""

    def f(lam: complex) -> complex:
        ends = _endpoints(g, cache, lam)
        A, b, unknowns = _assemble(g, s, k, [form_matrix(e, S) for e, S in zip(g.edges, ends)])
        A = A.copy()
        A[:, unknowns.index((s, mu))] = b
        return complex(np.linalg.det(A))

    return f


def psi_endpoint_table(g: StarGraph, s: int, j: int, lam: complex, cache: BasisCache,
                       endpoints: Optional[List[np.ndarray]] = None) -> np.ndarray:
    """psi[k-1, nu] = psi_skj^(nu)(l_j) for k = 1..n_j-1, the input of m_from_psi."""
    n_j = g.edge(j).order
    if g.edge(s).order < n_j:
        raise ValueError(f"edge {s} has lower order than edge {j}.")
    ends = endpoints if endpoints is not None else _endpoints(g, cache, lam)
    return np.array([build_weyl_solution(g, s, k, lam, cache, ends).psi_end(j, ends[j - 1])
                     for k in range(1, n_j)])
