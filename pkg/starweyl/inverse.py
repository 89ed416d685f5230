# starweyl/inverse.py
"""
Reduction of the graph inverse problem to the edge p_N = w.

Given M_s for one boundary vertex s of the first group and the potentials on
every edge other than p_N, the endpoint values psi_skp_N^(nu)(l_p_N) are
recovered in four steps (boundary values from M_s, transfer through the
continuity conditions, the sigma_skj systems, Kirchhoff sums), and m_p_N
follows by ratios and Cramer's rule.

Tables are keyed by (k, j, nu) for the fixed s; k and j are 1-based, nu is a
derivative order.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .caching import BasisCache
from .config import WeylKind
from .errors import (
    FormInversionFailure, IncompleteTable, InvalidW, MissingWeylData, PointError, RangeMismatch, SigmaSingular,
)
from .graph_forward import LinearForm, WeylSample, apply_form, internal_m, lower_index, m_from_psi
from .interfaces import WeylSource
from .model import EdgeSpec, StarGraph, check_structure, group_boundaries

Key = Tuple[int, int, int]
MSource = Union[WeylSource, Callable[[complex], np.ndarray]]


@dataclass(frozen=True)
class GroupTable:
    """Distinct orders omega_1 > ... > omega_m, boundaries p_0 = 0 < p_1 < ... < p_m = p, and p_N = w."""
    omegas: Tuple[int, ...]
    bounds: Tuple[int, ...]
    N: int

    @property
    def m(self) -> int:
        return len(self.omegas)

    def omega(self, i: int) -> int:
        """omega_i for i = 1..m+1, with omega_{m+1} = 1."""
        return self.omegas[i - 1] if i <= self.m else 1

    def p(self, i: int) -> int:
        return self.bounds[i]

    @property
    def pN(self) -> int:
        return self.bounds[self.N]

    def group_of(self, j: int) -> int:
        for i in range(1, self.m + 1):
            if j <= self.bounds[i]:
                return i
        raise IndexError(f"edge {j} outside 1..{self.bounds[-1]}.")

    def admissible_s(self) -> range:
        """Boundary vertices the reduction may start from."""
        return range(1, self.p(1) + 1) if self.N > 1 else range(1, self.p(1))


def group_edges(g: StarGraph) -> GroupTable:
    check_structure(g.edges, g.w)
    orders = g.orders
    bounds = group_boundaries(orders)
    omegas = tuple(orders[b - 1] for b in bounds)
    if g.w not in bounds:
        raise InvalidW(f"w={g.w} is not a group boundary; boundaries are {bounds}.")
    return GroupTable(omegas, (0,) + tuple(bounds), bounds.index(g.w) + 1)


# --- index enumerations ---------------------------------------------------------

def transfer_indices(gt: GroupTable) -> List[Key]:
    """(k, j, nu) reached through the continuity conditions, enumerated over xi, k, l, j, nu."""
    out: Set[Key] = set()
    for xi in range(gt.N, gt.m + 1):
        for k in range(gt.omega(xi + 1), gt.omega(xi)):
            for l in range(xi, gt.m + 1):
                top = min(k - 1, gt.omega(l) - 2)
                for j in range(1, gt.p(l) + 1):
                    for nu in range(gt.omega(l + 1) - 1, top + 1):
                        out.add((k, j, nu))
    return sorted(out)


@dataclass(frozen=True)
class SigmaIndex:
    """One sigma_skj system: unknown S-indices mus, equations nus."""
    k: int
    l: int
    j: int
    mus: Tuple[int, ...]
    nus: Tuple[int, ...]


def sigma_indices(gt: GroupTable, s: int) -> List[SigmaIndex]:
    out = {}
    for xi in range(gt.N, gt.m + 1):
        for k in range(gt.omega(xi + 1), gt.omega(xi)):
            for l in range(1, gt.m + 1):
                w = gt.omega(l)
                for j in range(gt.p(l - 1) + 1, gt.p(l) + 1):
                    if j in (gt.pN, s):
                        continue
                    mus = tuple(range(max(2, w - k + 1), w + 1))
                    nus = tuple(range(0, min(k - 1, w - 2) + 1))
                    out[(k, j)] = SigmaIndex(k, l, j, mus, nus)
    return [out[key] for key in sorted(out)]


@dataclass
class IndexAudit:
    missing_transfer: List[Key] = field(default_factory=list)
    extra_transfer: List[Key] = field(default_factory=list)
    nonsquare: List[Tuple[int, int]] = field(default_factory=list)
    unknown_mismatch: List[Tuple[int, int]] = field(default_factory=list)
    uncovered: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.missing_transfer or self.extra_transfer or self.nonsquare
                    or self.unknown_mismatch or self.uncovered)


def audit_indices(g: StarGraph, gt: GroupTable, s: int) -> IndexAudit:
    """Compare the enumerated ranges with the unknowns left free by the boundary conditions."""
    audit = IndexAudit()
    top_k = gt.omega(gt.N) - 1
    expected = {(k, j, nu) for k in range(1, top_k + 1) for j in range(1, g.p + 1)
                for nu in range(0, min(k - 1, g.edge(j).order - 2) + 1)}
    got = set(transfer_indices(gt))
    audit.missing_transfer = sorted(expected - got)
    audit.extra_transfer = sorted(got - expected)
    seen = set()
    for sig in sigma_indices(gt, s):
        seen.add((sig.k, sig.j))
        if len(sig.mus) != len(sig.nus):
            audit.nonsquare.append((sig.k, sig.j))
        n = g.edge(sig.j).order
        if sig.mus != tuple(range(lower_index(n, sig.k), n + 1)):
            audit.unknown_mismatch.append((sig.k, sig.j))
    for k in range(1, top_k + 1):
        for j in range(1, g.p + 1):
            if j not in (s, gt.pN) and (k, j) not in seen:
                audit.uncovered.append((k, j))
    return audit


# --- the four steps ---------------------------------------------------------------

class PsiTable:
    """psi_skj^(nu)(l_j) for a fixed s, with the step that produced each entry."""

    def __init__(self, s: int):
        self.s = s
        self._values: Dict[Key, complex] = {}
        self._source: Dict[Key, str] = {}

    def __contains__(self, key: Key) -> bool:
        return key in self._values

    def __getitem__(self, key: Key) -> complex:
        try:
            return self._values[key]
        except KeyError:
            k, j, nu = key
            raise IncompleteTable(f"psi_{self.s},{k},{j}^({nu}) has not been computed.") from None

    def set(self, key: Key, value: complex, source: str) -> None:
        self._values[key] = complex(value)
        self._source[key] = source

    def source(self, key: Key) -> str:
        return self._source[key]

    def derivs(self, k: int, j: int, count: int) -> np.ndarray:
        return np.array([self[(k, j, nu)] for nu in range(count)])

    def keys(self) -> List[Key]:
        return sorted(self._values)


def _form_value(edge: EdgeSpec, nu: int, derivs: Sequence[complex]) -> complex:
    return apply_form(LinearForm.from_edge(edge, edge.index, nu), derivs)


def _invert_form(edge: EdgeSpec, nu: int, value: complex, lower: Sequence[complex]) -> complex:
    """y^(nu)(l) from U_nu(y) and y(l)..y^(nu-1)(l), using the triangular form."""
    lead = edge.gamma[nu][nu]
    if abs(lead) < 1e-14:
        raise FormInversionFailure(f"edge {edge.index}: gamma[{nu}][{nu}] is numerically zero.")
    rest = sum(edge.gamma[nu][m] * lower[m] for m in range(nu))
    return complex((value - rest) / lead)


def step1_boundary_values(M: np.ndarray, S_end: np.ndarray, gt: GroupTable, table: PsiTable) -> None:
    """psi_sks^(nu)(l_s) = S_ks^(nu) + sum_{mu>k} M_skmu S_mus^(nu), k < omega_N, nu < omega_1."""
    if np.any(~np.isfinite(M)):
        raise MissingWeylData(f"M_{table.s} holds no finite value at this lambda.")
    for k in range(1, gt.omega(gt.N)):
        vals = S_end @ M[k - 1]
        for nu in range(gt.omega(1)):
            table.set((k, table.s, nu), vals[nu], "boundary")


def step2_propagate_matching(g: StarGraph, gt: GroupTable, table: PsiTable) -> None:
    """Continuity U_jnu(psi_skj) = U_snu(psi_sks) for nu < k turned into endpoint derivatives."""
    s = table.s
    edge_s = g.edge(s)
    for k, j, nu in transfer_indices(gt):
        if j == s:
            continue
        common = _form_value(edge_s, nu, table.derivs(k, s, nu + 1))
        lower = [table[(k, j, m)] for m in range(nu)]
        table.set((k, j, nu), _invert_form(g.edge(j), nu, common, lower), "transfer")


def step3_solve_sigma(gt: GroupTable, ends: Dict[int, np.ndarray], table: PsiTable, lam: complex,
                      cond_limit: float = 1e10) -> Dict[Tuple[int, int], float]:
    """Solve each sigma_skj for M_skjmu and extend psi_skj to all derivative orders."""
    conds = {}
    for sig in sigma_indices(gt, table.s):
        if len(sig.mus) != len(sig.nus):
            raise RangeMismatch(f"sigma_{table.s},{sig.k},{sig.j} is {len(sig.nus)}x{len(sig.mus)}.")
        S = ends[sig.j]
        A = S[list(sig.nus)][:, [mu - 1 for mu in sig.mus]]
        rhs = np.array([table[(sig.k, sig.j, nu)] for nu in sig.nus])
        cond = float(np.linalg.cond(A))
        conds[(sig.k, sig.j)] = cond
        if cond > cond_limit:
            raise SigmaSingular(f"sigma_{table.s},{sig.k},{sig.j} has condition {cond:.3g}.", lam)
        coef = np.linalg.solve(A, rhs)
        full = S[:, [mu - 1 for mu in sig.mus]] @ coef
        for nu in range(gt.omega(sig.l)):
            table.set((sig.k, sig.j, nu), full[nu], "sigma")
    return conds


def step4_kirchhoff(g: StarGraph, gt: GroupTable, table: PsiTable) -> None:
    """Kirchhoff sums give U_pN,nu(psi_skpN) for nu >= k, then the endpoint derivatives on p_N."""
    pN = gt.pN
    edge_N = g.edge(pN)
    for k in range(1, gt.omega(gt.N)):
        for nu in range(k, gt.omega(gt.N)):
            total = 0j
            for j in range(1, g.p + 1):
                edge = g.edge(j)
                if j == pN or edge.order <= nu:
                    continue
                total += _form_value(edge, nu, table.derivs(k, j, nu + 1))
            lower = [table[(k, pN, m)] for m in range(nu)]
            table.set((k, pN, nu), _invert_form(edge_N, nu, -total, lower), "kirchhoff")


def reconstruct_m(table: PsiTable, gt: GroupTable, lam: Optional[complex] = None) -> np.ndarray:
    """m_pN from psi_s,mu,pN^(nu)(l_pN) via the ratio and determinant formulas."""
    n = gt.omega(gt.N)
    psi = np.array([table.derivs(k, gt.pN, n) for k in range(1, n)])
    return m_from_psi(psi, n, lam)


def entrywise_deviation(a: np.ndarray, b: np.ndarray, zero_rtol: float = 1e-12) -> float:
    """Relative deviation on nonzero entries of b, absolute on its zeros.

    Entries of b below zero_rtol * max|b| count as zeros, so rounding residue in a
    structurally zero entry is not used as a denominator.
    """
    diff = np.abs(a - b)
    mag = np.abs(b)
    nz = mag > zero_rtol * mag.max(initial=0.0)
    rel = diff[nz] / np.abs(b[nz])
    return float(max(rel.max(initial=0.0), diff[~nz].max(initial=0.0)))


@dataclass
class ReductionPoint:
    lam: complex
    m: Optional[np.ndarray] = None
    direct: Optional[np.ndarray] = None
    residual: float = float("nan")
    sigma_conditions: Dict[Tuple[int, int], float] = field(default_factory=dict)
    table: Optional[PsiTable] = None
    flag: str = ""


@dataclass
class ReductionReport:
    s: int
    groups: GroupTable
    points: List[ReductionPoint]
    tol: float = 1e-6

    @property
    def flagged_fraction(self) -> float:
        return sum(1 for p in self.points if p.flag) / max(1, len(self.points))

    @property
    def max_residual(self) -> float:
        vals = [p.residual for p in self.points if not p.flag and np.isfinite(p.residual)]
        return max(vals) if vals else float("nan")

    @property
    def pass_fraction(self) -> float:
        good = [p for p in self.points if not p.flag and p.residual <= self.tol]
        return len(good) / max(1, len(self.points))

    def sample(self) -> WeylSample:
        n = self.groups.omega(self.groups.N)
        values = np.full((len(self.points), n, n), np.nan, dtype=complex)
        for i, p in enumerate(self.points):
            if p.m is not None:
                values[i] = p.m
        return WeylSample(WeylKind.INTERNAL, self.groups.pN, np.array([p.lam for p in self.points]), values,
                          [p.flag for p in self.points], np.array([p.residual for p in self.points]))

    def summary(self) -> dict:
        return {
            "s": self.s,
            "p_N": self.groups.pN,
            "omega": list(self.groups.omegas),
            "points": len(self.points),
            "flagged_fraction": self.flagged_fraction,
            "max_residual": self.max_residual,
            "pass_fraction": self.pass_fraction,
            "per_lambda": [
                {"lambda": [p.lam.real, p.lam.imag], "residual": p.residual, "flag": p.flag,
                 "sigma_condition_max": max(p.sigma_conditions.values(), default=0.0)}
                for p in self.points
            ],
        }


def _m_at(source: MSource, lam: complex) -> np.ndarray:
    return source.at(lam) if isinstance(source, WeylSource) else np.asarray(source(lam))


def reduce_point(g: StarGraph, gt: GroupTable, s: int, M: np.ndarray, ends: Dict[int, np.ndarray],
                 lam: complex) -> ReductionPoint:
    """Steps 1-4 and the reconstruction of m_pN at one lambda."""
    table = PsiTable(s)
    step1_boundary_values(M, ends[s], gt, table)
    step2_propagate_matching(g, gt, table)
    conds = step3_solve_sigma(gt, ends, table, lam)
    step4_kirchhoff(g, gt, table)
    m = reconstruct_m(table, gt, lam)
    return ReductionPoint(lam, m, sigma_conditions=conds, table=table)


def run_reduction(g: StarGraph, M_sources: Dict[int, MSource], lams: Sequence[complex], cache: BasisCache,
                   s: Optional[int] = None, reference: bool = True, tol: float = 1e-6) -> ReductionReport:
    """Reconstruct m_pN over a grid from M_s and the potentials on the edges other than p_N."""
    gt = group_edges(g)
    allowed = gt.admissible_s()
    s = allowed[0] if s is None else s
    if s not in allowed:
        raise ValueError(f"s={s} is outside the admissible range {list(allowed)}.")
    if s not in M_sources:
        raise MissingWeylData(f"no Weyl-type matrix M_{s} supplied.")
    audit = audit_indices(g, gt, s)
    if not audit.ok:
        raise RangeMismatch(f"index audit failed for s={s}: {audit}")

    points = []
    for lam in lams:
        try:
            M = _m_at(M_sources[s], lam)
            ends = {j: cache.get(g.edge(j), lam).endpoint() for j in range(1, g.p + 1) if j != gt.pN}
            point = reduce_point(g, gt, s, M, ends, lam)
        except (PointError, MissingWeylData) as e:
            logging.warning(f"Reduction flagged at lambda={lam:.6g}: {e}")
            points.append(ReductionPoint(lam, flag=e.__class__.__name__))
            continue
        if reference:
            edge = g.edge(gt.pN)
            try:
                point.direct = internal_m(edge, cache.get(edge, lam).endpoint(), lam)
                point.residual = entrywise_deviation(point.m, point.direct)
            except PointError as e:
                point.flag = f"reference {e.__class__.__name__}"
        points.append(point)
    report = ReductionReport(s, gt, points, tol)
    logging.info(f"Reduction from s={s}: max residual {report.max_residual:.3g}, "
                 f"flagged {report.flagged_fraction:.0%}.")
    return report


def s_independence(g: StarGraph, M_sources: Dict[int, MSource], lams: Sequence[complex],
                   cache: BasisCache) -> Tuple[float, Dict[int, ReductionReport]]:
    """Largest deviation between reconstructions started from different admissible s."""
    gt = group_edges(g)
    reports = {s: run_reduction(g, M_sources, lams, cache, s=s, reference=False)
               for s in gt.admissible_s() if s in M_sources}
    worst = 0.0
    items = list(reports.values())
    for other in items[1:]:
        for a, b in zip(items[0].points, other.points):
            if a.m is not None and b.m is not None:
                worst = max(worst, entrywise_deviation(b.m, a.m))
    return worst, reports
