# starweyl/recovery.py
"""
Parametric recovery of one edge potential from sampled Weyl-type data.

The potential is restricted to a small polynomial family and fitted with
scipy.optimize.least_squares inside the parameter box.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares

from .caching import BasisCache
from .config import WeylKind
from .errors import AmbiguousFit, ModelError, NonConvergence, PointError
from .graph_forward import WeylSample, boundary_M, edge_char, internal_m
from .model import PotentialSpec, StarGraph, potential_admissible

MAX_PARAMETERS = 5


@dataclass(frozen=True)
class PotentialFamily:
    """q_m(x) = sum over terms (m, power) of theta_i x^power on one edge, theta in a box."""
    edge: int
    terms: Tuple[Tuple[int, int], ...]
    box: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if not 1 <= len(self.terms) <= MAX_PARAMETERS:
            raise ModelError(f"a potential family has 1..{MAX_PARAMETERS} parameters, got {len(self.terms)}.")
        if len(self.box) != len(self.terms):
            raise ModelError("the parameter box needs one interval per term.")
        if any(lo >= hi for lo, hi in self.box):
            raise ModelError("parameter box intervals must have lo < hi.")

    @property
    def dim(self) -> int:
        return len(self.terms)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.box])

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def clip(self, params) -> np.ndarray:
        return np.clip(np.asarray(params, dtype=float), self.lower, self.upper)

    def potential(self, params: Sequence[float]) -> PotentialSpec:
        count = max(m for m, _ in self.terms) + 1
        rows = [[0j] * (max([p for mm, p in self.terms if mm == m], default=0) + 1) for m in range(count)]
        for (m, power), value in zip(self.terms, params):
            rows[m][power] += float(value)
        return PotentialSpec.polynomial(rows)

    def check_admissible(self, g: StarGraph) -> None:
        """Every box corner must satisfy the integrability conditions on the edge."""
        edge = g.edge(self.edge)
        theta = edge_char(edge).theta
        trial = dataclasses.replace(edge, potential=self.potential(np.ones(self.dim)))
        if not potential_admissible(trial, theta):
            raise ModelError(f"family on edge {self.edge} violates the weighted integrability conditions.")


@dataclass
class RecoveryResult:
    params: np.ndarray
    residual: float
    trace: List[float]
    iterations: int
    converged: bool
    ambiguous: bool = False
    restarts: List[Tuple[List[float], float]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "params": [float(v) for v in self.params],
            "residual": self.residual,
            "trace": self.trace,
            "iterations": self.iterations,
            "converged": self.converged,
            "ambiguous": self.ambiguous,
            "restarts": [{"params": p, "residual": r} for p, r in self.restarts],
        }


def _upper_entries(M: np.ndarray) -> np.ndarray:
    iu = np.triu_indices(M.shape[0], 1)
    return M[iu]


def weyl_residual_function(g: StarGraph, family: PotentialFamily, target: WeylSample,
                           cache: BasisCache) -> Callable[[np.ndarray], np.ndarray]:
    """params -> real residual vector of the model Weyl matrix against the target, relative per entry."""
    lams = [lam for lam, ok in zip(target.lams, target.ok) if ok]
    targets = [_upper_entries(target.values[i]) for i, ok in enumerate(target.ok) if ok]
    if not lams:
        raise NonConvergence("target Weyl data has no usable lambda points.")
    scales = [np.maximum(np.abs(t), 1.0) for t in targets]

    def fun(params: np.ndarray) -> np.ndarray:
        edge = dataclasses.replace(g.edge(family.edge), potential=family.potential(params))
        edges = list(g.edges)
        edges[family.edge - 1] = edge
        trial = dataclasses.replace(g, edges=tuple(edges))
        parts = []
        for lam, t, sc in zip(lams, targets, scales):
            try:
                if target.kind is WeylKind.INTERNAL:
                    model = internal_m(edge, cache.get(edge, lam).endpoint(), lam)
                else:
                    model, _ = boundary_M(trial, target.index, lam, cache)
            except PointError:
                # a pole of the model next to a sample counts as a large miss
                parts.append(np.full(2 * t.size, 1e3))
                continue
            d = (_upper_entries(model) - t) / sc
            parts.append(np.concatenate([d.real, d.imag]))
        return np.concatenate(parts)

    return fun


def fit_parameters(fun, x0: np.ndarray, family: PotentialFamily, max_nfev: Optional[int] = None,
                   tol: float = 1e-12) -> RecoveryResult:
    """Bounded trust-region least squares over the parameter box.

    The trace records the cost every time an evaluation improves on the best so far,
    so it never increases.
    """
    trace: List[float] = []
    best = {"x": None, "r": None}

    def tracked(params: np.ndarray) -> np.ndarray:
        r = fun(params)
        cost = float(r @ r)
        if not trace or cost < trace[-1]:
            trace.append(cost)
            best["x"], best["r"] = np.array(params, dtype=float), r
        return r

    res = least_squares(tracked, family.clip(x0), bounds=(family.lower, family.upper), x_scale="jac",
                        diff_step=1e-6, ftol=tol, xtol=tol, gtol=tol,
                        max_nfev=max_nfev or 60 * (family.dim + 1))
    logging.debug(f"least_squares on edge {family.edge}: {res.message} ({res.nfev} evaluations)")
    r = best["r"]
    rms = float(np.sqrt(float(r @ r) / max(1, r.size)))
    return RecoveryResult(best["x"], rms, trace, int(res.nfev), res.status > 0)


def recover_edge_potential(g: StarGraph, family: PotentialFamily, target: WeylSample,
                           cache: Optional[BasisCache] = None, start: Optional[Sequence[float]] = None,
                           restarts: int = 2, tol: float = 1e-7, seed: int = 0,
                           strict: bool = False) -> RecoveryResult:
    """Fit the family parameters to sampled M_s or m_j data."""
    cache = cache or BasisCache()
    family.check_admissible(g)
    fun = weyl_residual_function(g, family, target, cache)
    x0 = family.center() if start is None else np.asarray(start, dtype=float)
    best = fit_parameters(fun, x0, family)
    logging.info(f"Recovery on edge {family.edge}: residual {best.residual:.3g} after {best.iterations} iterations.")

    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        start_r = rng.uniform(family.lower, family.upper)
        other = fit_parameters(fun, start_r, family)
        best.restarts.append(([float(v) for v in other.params], other.residual))
        close_res = other.residual <= max(tol, 2 * best.residual)
        far = np.linalg.norm(other.params - best.params) > 1e-3 * (1 + np.linalg.norm(best.params))
        if close_res and far and best.residual <= tol:
            best.ambiguous = True
            logging.warning(f"Restart converged to {other.params} with residual {other.residual:.3g}; "
                            f"fit on edge {family.edge} is ambiguous.")
        elif other.residual < best.residual and not best.residual <= tol:
            other.restarts = best.restarts
            best = other
    if best.ambiguous and strict:
        raise AmbiguousFit(f"distinct parameter vectors fit edge {family.edge} equally well.")
    if best.residual > tol:
        raise NonConvergence(f"recovery on edge {family.edge} stalled at residual {best.residual:.3g} > {tol:g}.")
    return best
