# starweyl/commands.py
"""
The pipelines behind the CLI commands.

Every command computes its full result before the first report is written,
so a failure leaves no report behind. Reports go through the injected
file_ops object; progress bars through the injected progress class.
"""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .caching import BasisCache
from .config import RunConfig, WeylKind
from .configio import ProblemConfig, encode_complex, encode_potential
from .errors import CharacteristicError, ConfigError, InvariantViolation, ModelError, PointError
from .graph_forward import (
    cauchy_defect, collect_samples, delta_sk, forward_point, m_from_psi, numerator_skmu, psi_endpoint_table,
    weyl_matrix_M, weyl_matrix_m,
)
from .interfaces import CheckResult, ProgressReporter, VerifyCase
from .inverse import audit_indices, entrywise_deviation, group_edges, run_reduction, s_independence
from .model import PotentialSpec, StarGraph, ValidationReport, build_grid, validate_graph
from .recovery import PotentialFamily, recover_edge_potential
from .singular_ode import char_data
from .verification import GrowthBoundCheck, RotationCheck, StokesCheck, VerificationService


def _lams(problem: ProblemConfig) -> List[complex]:
    return [pt.lam for pt in build_grid(problem.grid, problem.graph.edge(1).order)]


def _ensure_valid(g: StarGraph) -> ValidationReport:
    report = validate_graph(g)
    if not report.passes:
        raise ModelError("graph rejected: " + "; ".join(report.failures()))
    return report


def sweep(fn: Callable[[Any], Any], items: Sequence[Any], workers: int,
          progress_cls: Optional[Callable[[int, str], ProgressReporter]] = None,
          description: str = "Sweep") -> List[Any]:
    """fn over items on a thread pool; results keep the input order."""
    progress = progress_cls(len(items), description) if progress_cls else None
    results: List[Any] = [None] * len(items)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(fn, item): i for i, item in enumerate(items)}
        for fut in as_completed(futures):
            results[futures[fut]] = fut.result()
            if progress:
                progress.update(1)
    if progress:
        progress.finish()
    return results


def _graph_summary(g: StarGraph, validation: ValidationReport) -> Dict[str, Any]:
    return {
        "p": g.p,
        "w": g.w,
        "orders": g.orders,
        "edges": [
            {"order": e.order, "length": e.length, "nu": [encode_complex(v) for v in e.nu],
             "potential": encode_potential(e.potential),
             "roots": [encode_complex(r) for r in (v.roots or ())]}
            for e, v in zip(g.edges, validation.edges)
        ],
    }


def _relation_checks(g: StarGraph, lams: Sequence[complex], m_out, cache: BasisCache, limit: int = 3) -> Dict[str, Any]:
    """m_j from Psi_s endpoint data against the direct m_j at a few unflagged points."""
    out = {}
    for j in range(1, g.p + 1):
        sources = [s for s in range(1, g.p + 1) if s != j and g.edge(s).order >= g.edge(j).order]
        if not sources:
            continue
        s = sources[0]
        worst, used = 0.0, 0
        for i, lam in enumerate(lams):
            if used == limit or m_out[j].flags[i]:
                continue
            try:
                via = m_from_psi(psi_endpoint_table(g, s, j, lam, cache), g.edge(j).order, lam)
            except PointError as e:
                logging.debug(f"Skipping lambda={lam:.6g} for the m_{j} relation check: {e}")
                continue
            worst = max(worst, entrywise_deviation(via, m_out[j].values[i]))
            used += 1
        out[f"m_{j}"] = {"s": s, "points": used, "max_deviation": worst}
    return out


def _entirety(g: StarGraph, center: complex, cache: BasisCache, radius: float = 0.5) -> Dict[str, float]:
    n1 = g.edge(1).order
    return {
        "Delta_11": cauchy_defect(delta_sk(g, 1, 1, cache), center, radius, 32),
        "Delta_11_M_12": cauchy_defect(numerator_skmu(g, 1, 1, 2, cache), center, radius, 32) if n1 >= 2 else 0.0,
    }


def cmd_forward(run: RunConfig, problem: ProblemConfig, file_ops, progress_cls=None) -> Dict[str, str]:
    """M_s for every s and m_j for every j over the grid, with residual and condition summaries."""
    g = problem.graph
    validation = _ensure_valid(g)
    lams = _lams(problem)
    cache = BasisCache(problem.volterra, problem.tol)
    logging.info(f"Forward sweep over {len(lams)} lambda points with {run.workers} worker(s)...")
    points = sweep(lambda lam: forward_point(g, lam, cache), lams, run.workers, progress_cls, "Forward sweep")
    M_out, m_out = collect_samples(g, points)

    matrices = {}
    for prefix, store in (("M", M_out), ("m", m_out)):
        for idx, sample in store.items():
            ok = sample.ok
            matrices[f"{prefix}_{idx}"] = {
                "flagged_fraction": sample.flagged_fraction(),
                "max_residual": float(np.max(sample.residuals[ok])) if ok.any() else None,
                "max_condition": float(np.max(sample.conditions[ok])) if ok.any() else None,
            }
    report = {
        "graph": _graph_summary(g, validation),
        "grid": [encode_complex(lam) for lam in lams],
        "matrices": matrices,
        "max_residual": max((p.residual for p in points), default=0.0),
        "points": [{"lambda": encode_complex(p.lam), "residual": p.residual, "condition": p.condition,
                    "flags": dict(sorted(p.flags.items()))} for p in points],
        "psi_relations": _relation_checks(g, lams, m_out, cache),
        "entirety": _entirety(g, lams[0], cache),
    }

    written = {}
    for s, sample in M_out.items():
        written[f"M_{s}.csv"] = file_ops.write_weyl_csv(f"M_{s}.csv", sample)
    for j, sample in m_out.items():
        written[f"m_{j}.csv"] = file_ops.write_weyl_csv(f"m_{j}.csv", sample)
    written["forward_report.json"] = file_ops.write_json("forward_report.json", report)
    logging.info(f"✅ Forward reports written to {file_ops.get_output_dir()}")
    return written


def cmd_reduce(run: RunConfig, problem: ProblemConfig, file_ops, progress_cls=None) -> Dict[str, str]:
    """Reconstruct m_pN from the stored M_s files and report it against the direct computation."""
    g = problem.graph
    _ensure_valid(g)
    gt = group_edges(g)
    allowed = list(gt.admissible_s())
    s = problem.reduce_s if problem.reduce_s is not None else allowed[0]
    if s not in allowed:
        raise ConfigError(f"reduce.s={s} is not admissible; choose from {allowed}.")
    sources = {}
    for t in allowed:
        try:
            sources[t] = file_ops.read_weyl_csv(f"M_{t}.csv", WeylKind.BOUNDARY, t)
        except ConfigError:
            if t == s:
                raise ConfigError(f"missing Weyl data M_{s} (M_{s}.csv) for the reduction from s={s}.") from None
    lams = [complex(v) for v in sources[s].lams]
    cache = BasisCache(problem.volterra, problem.tol)
    sweep(lambda lam: [cache.get(e, lam) for e in g.edges], lams, run.workers, progress_cls, "S-bases")

    report = run_reduction(g, {s: sources[s]}, lams, cache, s=s, reference=True, tol=problem.tol.roundtrip)
    summary = report.summary()
    summary["index_audit"] = dataclasses.asdict(audit_indices(g, gt, s))
    summary["admissible_s"] = allowed
    if len(sources) > 1:
        worst, _ = s_independence(g, sources, lams, cache)
        summary["s_independence"] = {"s": sorted(sources), "max_deviation": worst}

    written = {
        "m_pN_reconstructed.csv": file_ops.write_weyl_csv("m_pN_reconstructed.csv", report.sample()),
        "reduction_report.json": file_ops.write_json("reduction_report.json", summary),
    }
    logging.info(f"✅ Reconstructed m_{gt.pN}: max residual {report.max_residual:.3g}, "
                 f"flagged {report.flagged_fraction:.0%}.")
    return written


def _case_json(case: VerifyCase, results: List[CheckResult], constants: Dict[str, float]) -> Dict[str, Any]:
    return {
        "name": case.name,
        "order": case.order,
        "nu": [encode_complex(v) for v in case.nu],
        "potential": encode_potential(case.potential),
        "length": case.length,
        "sector": case.sector,
        "constants": constants,
        "checks": [r.to_json() for r in results],
    }


def _verification_report(service: VerificationService, cases: Sequence[VerifyCase]) -> Dict[str, Any]:
    outcome = service.run_all(cases)
    failed = [f"{r.check}@{case.name}" for case, results, _ in outcome for r in results if not r.passed]
    return {"cases": [_case_json(*item) for item in outcome], "failed": failed, "passed": not failed}


def cmd_verify(run: RunConfig, problem: ProblemConfig, file_ops, progress_cls=None) -> Dict[str, str]:
    """Identity and slope checks for every verification case; exit 3 if any fails."""
    service = VerificationService(problem.birkhoff, problem.volterra, problem.tol, run.seed)
    report = _verification_report(service, problem.verify_cases)
    path = file_ops.write_json("asymptotics_report.json", report)
    if not report["passed"]:
        raise InvariantViolation(f"{len(report['failed'])} verification checks failed: {', '.join(report['failed'])}")
    logging.info(f"✅ All verification checks passed ({path}).")
    return {"asymptotics_report.json": path}


def cmd_recover(run: RunConfig, problem: ProblemConfig, file_ops, progress_cls=None) -> Dict[str, str]:
    """Synthesize Weyl data from the true parameters and fit them back from the configured start."""
    spec = problem.recover
    if spec is None:
        raise ConfigError("the configuration has no 'recover' section.")
    g = problem.graph
    _ensure_valid(g)
    family = PotentialFamily(spec.edge, spec.powers, spec.box)
    edges = list(g.edges)
    edges[spec.edge - 1] = dataclasses.replace(g.edge(spec.edge), potential=family.potential(spec.truth))
    truth_graph = dataclasses.replace(g, edges=tuple(edges))
    lams = _lams(problem)
    cache = BasisCache(problem.volterra, problem.tol)
    if spec.kind is WeylKind.INTERNAL:
        target = weyl_matrix_m(truth_graph, spec.edge, lams, cache)
    else:
        target = weyl_matrix_M(truth_graph, spec.index, lams, cache)

    result = recover_edge_potential(g, family, target, cache, start=spec.initial, seed=run.seed)
    truth = np.array(spec.truth)
    report = {
        "edge": spec.edge,
        "kind": spec.kind.value,
        "index": spec.index,
        "powers": [list(p) for p in spec.powers],
        "truth": list(spec.truth),
        "parameter_error": float(np.max(np.abs(result.params - truth))),
        **result.to_json(),
    }
    path = file_ops.write_json("recovery_report.json", report)
    logging.info(f"✅ Recovered {result.params} (truth {truth}), residual {result.residual:.3g}.")
    return {"recovery_report.json": path}


SELFTEST_CASES = (
    VerifyCase("hyperbolic", 2, (0,)),
    VerifyCase("bessel", 2, (-2,)),
    VerifyCase("shift", 2, (0,), PotentialSpec.polynomial([[0.5]])),
    VerifyCase("order3", 3, (0.1, 0.0)),
)


def _well_separated(mu: Sequence[complex], n: int, margin: float = 0.1) -> bool:
    """Real parts apart, no difference near a nonzero multiple of n, no root near {0, ..., n-3}."""
    re = np.sort(np.real(mu))
    if np.min(np.diff(re)) < 2.5 * margin:
        return False
    for i, a in enumerate(mu):
        for b in mu[i + 1:]:
            d = (b - a) / n
            if round(d.real) != 0 and abs(d - round(d.real)) < margin:
                return False
    return all(abs(r - s) >= margin for r in mu for s in range(n - 2))


def _random_stokes_cases(rng: np.random.Generator, count: int) -> List[VerifyCase]:
    """Admissible equations of orders 2 and 3 with |nu| <= 2, alternating the order."""
    out = []
    while len(out) < count:
        n = 2 + len(out) % 2
        nu = tuple(float(v) for v in rng.uniform(-2.0, 2.0, n - 1))
        try:
            mu = char_data(nu, n).mu
        except CharacteristicError:
            continue
        if _well_separated(mu, n):
            out.append(VerifyCase(f"stokes{len(out) + 1}", n, nu))
    return out


def _random_potential_cases(rng: np.random.Generator, count: int) -> List[VerifyCase]:
    return [VerifyCase(f"growth_{i + 1}", 2, (0,), PotentialSpec.polynomial([rng.uniform(-1.0, 1.0, 3).tolist()]))
            for i in range(count)]


def cmd_selftest(run: RunConfig, problem: Optional[ProblemConfig], file_ops, progress_cls=None) -> Dict[str, str]:
    """Wronskians, closed forms, Stokes relations, slope fits and the growth-bound table on built-in cases."""
    rng = np.random.default_rng(run.seed)
    service = VerificationService(tol=run.tolerances, seed=run.seed)
    report = _verification_report(service, SELFTEST_CASES)
    stokes = _verification_report(VerificationService(seed=run.seed, checks=[StokesCheck(), RotationCheck()]),
                                  _random_stokes_cases(rng, 20))
    growth = _verification_report(VerificationService(seed=run.seed, checks=[GrowthBoundCheck()]),
                                  _random_potential_cases(rng, 10))
    failed = report["failed"] + stokes["failed"] + growth["failed"]
    full = {"core": report, "random_stokes": stokes, "random_growth_bound": growth, "failed": failed, "passed": not failed}
    path = file_ops.write_json("selftest_report.json", full)
    if failed:
        raise InvariantViolation(f"selftest failed: {', '.join(failed)}")
    logging.info(f"✅ Selftest passed ({path}).")
    return {"selftest_report.json": path}


COMMANDS = {
    "forward": cmd_forward,
    "reduce": cmd_reduce,
    "verify": cmd_verify,
    "recover": cmd_recover,
    "selftest": cmd_selftest,
}
