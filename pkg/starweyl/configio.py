# starweyl/configio.py
"""
JSON configuration files.

Complex numbers are written as [re, im] pairs; plain numbers are accepted for
real values. Top-level keys:

    edges[]   {order, length, nu[], potential{type, coeffs | samples}, gamma[][]}
    w         target boundary vertex (a group boundary)
    grid      {kind, theta, t_min, t_max, count, points[], sector}
    tol       {series, volterra, linear, roundtrip}
    volterra  {mesh_points, scheme, min_scale, r_max}            (optional)
    birkhoff  {x_match, z_max, picard_max_sweeps, ladder, ...}   (optional)
    reduce    {s}                                                (optional)
    verify    {cases[]{name, order, nu, potential, length, sector, samples}}
    recover   {edge, kind, index, powers[[m, power]], truth, initial, box}
"""
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

from .config import (
    BirkhoffConfig, GridKind, PotentialKind, Tolerances, VolterraConfig, VolterraScheme, WeylKind,
)
from .errors import ConfigError
from .interfaces import VerifyCase
from .model import EdgeSpec, PotentialSpec, SpectralGrid, StarGraph


@dataclass(frozen=True)
class RecoverSpec:
    """Which edge potential to fit, against which Weyl-type data, and in which family."""
    edge: int
    kind: WeylKind
    index: int
    powers: Tuple[Tuple[int, int], ...]
    truth: Tuple[float, ...]
    initial: Optional[Tuple[float, ...]]
    box: Tuple[Tuple[float, float], ...]


@dataclass
class ProblemConfig:
    """Everything a JSON config file describes."""
    graph: StarGraph
    grid: SpectralGrid
    tol: Tolerances = field(default_factory=Tolerances)
    volterra: VolterraConfig = field(default_factory=VolterraConfig)
    birkhoff: BirkhoffConfig = field(default_factory=BirkhoffConfig)
    reduce_s: Optional[int] = None
    verify_cases: List[VerifyCase] = field(default_factory=list)
    recover: Optional[RecoverSpec] = None

    def with_grid_count(self, count: Optional[int]) -> "ProblemConfig":
        """Copy with the ray grid resized (the CLI --grid-count override)."""
        if count is None:
            return self
        return replace(self, grid=replace(self.grid, count=count))


def parse_complex(value: Any, where: str) -> complex:
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number or [re, im], got {value!r}.")
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        return complex(value[0], value[1])
    raise ConfigError(f"{where}: expected a number or [re, im], got {value!r}.")


def encode_complex(value: complex) -> List[float]:
    value = complex(value)
    return [value.real, value.imag]


def _require(data: Dict[str, Any], key: str, where: str) -> Any:
    if key not in data:
        raise ConfigError(f"{where}: missing key '{key}'.")
    return data[key]


def parse_potential(data: Optional[Dict[str, Any]], where: str) -> PotentialSpec:
    if not data:
        return PotentialSpec.zero()
    try:
        kind = PotentialKind(data.get("type", "zero"))
    except ValueError:
        raise ConfigError(f"{where}: unknown potential type {data.get('type')!r}.") from None
    if kind is PotentialKind.ZERO:
        return PotentialSpec.zero()
    if kind is PotentialKind.POLYNOMIAL:
        rows = _require(data, "coeffs", where)
        return PotentialSpec.polynomial(
            [[parse_complex(c, f"{where}.coeffs[{m}]") for c in row] for m, row in enumerate(rows)])
    samples = []
    for m, comp in enumerate(_require(data, "samples", where)):
        xs = [float(x) for x in _require(comp, "x", f"{where}.samples[{m}]")]
        vals = [parse_complex(v, f"{where}.samples[{m}].values") for v in _require(comp, "values", f"{where}.samples[{m}]")]
        samples.append((xs, vals))
    return PotentialSpec.table(samples)


def encode_potential(q: PotentialSpec) -> Dict[str, Any]:
    if q.kind is PotentialKind.POLYNOMIAL:
        return {"type": "polynomial", "coeffs": [[encode_complex(c) for c in row] for row in q.coeffs]}
    if q.kind is PotentialKind.TABLE:
        return {"type": "table", "samples": [{"x": list(xs), "values": [encode_complex(v) for v in vals]}
                                             for xs, vals in q.samples]}
    return {"type": "zero"}


def parse_edge(data: Dict[str, Any], index: int) -> EdgeSpec:
    where = f"edges[{index - 1}]"
    gamma = data.get("gamma")
    if gamma is not None:
        gamma = [[parse_complex(v, f"{where}.gamma") for v in row] for row in gamma]
    return EdgeSpec(
        order=int(_require(data, "order", where)),
        length=float(_require(data, "length", where)),
        nu=[parse_complex(v, f"{where}.nu") for v in _require(data, "nu", where)],
        potential=parse_potential(data.get("potential"), f"{where}.potential"),
        gamma=gamma,
        index=index,
    )


def parse_grid(data: Dict[str, Any]) -> SpectralGrid:
    try:
        kind = GridKind(data.get("kind", "ray"))
    except ValueError:
        raise ConfigError(f"grid: unknown kind {data.get('kind')!r}.") from None
    defaults = SpectralGrid()
    return SpectralGrid(
        kind=kind,
        theta=float(data.get("theta", defaults.theta)),
        t_min=float(data.get("t_min", defaults.t_min)),
        t_max=float(data.get("t_max", defaults.t_max)),
        count=int(data.get("count", defaults.count)),
        points=tuple(parse_complex(v, "grid.points") for v in data.get("points", ())),
        sector=data.get("sector"),
    )


def parse_verify_case(data: Dict[str, Any], i: int) -> VerifyCase:
    where = f"verify.cases[{i}]"
    return VerifyCase(
        name=str(data.get("name", f"case{i + 1}")),
        order=int(_require(data, "order", where)),
        nu=tuple(parse_complex(v, f"{where}.nu") for v in _require(data, "nu", where)),
        potential=parse_potential(data.get("potential"), f"{where}.potential"),
        length=float(data.get("length", 1.0)),
        sector=int(data.get("sector", 0)),
        samples=int(data.get("samples", 10)),
    )


def cases_from_graph(g: StarGraph) -> List[VerifyCase]:
    """One verification case per distinct edge equation of the graph."""
    seen, out = set(), []
    for j, e in enumerate(g.edges, start=1):
        key = (e.order, e.nu, e.potential, e.length)
        if key in seen:
            continue
        seen.add(key)
        out.append(VerifyCase(f"edge{j}", e.order, e.nu, e.potential, e.length))
    return out


def parse_recover(data: Dict[str, Any], g: StarGraph) -> RecoverSpec:
    where = "recover"
    edge = int(_require(data, "edge", where))
    if not 1 <= edge <= g.p:
        raise ConfigError(f"{where}.edge={edge} outside 1..{g.p}.")
    try:
        kind = WeylKind(data.get("kind", "internal"))
    except ValueError:
        raise ConfigError(f"{where}: unknown kind {data.get('kind')!r}.") from None
    powers = tuple((int(m), int(pw)) for m, pw in _require(data, "powers", where))
    truth = tuple(float(v) for v in _require(data, "truth", where))
    box = tuple((float(lo), float(hi)) for lo, hi in _require(data, "box", where))
    initial = data.get("initial")
    if len(truth) != len(powers) or len(box) != len(powers):
        raise ConfigError(f"{where}: powers, truth and box must have the same length.")
    if initial is not None and len(initial) != len(powers):
        raise ConfigError(f"{where}: initial must have one value per power.")
    default_index = edge if kind is WeylKind.INTERNAL else 1
    return RecoverSpec(edge, kind, int(data.get("index", default_index)), powers, truth,
                       tuple(float(v) for v in initial) if initial is not None else None, box)


def parse_config(data: Dict[str, Any]) -> ProblemConfig:
    """Turn a decoded JSON document into model objects; structural errors propagate as ModelError."""
    if not isinstance(data, dict):
        raise ConfigError("the configuration must be a JSON object.")
    edges = [parse_edge(e, j) for j, e in enumerate(_require(data, "edges", "config"), start=1)]
    graph = StarGraph(tuple(edges), int(_require(data, "w", "config")))
    try:
        tol = Tolerances(**data.get("tol", {}))
        volterra_data = dict(data.get("volterra", {}))
        if "scheme" in volterra_data:
            volterra_data["scheme"] = VolterraScheme(volterra_data["scheme"])
        volterra = VolterraConfig(**volterra_data)
        birkhoff_data = dict(data.get("birkhoff", {}))
        if "ladder" in birkhoff_data:
            birkhoff_data["ladder"] = tuple(float(v) for v in birkhoff_data["ladder"])
        birkhoff = BirkhoffConfig(**birkhoff_data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid numerical settings: {e}") from e

    cases = [parse_verify_case(c, i) for i, c in enumerate(data.get("verify", {}).get("cases", []))]
    recover = parse_recover(data["recover"], graph) if "recover" in data else None
    reduce_s = data.get("reduce", {}).get("s")
    return ProblemConfig(graph, parse_grid(data.get("grid", {})), tol, volterra, birkhoff,
                         int(reduce_s) if reduce_s is not None else None, cases or cases_from_graph(graph), recover)


def load_config(path: str) -> ProblemConfig:
    logging.info(f"Loading configuration '{path}'...")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return parse_config(data)
