# starweyl/config.py
import os
from enum import Enum
from dataclasses import dataclass, field
from typing import Optional, Tuple


class GridKind(Enum):
    """How a spectral grid is described."""
    RAY, LIST = "ray", "list"

class PotentialKind(Enum):
    ZERO, POLYNOMIAL, TABLE = "zero", "polynomial", "table"

class WeylKind(Enum):
    """Boundary-vertex matrix M_s or internal-vertex matrix m_j."""
    BOUNDARY, INTERNAL = "boundary", "internal"

class VolterraScheme(Enum):
    ODE, TRAPEZOID = "ode", "trapezoid"


@dataclass(frozen=True)
class Tolerances:
    """Centralizes numerical tolerances to avoid magic numbers."""
    series: float = 1e-14
    volterra: float = 1e-11
    linear: float = 1e-10
    roundtrip: float = 1e-6

    def __post_init__(self):
        for name in ("series", "volterra", "linear", "roundtrip"):
            if not getattr(self, name) > 0:
                raise ValueError(f"tolerance '{name}' must be positive.")


@dataclass(frozen=True)
class VolterraConfig:
    """Mesh and scheme for the Volterra construction of the S-basis."""
    mesh_points: int = 400
    scheme: VolterraScheme = VolterraScheme.ODE
    # smallest mesh point, as a fraction of the interval length
    min_scale: float = 1e-7
    # series radius |rho x| the truncation order is calibrated for
    r_max: float = 25.0

    def __post_init__(self):
        if self.mesh_points < 8:
            raise ValueError("mesh_points must be at least 8.")
        if not 0 < self.min_scale < 1e-2:
            raise ValueError("min_scale must lie in (0, 1e-2).")
        if self.r_max <= 0:
            raise ValueError("r_max must be positive.")


@dataclass(frozen=True)
class BirkhoffConfig:
    """Settings for the sector-wise asymptotic machinery."""
    x_match: float = 0.5
    z_max: float = 70.0
    picard_max_sweeps: int = 50
    ladder: Tuple[float, ...] = (4.0, 8.0, 16.0, 32.0, 64.0)
    # spacing of the uniform part of the |rho x| grid used by the integral system
    z_step: float = 0.125
    slope_target: float = -1.0
    slope_tolerance: float = 0.3

    def __post_init__(self):
        if self.x_match <= 0:
            raise ValueError("x_match must be positive.")
        if self.z_max < max(self.ladder):
            raise ValueError("z_max must cover the largest ladder value.")
        if self.picard_max_sweeps < 1:
            raise ValueError("picard_max_sweeps must be at least 1.")


@dataclass
class RunConfig:
    """Everything one CLI invocation needs."""
    config_path: Optional[str]
    command: str
    out_dir: str = "out"
    workers: int = 1
    grid_count: Optional[int] = None
    seed: int = 0
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.config_path is not None and not os.path.isfile(self.config_path):
            raise FileNotFoundError(f"config file not found: {self.config_path}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1.")
        if self.grid_count is not None and self.grid_count < 0:
            raise ValueError("grid_count cannot be negative.")
