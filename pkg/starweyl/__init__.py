# starweyl/__init__.py

# Expose the model objects and the main pipeline entry points
from .model import EdgeSpec, PotentialSpec, SpectralGrid, StarGraph, build_grid, validate_graph
from .config import BirkhoffConfig, GridKind, PotentialKind, RunConfig, Tolerances, VolterraConfig, WeylKind
from .caching import BasisCache
from .graph_forward import WeylSample, forward_point, weyl_matrix_M, weyl_matrix_m
from .inverse import run_reduction, s_independence
from .recovery import PotentialFamily, recover_edge_potential
from .errors import StarWeylError, ModelError, ConfigError, InvariantViolation, NonConvergence
