# starweyl/interfaces.py
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Protocol, Tuple, runtime_checkable

import numpy as np

from .model import PotentialSpec


# --- Records shared by the verification checks and the CLI reports ---
# Kept here so that verification/ and commands.py can both import them
# without importing each other.
@dataclass(frozen=True)
class VerifyCase:
    """One equation (order, nu, potential on (0, length]) to run the identity checks on."""
    name: str
    order: int
    nu: Tuple[complex, ...]
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    length: float = 1.0
    sector: int = 0
    samples: int = 10

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(complex(v) for v in self.nu))


@dataclass
class CheckResult:
    """Outcome of one identity or slope check on one case."""
    check: str
    case: str
    deviation: float
    tolerance: float
    passed: bool
    slope: Optional[float] = None
    exact: bool = False
    details: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "check": self.check,
            "case": self.case,
            "deviation": self.deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "slope": self.slope,
            "exact": self.exact,
            "details": self.details,
        }


# --- Protocols ---
@runtime_checkable
class WeylSource(Protocol):
    """Anything that can hand out a Weyl-type matrix at a given lambda."""
    def at(self, lam: complex) -> np.ndarray:
        ...

class ProgressReporter(Protocol):
    """Interface for progress displays driven by lambda sweeps."""
    def update(self, count: int = 1) -> None:
        ...

    def finish(self) -> None:
        ...

class Check(Protocol):
    """Interface for one family of verification identities."""
    name: str

    def applies(self, case: VerifyCase) -> bool:
        ...

    def run(self, ctx: "CaseContext") -> List[CheckResult]:  # noqa: F821
        ...
