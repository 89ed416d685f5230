# starweyl/errors.py
from typing import Optional


class StarWeylError(Exception):
    """Base exception for all errors in this package."""
    pass


# --- Configuration and graph structure ---

class ModelError(StarWeylError):
    """Raised when a graph, edge or grid description is structurally invalid."""
    pass

class ConfigError(ModelError):
    """Raised when a JSON configuration cannot be turned into model objects."""
    pass

class NonmonotoneOrders(ModelError):
    """Edge orders must be non-increasing along the edge list."""
    pass

class InvalidW(ModelError):
    """The target boundary vertex w is not a group boundary p_N."""
    pass

class GammaDiagonalZero(ModelError):
    """A boundary form has a vanishing leading coefficient gamma_{j,nu,nu}."""

    def __init__(self, edge: Optional[int], nu: int):
        self.edge = edge
        self.nu = nu
        where = f"edge {edge}" if edge is not None else "edge"
        super().__init__(f"{where}: gamma[{nu}][{nu}] must be nonzero (leading coefficient of U_{nu})")

class EmptyRange(ModelError):
    """A grid or index range that must hold at least one element is empty."""
    pass

class DuplicatePoint(ModelError):
    """Two spectral grid points coincide."""
    pass

class SectorMismatch(ModelError):
    """No n-th root of lambda lies in the requested sector."""
    pass


# --- Characteristic polynomial and series ---

class CharacteristicError(ModelError):
    """The characteristic roots violate the standing assumptions; the edge is rejected."""
    pass

class WrongCoefficientCount(CharacteristicError):
    pass

class RootsDifferByMultipleOfN(CharacteristicError):
    pass

class EqualRealParts(CharacteristicError):
    pass

class RootInForbiddenIntegerSet(CharacteristicError):
    pass

class SeriesError(StarWeylError):
    """Raised when a series or Volterra evaluation cannot meet its tolerance."""
    pass

class OutOfConvergenceBudget(SeriesError):
    """|rho x| exceeds the radius the series truncation was calibrated for."""
    pass

class QuadratureNonconvergence(SeriesError):
    pass


# --- Sector-wise asymptotics ---

class BirkhoffError(StarWeylError):
    pass

class RayOutsideSector(BirkhoffError):
    pass

class PicardDivergence(BirkhoffError):
    pass

class IllConditionedBasis(BirkhoffError):
    pass

class GapRegion(BirkhoffError):
    """|rho x| lies between the series regime and the asymptotic regime."""
    pass

class RhoBelowThreshold(BirkhoffError):
    pass

class ContractionFailure(BirkhoffError):
    pass

class InvariantViolation(StarWeylError):
    """A verified identity missed its tolerance."""
    pass


# --- Forward problem ---

class ForwardError(StarWeylError):
    pass

class PointError(ForwardError):
    """Base for per-lambda failures that are flagged and skipped during a sweep."""

    def __init__(self, message: str, lam: Optional[complex] = None):
        self.lam = lam
        if lam is not None:
            message = f"{message} (lambda={lam.real:.6g}{lam.imag:+.6g}j)"
        super().__init__(message)

class SingularAtLambda(PointError):
    pass

class IllConditioned(PointError):
    pass


# --- Inverse reduction ---

class ReductionError(StarWeylError):
    pass

class MissingWeylData(ReductionError):
    pass

class FormInversionFailure(ReductionError):
    pass

class RangeMismatch(ReductionError):
    """A sigma system is not square; signals an index bookkeeping bug."""
    pass

class IncompleteTable(ReductionError):
    pass

class SigmaSingular(PointError):
    pass

class DenominatorNearZero(PointError):
    pass


# --- Parametric recovery ---

class RecoveryError(StarWeylError):
    pass

class NonConvergence(RecoveryError):
    pass

class AmbiguousFit(RecoveryError):
    pass
