"""Exception types raised by the slab MHD laboratory."""


class SlabMHDError(Exception):
    """Base class for all package errors."""


class NonFiniteInput(SlabMHDError):
    """A NaN or Inf was found in input data; rejected eagerly."""


class ChartOverflow(SlabMHDError):
    """Height field left the admissible chart (max|gamma| >= delta0)."""


class DegenerateMetric(SlabMHDError):
    """Surface metric lost positive definiteness."""


class TransversalityLoss(SlabMHDError):
    """Transversal field and surface normal no longer aligned (nu.n < 0.5)."""


class NewtonDiverged(SlabMHDError):
    """Curvature inversion failed to reduce the residual."""


class FoldedMap(SlabMHDError):
    """Harmonic coordinate map lost injectivity (column Jacobian <= 0)."""


class EllipticNoConverge(SlabMHDError):
    """Bulk elliptic solve failed to reach the requested residual."""


class IncompatibleData(SlabMHDError):
    """Boundary/source data violate a solvability condition."""


class SingularInverse(SlabMHDError):
    """Inverse requested on the kernel of a singular operator (constants)."""


class NegativeEigenvalue(SlabMHDError):
    """A symmetrized operator produced an eigenvalue below -tol_eig."""


class StepRejected(SlabMHDError):
    """Time step aborted; wraps the failing stage error."""

    def __init__(self, message, t=None, cause=None):
        super().__init__(message)
        self.t = t
        self.cause = cause


class FilterContamination(SlabMHDError):
    """Identity residuals requested on filtered data."""


class ParseError(SlabMHDError):
    """Scenario file could not be parsed."""


class ValidationError(SlabMHDError):
    """Scenario file parsed but a field failed validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class IoError(SlabMHDError):
    """Series/checkpoint file could not be written or read."""


class VersionMismatch(SlabMHDError):
    """Checkpoint header version or hash does not match."""
