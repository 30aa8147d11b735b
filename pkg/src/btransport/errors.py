"""Exception hierarchy shared by all solver components."""


class BTransportError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(BTransportError):
    """Invalid, unknown, or missing run-configuration entry."""


class MeshFormatError(BTransportError):
    """Mesh file could not be parsed."""


class UnsupportedElementError(MeshFormatError):
    """Mesh contains element types other than linear simplices."""


class DegenerateElementError(BTransportError):
    """Element with (numerically) zero volume."""


class TransformDomainError(BTransportError):
    """Physical concentration outside the invertible range of a transform."""


class UnsupportedTransformError(BTransportError):
    """Transform cannot represent the requested reaction structure."""


class DegenerateTensorError(BTransportError):
    """Shape tensor too close to singular for the requested quantity."""


class SaturationError(BTransportError):
    """Distortion at (or beyond) the pole of the effective-stress formula."""


class IntegrationInstabilityError(BTransportError):
    """Shape-tensor integration lost positive definiteness."""


class ComplexResultError(BTransportError):
    """Fractional power of a negative value requested without clamping."""


class StagnationError(BTransportError):
    """Stabilization parameter undefined: steady problem with zero velocity."""


class DimensionMismatchError(BTransportError):
    """Field array not aligned with the mesh node or element count."""


class LinearSolverError(BTransportError):
    """Linear solve failed to reach the requested residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularSystemError(LinearSolverError):
    """Assembled system is singular (ill-posed boundary conditions)."""


class ZeroFluxError(BTransportError):
    """Flow-weighted boundary average over a surface with no net flux."""


class NoIntersectionError(BTransportError):
    """Sampling segment does not intersect the mesh."""
