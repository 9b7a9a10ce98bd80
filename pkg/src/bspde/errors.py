"""Exception and warning types shared across the package."""


class DegreeError(ValueError):
    """B-spline degree outside the supported range 0..5."""


class SmoothnessError(ValueError):
    """A derivative of higher order than the basis smoothness allows."""


class OutOfDomainError(ValueError):
    """Evaluation point outside the valid region of a coefficient grid."""


class ValidationError(ValueError):
    """Malformed numeric input (non-finite values, extent mismatch, ...)."""


class EmptyDomainError(ValueError):
    """A mask domain without a single occupied cell."""


class GeometryError(ValueError):
    """Unsupported geometry, e.g. a non-axis-aligned boundary face."""


class ConfigurationError(ValueError):
    """A problem specification the solver pipeline cannot realize."""


class ResourceError(RuntimeError):
    """A requested assembly exceeds the configured memory budget."""


class FormatError(ValueError):
    """Malformed tensor/mask file; carries a byte offset when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DeterminismError(RuntimeError):
    """Benchmark outputs changed across worker counts or strategies."""


class IndefiniteOperatorError(RuntimeError):
    """Conjugate gradient detected a non-positive curvature direction."""


class DivergenceError(RuntimeError):
    """Conjugate gradient residual grew beyond the divergence guard."""


class ConditioningWarning(UserWarning):
    """Non-positive operator diagonal entry; carries the node index."""
