"""Exception hierarchy shared by every module."""


class CircuitError(Exception):
    """Base class for all library errors."""


class StructureError(CircuitError):
    """A circuit violates smoothness or decomposability."""


class IncompatibleError(CircuitError):
    """Two circuits cannot be multiplied because their structures disagree."""


class FieldError(CircuitError):
    """An operation was requested over the wrong number field."""


class DomainError(CircuitError):
    """An assignment value lies outside a variable's domain."""


class UnsupportedPair(CircuitError):
    """No closed form exists for the requested leaf product or integral."""


class NumericalError(CircuitError):
    """A required logarithm hit an exact zero or a non-finite value."""


class MonotonicityError(CircuitError):
    """A circuit expected to be monotone has a negative weight or leaf."""


class ShapeError(CircuitError):
    """Tensor shapes do not match the declared factorization."""


class NotPSD(CircuitError):
    """A matrix has an eigenvalue below the tolerated negative threshold."""


class ConfigError(CircuitError):
    """A configuration is inconsistent with the data or the model class."""


class BudgetExceeded(CircuitError):
    """An exhaustive procedure would exceed its enumeration cap."""
