"""Exception hierarchy shared by every module."""


class NcdError(Exception):
    """Base class for all semantic errors raised by ncdc."""


class DomainError(NcdError, ValueError):
    """An argument lies outside the domain of an operation."""


class CompositionError(NcdError):
    """Two morphisms (or maps) do not share an interface."""


class ValidationError(NcdError):
    """A term violates one of its structural invariants."""

    def __init__(self, message, violations=()):
        super().__init__(message)
        self.violations = list(violations)


class SubstitutionError(NcdError):
    """A uid substitution referenced an unknown uid or mixed kinds."""


class ConfigurationError(NcdError):
    """An axis is unconfigured or a configuration is inconsistent."""


class CaptureError(ConfigurationError):
    """An affine stride map's image escapes its codomain."""

    def __init__(self, message, stride_map=None):
        super().__init__(message)
        self.stride_map = stride_map


class AlignmentError(NcdError):
    """Autoalignment could not reconcile two interfaces."""


class EvaluationError(NcdError):
    """Inputs do not match a term, or a term cannot be evaluated."""


class SchemaError(NcdError):
    """A serialized document does not follow the schema."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class ExtractionError(NcdError):
    """A hypergraph cannot be turned back into a term."""
