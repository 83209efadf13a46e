"""Shared exception types."""


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class DomainError(ValueError):
    """Input is outside the documented domain of an operation."""


class EvaluationError(RuntimeError):
    """A computation produced a non-finite or otherwise unusable value."""


class FeasibilityError(ValueError):
    """A sampling quota cannot be met by the available data."""


class CorruptVocabularyError(ValueError):
    """A vocabulary file or object violates its structural invariants."""
