"""Shared exception taxonomy.

Keeps failure modes distinguishable at the CLI boundary: contract violations
are bugs in calling code, domain errors are bad values, config errors are
malformed user input.
"""


class SuparlabError(Exception):
    """Base class for all package errors."""


class ContractViolation(SuparlabError, ValueError):
    """An operation was called in a way its contract forbids (shape
    mismatch, non-scalar backward root, loss not on tape, ...)."""


class ShapeError(ContractViolation):
    """Input shapes do not conform to a primitive's shape rule."""


class UnsupportedPrimitive(ContractViolation):
    """Unknown primitive kind passed to apply_primitive."""


class DomainError(SuparlabError, ValueError):
    """A value is outside its mathematical domain (density not in (0,1],
    width below head size, step index past the schedule end, ...)."""


class DegenerateMaskError(DomainError):
    """Mask would have zero nonzero entries after rounding."""


class ConfigError(SuparlabError, ValueError):
    """Malformed config file, unknown key, or bad override."""
