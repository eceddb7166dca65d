class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericError(ArithmeticError):
    """A numerical procedure failed (bracketing, divergence, non-finite values)."""


class VariantError(TypeError):
    """Incompatible distribution variants were combined."""
