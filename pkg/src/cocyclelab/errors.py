"""Exception hierarchy.

Two families are distinguished so the CLI can map them to exit codes:
``ValidationError`` for bad inputs / violated preconditions (exit 2) and
``NumericsError`` for runtime numerical-contract violations (exit 3).
"""


class CocycleLabError(Exception):
    pass


class ValidationError(CocycleLabError, ValueError):
    """Bad input or violated precondition."""


class NonPositiveDeterminant(ValidationError):
    def __init__(self, symbol, det):
        self.symbol = symbol
        self.det = det
        super().__init__(f"det A <= 0 for symbol {symbol} (det = {det!r})")


class SizeGuardError(ValidationError):
    """A size guard (word length, enumeration budget, ...) was exceeded."""


class NumericsError(CocycleLabError, RuntimeError):
    """A numerical contract could not be met at runtime."""


class DegreeDeficient(NumericsError):
    """Entry polynomial has fewer real roots than the word length."""


class BracketFailure(NumericsError):
    """Root bracketing failed; diagnostics carried in the message."""


class ProductVanishes(NumericsError):
    """A product of rank-one factors fell below the reliability floor."""


class AtomCollision(ValidationError):
    """Real evaluation point too close to an atom of the measure."""
