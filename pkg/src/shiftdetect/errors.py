"""Exception types shared across the package.

The CLI maps DataError to exit code 2 (bad input) and NumericError to
exit code 3 (numerical failure).
"""


class DataError(ValueError):
    """Invalid input data: bad shapes, broken invariants, malformed files."""


class NumericError(ArithmeticError):
    """A numerical procedure failed: degenerate statistics, bracketing
    failure, violated monotonicity assumptions."""
