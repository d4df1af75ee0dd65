"""Exception types shared across the package.

The CLI maps these onto exit codes: validation/format problems exit 1,
I/O problems (plain OSError) exit 2.
"""


class ValidationError(ValueError):
    """Input data or configuration violates a documented invariant."""


class FormatError(ValidationError):
    """A file exists but its bytes do not match the documented format."""


class ZeroVarianceError(ValidationError):
    """Correlation requested on a constant vector (degenerate evaluation set)."""
