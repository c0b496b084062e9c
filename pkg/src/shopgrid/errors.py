"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: input problems exit 2,
numerical failures exit 3.
"""


class ShopgridError(Exception):
    """Base class for all package-specific errors."""


class InputError(ShopgridError, ValueError):
    """Malformed, inconsistent, or out-of-range input data."""


class NumericalError(ShopgridError, ArithmeticError):
    """A numerical procedure failed (non-finite loss, degenerate system)."""


class IdentifiabilityError(NumericalError):
    """A regression design matrix is rank deficient."""
