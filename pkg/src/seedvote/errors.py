"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when user-supplied data or configuration is invalid.

    The CLI maps this to exit code 2.
    """
