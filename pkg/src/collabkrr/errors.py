"""Exception types raised by the library."""


class InputError(ValueError):
    """Invalid arguments or malformed input data."""


class StoreError(KeyError):
    """A center or example id could not be resolved in the point store."""


class NumericalError(ArithmeticError):
    """A direct solve produced a residual above its certified threshold."""
