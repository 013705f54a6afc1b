"""Exception types shared across the package."""


class ViewSynthError(Exception):
    """Base class for all package errors."""


class ArgumentError(ViewSynthError, ValueError):
    """Invalid argument or violated precondition."""


class AddressingError(ArgumentError, IndexError):
    """Tensor index out of range on a named axis."""

    def __init__(self, axis: str, index: int, size: int):
        self.axis = axis
        self.index = index
        self.size = size
        super().__init__(f"index {index} out of range on axis {axis!r} (size {size})")


class FormatError(ViewSynthError):
    """Malformed or inconsistent file."""


class EstimationError(ViewSynthError):
    """Not enough data to estimate a quantity."""


class NumericError(ViewSynthError, FloatingPointError):
    """Non-finite input to a numerical routine."""
