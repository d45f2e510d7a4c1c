"""Exception types shared across the package."""


class FourierVmfError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FourierVmfError, ValueError):
    """Array shapes or dimensions are incompatible."""


class DataFormatError(FourierVmfError, ValueError):
    """A file or byte stream could not be parsed.

    ``offset`` is the byte position where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(FourierVmfError, ArithmeticError):
    """A computation left its supported numerical range or produced non-finite values."""
