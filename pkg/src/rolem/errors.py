"""Exception hierarchy shared by all modules."""


class RolemError(Exception):
    """Base class for package errors."""


class InvalidParameterError(RolemError, ValueError):
    """A distribution or model parameter violates its support."""


class FrameError(RolemError):
    """The reference frame cannot resolve a subspace into coordinates.

    Raised when ``U1^T Gamma`` is numerically singular. The usual remedy is to
    pick another orthogonal frame and restart the chain.
    """


class NumericalError(RolemError):
    """Non-finite or degenerate intermediate quantities."""


class DataError(RolemError, ValueError):
    """Malformed input data."""
