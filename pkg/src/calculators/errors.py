"""Exception types shared by the transport, quantization and asymptotic tools."""


class TransportError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgumentError(TransportError, ValueError):
    """An input violates a documented precondition (shape, sign, duplicates)."""


class OutOfRangeError(TransportError, ValueError):
    """A scalar parameter lies outside the range where the operation is defined."""


class InfeasibleProblemError(TransportError):
    """The transport problem has no finite value (e.g. W2 with a residual set)."""


class ConvergenceError(TransportError):
    """An iterative solve finished without reaching its certificate."""


def invalid(name: str, value: object, constraint: str) -> InvalidArgumentError:
    """Build an :class:`InvalidArgumentError` with the standard message layout.

    Parameters
    ----------
    name : str
        Name of the offending parameter
    value : object
        The rejected value (rendered with ``repr`` when short)
    constraint : str
        Human-readable statement of what is required

    Returns
    -------
    InvalidArgumentError
        Exception ready to be raised

    Example
    -------
    >>> str(invalid("nx", 0, "a positive integer"))
    'Invalid nx: 0. Must be a positive integer.'
    """
    return InvalidArgumentError(f"Invalid {name}: {value!r}. Must be {constraint}.")
