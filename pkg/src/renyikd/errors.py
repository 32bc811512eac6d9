"""Exception hierarchy shared by every module."""


class RenyiKDError(Exception):
    """Base class for all library errors."""


class ShapeError(RenyiKDError, ValueError):
    pass


class ContractError(RenyiKDError, ValueError):
    """A documented precondition was violated by the caller."""


class DegenerateInputError(RenyiKDError, ValueError):
    """Input is well-formed but numerically degenerate (zero norm, zero trace, ...)."""


class NotPSDError(DegenerateInputError):
    pass


class NumericError(RenyiKDError, ArithmeticError):
    pass


class FormatError(RenyiKDError, ValueError):
    pass


class UnsupportedDtypeError(FormatError):
    pass


class CorruptionError(FormatError):
    pass
