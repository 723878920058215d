"""Exception hierarchy shared across the package."""


class EntflowError(Exception):
    """Base class for all errors raised by entflow."""


class InvalidCoupling(EntflowError, ValueError):
    pass


class NonFinite(InvalidCoupling):
    pass


class NegativeField(InvalidCoupling):
    pass


class UnsupportedCoupling(InvalidCoupling):
    """The coupling lies outside what a particular solver can handle."""


class SingularSymbol(EntflowError, ArithmeticError):
    pass


class QuadratureNotConverged(EntflowError, ArithmeticError):
    pass


class PairingFailure(EntflowError, ArithmeticError):
    pass


class NoSaturation(EntflowError):
    pass


class DomainError(EntflowError, ValueError):
    pass


class CapacityExceeded(EntflowError):
    pass


class IncompatibleTruncation(EntflowError, ValueError):
    pass


class LengthMismatch(EntflowError, ValueError):
    pass


class BadIncrement(EntflowError, ValueError):
    pass


class ConvergenceFailure(EntflowError, ArithmeticError):
    pass


class RequiresSymmetryBreaking(EntflowError, ValueError):
    pass


class InsufficientPoints(EntflowError, ValueError):
    pass


class CacheCorrupt(EntflowError):
    pass
