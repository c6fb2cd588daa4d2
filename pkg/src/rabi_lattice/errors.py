"""Exception hierarchy shared by all solvers and the CLI."""


class RabiLatticeError(Exception):
    """Base class for every error raised by the package."""


class InvalidParams(RabiLatticeError, ValueError):
    pass


class DimensionOverflow(RabiLatticeError):
    pass


class IndexOutOfRange(RabiLatticeError, IndexError):
    pass


class DimensionMismatch(RabiLatticeError, ValueError):
    pass


class NoConvergence(RabiLatticeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class DegeneracyResolutionFailure(RabiLatticeError):
    pass


class NoRootInBracket(RabiLatticeError):
    pass


class CutoffViolation(RabiLatticeError):
    """Converged DMRG state occupies more bosons than the cutoff can describe.

    The offending result is attached so scans can still record it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class NonUniformGrid(RabiLatticeError, ValueError):
    pass


class InsufficientDecay(RabiLatticeError):
    pass


class InsufficientPoints(RabiLatticeError, ValueError):
    pass


class SameIonIndex(RabiLatticeError, ValueError):
    pass


class ConfigParseError(RabiLatticeError):
    pass


class BudgetRefused(RabiLatticeError):
    pass
