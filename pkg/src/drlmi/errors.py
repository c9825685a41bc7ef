"""Exception hierarchy shared by all drlmi modules."""


class DrlmiError(Exception):
    """Base class for every error raised by drlmi."""


class InvalidInput(DrlmiError, ValueError):
    """Malformed input: wrong shapes, non-finite entries, bad options."""


class UnstableSystem(DrlmiError):
    """A state matrix that must be Schur stable is not."""


class NotPsd(DrlmiError, ValueError):
    """Matrix has an eigenvalue below the PSD tolerance."""


class NotPd(DrlmiError, ValueError):
    """Matrix required to be positive definite is (numerically) singular."""


class IllConditioned(DrlmiError):
    """Controller recovery hit a near-singular factorization."""


class SolverFailure(DrlmiError):
    """The conic solver did not return an optimal point."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class Infeasible(SolverFailure):
    """The conic solver returned a certificate of infeasibility."""
