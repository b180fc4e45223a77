"""Exception types raised by the solver."""


class TiarError(Exception):
    """Base class for all solver errors."""


class SingularM0(TiarError):
    """M(0) is numerically singular, so zero is (close to) an eigenvalue."""


class SpectrumOutsideDisk(TiarError):
    """An exponent matrix has eigenvalues outside the analyticity disk."""


class SeriesDivergence(TiarError):
    """A truncated power series did not reach its tolerance within the term cap."""


class SingularS(TiarError):
    """The exponent matrix S cannot be inverted."""


class Breakdown(TiarError):
    """The new Krylov function lies in the span of the basis (invariant subspace).

    ``factorization`` holds the factorization built up to the breakdown.
    """

    def __init__(self, message, factorization=None):
        super().__init__(message)
        self.factorization = factorization


class ReorderingFailure(TiarError):
    """A Schur reordering swap was too ill-conditioned to keep triangularity."""


class LockRejected(TiarError):
    """The coupling vector of the locked block is too large to be discarded."""


class SingularSchurBlock(TiarError):
    """The leading block of the reordered Schur form is singular."""


class NormalizationBreakdown(TiarError):
    """The restart function lies in the span of the locked functions."""


class NotConverged(TiarError):
    """The outer iteration ran out of restarts; partial results are attached."""

    def __init__(self, message, eigenpairs=None, trace=None):
        super().__init__(message)
        self.eigenpairs = eigenpairs if eigenpairs is not None else []
        self.trace = trace
