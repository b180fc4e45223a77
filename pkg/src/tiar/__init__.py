"""Restarted tensor infinite Arnoldi for nonlinear eigenvalue problems ``M(lambda) v = 0``."""

from .basis import TensorBasis
from .driver import ConvergenceTrace, Eigenpair, SolverConfig, Strategy, estimate_complexity, solve
from .errors import (
    Breakdown,
    LockRejected,
    NormalizationBreakdown,
    NotConverged,
    ReorderingFailure,
    SeriesDivergence,
    SingularM0,
    SingularS,
    SingularSchurBlock,
    SpectrumOutsideDisk,
    TiarError,
)
from .expansion import TiarFactorization, expand, residual_check, start_factorization
from .nep import MdVariant, NepProblem, delay_nep, dep_grid, dep_random, polynomial_nep

__all__ = [
    "TensorBasis",
    "ConvergenceTrace",
    "Eigenpair",
    "SolverConfig",
    "Strategy",
    "estimate_complexity",
    "solve",
    "Breakdown",
    "LockRejected",
    "NormalizationBreakdown",
    "NotConverged",
    "ReorderingFailure",
    "SeriesDivergence",
    "SingularM0",
    "SingularS",
    "SingularSchurBlock",
    "SpectrumOutsideDisk",
    "TiarError",
    "TiarFactorization",
    "expand",
    "residual_check",
    "start_factorization",
    "MdVariant",
    "NepProblem",
    "delay_nep",
    "dep_grid",
    "dep_random",
    "polynomial_nep",
]

__version__ = "0.1.0"
