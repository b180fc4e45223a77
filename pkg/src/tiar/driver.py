"""Outer restart loop: expand, extract Ritz pairs, restart, compress."""

from __future__ import annotations

import enum
import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import evaluate, memory_footprint
from .errors import Breakdown, NotConverged
from .expansion import TiarFactorization, expand, residual_check, start_factorization
from .nep import MdVariant, NepProblem
from .restart import (
    CompressionReport,
    degree_truncate,
    implicit_restart,
    krylov_schur_blocks,
    semi_explicit_restart,
    svd_compress,
)
from .schur import RitzReport, ritz_extract, select_wanted

__all__ = [
    "Strategy",
    "SolverConfig",
    "TraceRow",
    "ConvergenceTrace",
    "Eigenpair",
    "solve",
    "estimate_complexity",
]

log = logging.getLogger(__name__)

MAX_LENGTH = 1000


class Strategy(str, enum.Enum):
    SEMI_EXPLICIT = "semi-explicit"
    IMPLICIT = "implicit"


@dataclass
class SolverConfig:
    """Parameters of :func:`solve`.

    Parameters
    ----------
    m
        Maximum length of the factorization.
    p
        Number of wanted eigenvalues (restart size).
    max_restarts
        Restarts allowed before giving up with :class:`NotConverged`.
    conv_tol
        A Ritz pair is converged when its estimate is below
        ``conv_tol * |mu|`` and the NEP residual of the extracted pair is
        below ``10 * conv_tol``.
    drop_tol
        Drop tolerance of the SVD and degree compression (implicit only).
    strategy, md_variant
        Restart strategy and evaluation of the tail operator.
    start_vector, seed
        Start vector of the constant starting function. When absent a
        normalized vector of ones is used, or a random one if ``seed`` is set.
    lock_tol
        Relative threshold on the discarded coupling when locking.
    degree_guard
        Truncate the degree only where the dropped coefficients are below
        ``drop_tol`` (see :func:`degree_truncate`).
    check_residual, measure_bounds
        Record the factorization residual after each expansion and each
        restart in the trace, and measure the compression errors (both
        cost extra operator applications).
    """

    m: int = 20
    p: int = 5
    max_restarts: int = 50
    conv_tol: float = 1e-10
    drop_tol: float = 1e-14
    strategy: Strategy = Strategy.IMPLICIT
    md_variant: MdVariant = MdVariant.SERIES
    start_vector: np.ndarray | None = None
    seed: int | None = None
    lock_tol: float = 1e-8
    degree_guard: bool = True
    check_residual: bool = False
    measure_bounds: bool = False

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        self.md_variant = MdVariant(self.md_variant)
        if not 1 <= self.p < self.m <= MAX_LENGTH:
            raise ValueError(f"need 1 <= p < m <= {MAX_LENGTH}, got p={self.p}, m={self.m}")
        if self.max_restarts < 0:
            raise ValueError("max_restarts must be non-negative")
        for name in ("conv_tol", "drop_tol", "lock_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.p < self.m / 4:
            warnings.warn(
                f"p={self.p} < m/4: restarts keep few vectors and may be unstable (thick restart advised)",
                stacklevel=2,
            )

    def start(self, n: int) -> np.ndarray:
        if self.start_vector is not None:
            v = np.asarray(self.start_vector, dtype=complex).ravel()
            if v.shape != (n,):
                raise ValueError(f"start vector has length {v.shape[0]}, expected {n}")
        elif self.seed is not None:
            rng = np.random.default_rng(self.seed)
            v = rng.standard_normal(n) + 0j
        else:
            v = np.ones(n, dtype=complex)
        return v / np.linalg.norm(v)


@dataclass
class TraceRow:
    """Telemetry of one outer iteration (one expansion and the restart after it)."""

    iteration: int
    p_locked: int
    n_converged: int
    residual_estimates: np.ndarray
    r: int
    d: int
    r_restart: int
    d_restart: int
    bytes: int
    seconds: float
    factorization_residual: float = float("nan")
    restart_residual: float = float("nan")
    discarded: float = 0.0
    compression: list[CompressionReport] = field(default_factory=list)

    @property
    def min_estimate(self) -> float:
        return float(np.min(self.residual_estimates)) if self.residual_estimates.size else 0.0

    @property
    def max_estimate(self) -> float:
        return float(np.max(self.residual_estimates)) if self.residual_estimates.size else 0.0


@dataclass
class ConvergenceTrace:
    strategy: Strategy
    rows: list[TraceRow] = field(default_factory=list)

    @property
    def r_max(self) -> int:
        return max((row.r for row in self.rows), default=0)

    @property
    def peak_bytes(self) -> int:
        return max((row.bytes for row in self.rows), default=0)

    @property
    def restarts(self) -> int:
        return sum(1 for row in self.rows if row.r_restart >= 0)


@dataclass
class Eigenpair:
    value: complex
    vector: np.ndarray
    residual: float


def _pairs(fact: TiarFactorization, report: RitzReport, idx, problem: NepProblem):
    X0 = evaluate(fact.basis.column(slice(0, fact.k)), 0.0)
    out = []
    for j in idx:
        mu = report.values[j]
        if mu == 0:
            out.append(None)
            continue
        v = X0 @ report.vectors[:, j]
        nv = np.linalg.norm(v)
        if nv == 0:
            out.append(None)
            continue
        v = v / nv
        lam = 1.0 / mu
        out.append(Eigenpair(complex(lam), v, problem.nep_residual(lam, v)))
    return out


def _merge(pairs: list[Eigenpair], tol: float = 1e-8) -> list[Eigenpair]:
    out: list[Eigenpair] = []
    for pr in sorted(pairs, key=lambda e: e.residual):
        if all(abs(pr.value - q.value) > tol * max(abs(q.value), 1.0) for q in out):
            out.append(pr)
    return sorted(out, key=lambda e: (abs(e.value), -e.value.imag))


def _restart_size(values: np.ndarray, p: int, m: int, rel_tie: float = 1e-6) -> int:
    """``p``, or ``p + 1`` when the ``p``-th wanted value is tied in modulus with the next one.

    Keeping both members of a conjugate pair avoids purging half of it,
    which stalls convergence of the kept half.
    """
    mods = np.sort(np.abs(values))[::-1]
    if p < len(mods) and p + 1 < m and mods[p - 1] - mods[p] <= rel_tie * mods[p - 1]:
        return p + 1
    return p


def _breakdown_pairs(exc: Breakdown, p: int, problem: NepProblem) -> list[Eigenpair]:
    """Ritz pairs of the invariant subspace found at a breakdown (exact up to roundoff)."""
    Hsq = exc.hessenberg
    k = Hsq.shape[0]
    mu, Yv = np.linalg.eig(Hsq)
    X0 = evaluate(exc.factorization.basis.column(slice(0, k)), 0.0)
    out = []
    for j in select_wanted(mu, min(p, k)):
        if mu[j] == 0:
            continue
        v = X0 @ Yv[:, j]
        v = v / np.linalg.norm(v)
        out.append(Eigenpair(complex(1.0 / mu[j]), v, problem.nep_residual(1.0 / mu[j], v)))
    return out


def solve(problem: NepProblem, config: SolverConfig) -> tuple[list[Eigenpair], ConvergenceTrace]:
    """Compute the ``config.p`` eigenvalues of ``problem`` closest to the origin.

    Returns the eigenpairs sorted by modulus and the per-iteration trace.
    Raises :class:`NotConverged` (carrying both) when the restarts run out.
    A breakdown of the expansion means an invariant subspace was found;
    its Ritz pairs are returned directly.
    """
    trace = ConvergenceTrace(config.strategy)
    fact = start_factorization(config.start(problem.n))
    best: list[Eigenpair] = []
    for it in range(config.max_restarts + 1):
        t0 = time.perf_counter()
        try:
            fact = expand(fact, config.m, problem, config.md_variant)
        except Breakdown as exc:
            log.info("breakdown at iteration %d: %s", it, exc)
            pairs = _breakdown_pairs(exc, config.p, problem)
            basis = exc.factorization.basis
            trace.rows.append(TraceRow(it, len(pairs), len(pairs), np.zeros(len(pairs)), basis.r, basis.d,
                                       -1, -1, memory_footprint(basis), time.perf_counter() - t0))
            return _merge(pairs), trace
        report = ritz_extract(fact, config.conv_tol)
        wanted = select_wanted(report.values, config.p)
        pairs = _pairs(fact, report, wanted, problem)
        flags = report.converged_flags.copy()
        flags[:] = False
        for j, pr in zip(wanted, pairs):
            flags[j] = bool(report.converged_flags[j] and pr is not None and pr.residual <= 10 * config.conv_tol)
        report.converged_flags = flags
        good = [pr for j, pr in zip(wanted, pairs) if flags[j]]
        if len(good) >= len(best):
            best = good
        row = TraceRow(
            it,
            0,
            int(np.sum(flags)),
            report.residual_estimates[wanted],
            fact.basis.r,
            fact.basis.d,
            -1,
            -1,
            memory_footprint(fact.basis),
            0.0,
        )
        if config.check_residual:
            row.factorization_residual = residual_check(fact, problem, config.md_variant)
        trace.rows.append(row)
        if len(good) == config.p:
            row.seconds = time.perf_counter() - t0
            return _merge(good), trace
        if it == config.max_restarts:
            row.seconds = time.perf_counter() - t0
            break
        keep = _restart_size(report.values, config.p, config.m)
        blocks = krylov_schur_blocks(fact, report, keep, config.lock_tol)
        row.p_locked = blocks.p_locked
        if config.strategy is Strategy.SEMI_EXPLICIT:
            fact = semi_explicit_restart(fact, blocks, problem)
        else:
            fact = implicit_restart(fact, blocks)
            fact, rep_svd = svd_compress(fact, config.drop_tol, problem, measure=config.measure_bounds)
            fact, rep_deg = degree_truncate(
                fact, config.drop_tol, problem, measure=config.measure_bounds, guard=config.degree_guard
            )
            row.compression = [rep_svd, rep_deg]
        row.discarded = blocks.discarded
        if config.check_residual:
            row.restart_residual = residual_check(fact, problem, config.md_variant)
        row.r_restart = fact.basis.r
        row.d_restart = fact.basis.d
        row.seconds = time.perf_counter() - t0
    raise NotConverged(
        f"{len(best)} of {config.p} eigenpairs converged after {config.max_restarts} restarts",
        _merge(best),
        trace,
    )


def estimate_complexity(config: SolverConfig, problem: NepProblem) -> dict:
    """Predicted cost of one expansion step and the storage of the basis.

    The dominant work of a step is forming ``Z a`` products, ``d * r * n``
    multiply-adds with ``d`` and ``r`` at most ``m``. The semi-explicit
    restart stores ``Z`` and ``Y`` (``n m + n p`` elements); the implicit
    one stores ``Z`` with ``r_max >= m - p`` columns.
    """
    n, m, p = problem.n, config.m, config.p
    elem = np.dtype(complex).itemsize
    semi = n * m + n * p
    implicit_lower = n * (m - p)
    return {
        "flops_per_step": float(m * m * n),
        "semi_explicit_elements": semi,
        "semi_explicit_bytes": semi * elem,
        "implicit_r_max_lower": m - p,
        "implicit_elements_lower": implicit_lower,
        "implicit_bytes_lower": implicit_lower * elem,
    }
