"""Restart strategies and compression of TIAR factorizations.

Both restarts start from the same Krylov-Schur blocks: an ordered Schur
form of ``H_m`` with the converged Ritz values first, Householder
restoration of the wanted block and locking of the converged one.

* :func:`semi_explicit_restart` replaces the factorization by the locked
  invariant pair written in exponential form plus one starting function.
* :func:`implicit_restart` contracts the factorization to length ``p``;
  it is followed by :func:`svd_compress` and :func:`degree_truncate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .basis import (
    TensorBasis,
    evaluate,
    inner_products,
    linear_combine,
)
from .errors import Breakdown, LockRejected, NormalizationBreakdown, SingularSchurBlock
from .expansion import TiarFactorization, orthogonalize, residual_check
from .nep import NepProblem
from .schur import RitzClass, RitzReport, householder_restore, lock, ordered_schur, select_wanted

__all__ = [
    "EULER_GAMMA",
    "RestartBlocks",
    "CompressionReport",
    "krylov_schur_blocks",
    "semi_explicit_restart",
    "implicit_restart",
    "svd_compress",
    "degree_truncate",
    "decay_constant",
    "decay_diagnostics",
]

EULER_GAMMA = 0.5772156649
ORTH_RCOND = 1e-13


@dataclass
class RestartBlocks:
    """Blocks of ``B Psi_m P = Psi_m P R + psi_{m+1} b`` after reordering and locking.

    ``P`` is the ordering Schur basis, ``R11`` the converged block, ``F``
    and ``H`` the coupling and the Hessenberg wanted block after
    Householder restoration with ``Q`` and ``beta`` the new last-row entry.
    """

    P: np.ndarray
    R: np.ndarray
    p_locked: int
    p: int
    Q: np.ndarray
    H: np.ndarray
    F: np.ndarray
    beta: float
    discarded: float

    @property
    def R11(self) -> np.ndarray:
        return self.R[: self.p_locked, : self.p_locked]

    @property
    def combination(self) -> np.ndarray:
        """``P I_{m,p} blkdiag(I, Q)``, the coefficients of the kept columns."""
        M = self.P[:, : self.p].copy()
        M[:, self.p_locked:] = M[:, self.p_locked:] @ self.Q
        return M

    @property
    def hessenberg(self) -> np.ndarray:
        """``[[R11, F], [0, H], [0, beta e^T]]`` of shape ``(p+1) x p``."""
        pl, p = self.p_locked, self.p
        Hn = np.zeros((p + 1, p), dtype=complex)
        Hn[:pl, :pl] = self.R11
        Hn[:pl, pl:] = self.F
        Hn[pl:p, pl:] = self.H
        if p > pl:
            Hn[p, p - 1] = self.beta
        return Hn


@dataclass
class CompressionReport:
    """Bounds and measurements of one compression step.

    ``bound_errV`` and ``bound_errBV`` bound the change of the basis and of
    the factorization residual caused by the SVD truncation, and
    ``bound_degree`` / ``bound_degree_residual`` the same quantities for the
    degree truncation. The ``measured_*`` fields are the observed values.
    ``C_hat`` is the empirical decay constant ``max_i ||a_i|| (i-1)!``.
    """

    sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    r_before: int = 0
    r_after: int = 0
    d_before: int = 0
    d_after: int = 0
    bound_errV: float = 0.0
    bound_errBV: float = 0.0
    bound_degree: float = 0.0
    bound_degree_residual: float = 0.0
    measured_errV: float = 0.0
    measured_residual: float = 0.0
    measured_degree: float = 0.0
    measured_degree_residual: float = 0.0
    C_d: float = 0.0
    C_s: float = 0.0
    s: int = 0
    R: float = 0.0
    C_hat: float = 0.0
    gamma: float = EULER_GAMMA
    truncated: bool = False

    def violations(self, slack: float = 1e-13) -> list[str]:
        """Names of bounds exceeded by the measurements (``slack`` absorbs roundoff)."""
        out = []
        for name, meas, bound in (
            ("errV", self.measured_errV, self.bound_errV),
            ("errBV", self.measured_residual, self.bound_errBV),
            ("degree", self.measured_degree, self.bound_degree),
            ("degree_residual", self.measured_degree_residual, self.bound_degree_residual),
        ):
            if meas > bound * (1 + 1e-10) + slack:
                out.append(name)
        return out


# -- Krylov-Schur blocks --------------------------------------------------------


def _classes(report: RitzReport, p: int, p_max_locked: int | None):
    wanted = select_wanted(report.values, p)
    cls = np.full(len(report.values), RitzClass.UNWANTED)
    cls[wanted] = RitzClass.WANTED
    conv = [j for j in wanted if report.converged_flags[j]]
    if p_max_locked is not None:
        conv = sorted(conv, key=lambda j: report.residual_estimates[j])[:p_max_locked]
    cls[conv] = RitzClass.CONVERGED
    return cls


def _matcher(values: np.ndarray, classes: np.ndarray):
    free = list(range(len(values)))

    def classify(mu):
        j = min(free, key=lambda i: abs(values[i] - mu))
        free.remove(j)
        return classes[j]

    return classify


def krylov_schur_blocks(
    fact: TiarFactorization,
    report: RitzReport,
    p: int,
    lock_tol: float = 1e-8,
) -> RestartBlocks:
    """Reorder, restore and lock the length-``m`` factorization ``fact``.

    The ``p`` wanted Ritz values are selected by :func:`select_wanted`; the
    converged ones among them are locked. When locking is rejected the
    least accurate converged value is demoted to wanted and the step is
    repeated.
    """
    m = fact.k
    if not 1 <= p <= m:
        raise ValueError(f"restart size {p} must lie in [1, {m}]")
    Hm = fact.H[:m, :m]
    beta = fact.H[m, m - 1]
    h_norm = np.linalg.norm(fact.H, 2)
    limit = None
    while True:
        cls = _classes(report, p, limit)
        P, R, (pl, pp) = ordered_schur(Hm, _matcher(report.values, cls))
        row = beta * P[-1, :pp]
        try:
            row, discarded = lock(row, pl, h_norm, lock_tol)
        except LockRejected:
            limit = pl - 1
            continue
        Q, Hq, b2 = householder_restore(R[pl:pp, pl:pp], row[pl:pp])
        F = R[:pl, pl:pp] @ Q
        return RestartBlocks(P, R, pl, pp, Q, Hq, F, b2, discarded)


# -- restarts ---------------------------------------------------------------------


def implicit_restart(fact: TiarFactorization, blocks: RestartBlocks) -> TiarFactorization:
    """Contract ``fact`` to length ``p``, keeping the residual column ``psi_{m+1}``."""
    m, p = fact.k, blocks.p
    M = np.zeros((m + 1, p + 1), dtype=complex)
    M[:m, :p] = blocks.combination
    M[m, p] = 1.0
    basis = linear_combine(fact.basis, M)
    return TiarFactorization(basis, blocks.hessenberg, fact.discarded + blocks.discarded)


def _orth(X: np.ndarray) -> np.ndarray:
    if X.shape[1] == 0:
        return X.copy()
    return scipy.linalg.orth(X, rcond=ORTH_RCOND)


def semi_explicit_restart(
    fact: TiarFactorization,
    blocks: RestartBlocks,
    problem: NepProblem | None = None,
) -> TiarFactorization:
    """Restart from the locked invariant pair and one exponential starting function.

    With ``Ytil = Psi_m(0) P I_{m,p} blkdiag(I, Q)`` and
    ``S = [[R11, F], [0, H]]^{-1}`` every locked column is
    ``Ytil exp(theta S) e_j`` and the starting function is
    ``f(theta) = Ytil exp(theta S) e_{p_locked+1}``. The result has no
    polynomial directions and a single constant row.
    """
    pl, p = blocks.p_locked, blocks.p
    m = fact.k
    T = blocks.hessenberg[:p, :p]
    if p == 0 or np.linalg.cond(T) > 1e14:
        raise SingularSchurBlock("the kept block of the Schur form is singular")
    S = np.linalg.inv(T)
    if problem is not None:
        problem._check_spectrum(S)
    Ytil = evaluate(fact.basis.column(slice(0, m)), 0.0) @ blocks.combination
    W = _orth(Ytil)
    n = Ytil.shape[0]
    k = pl + 1
    C = np.eye(p, k, dtype=complex)
    basis = TensorBasis(
        Z=np.zeros((n, 0), dtype=complex),
        W=W,
        Y=Ytil,
        S=S,
        a=np.zeros((1, k, 0), dtype=complex),
        b=(W.conj().T @ Ytil @ C).T[None, :, :],
        C=C,
    )
    R11 = blocks.R11.copy()
    if pl:
        locked = basis.column(slice(0, pl))
        G = inner_products(locked, locked).reshape(pl, pl)
        G = 0.5 * (G + G.conj().T)
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise SingularSchurBlock("locked functions are linearly dependent") from exc
        Linv_h = scipy.linalg.solve_triangular(L, np.eye(pl), lower=True).conj().T
        mix = np.eye(k, dtype=complex)
        mix[:pl, :pl] = Linv_h
        basis = linear_combine(basis, mix)
        R11 = L.conj().T @ R11 @ Linv_h
        try:
            _, _, fbar = orthogonalize(basis.column(slice(0, pl)), basis.column(pl))
        except Breakdown as exc:
            raise NormalizationBreakdown("restart function lies in the locked span") from exc
    else:
        try:
            _, _, fbar = orthogonalize(basis.column(slice(0, 0)), basis.column(0))
        except Breakdown as exc:
            raise NormalizationBreakdown("restart function vanishes") from exc
    basis = basis.with_coefficients(
        np.concatenate([basis.a[:, :pl], fbar.a], axis=1),
        np.concatenate([basis.b[:, :pl], fbar.b], axis=1),
        np.concatenate([basis.C[:, :pl], fbar.C], axis=1),
    )
    H = np.zeros((pl + 1, pl), dtype=complex)
    H[:pl] = R11
    return TiarFactorization(basis, H, fact.discarded + blocks.discarded)


# -- compression ------------------------------------------------------------------


def decay_constant(basis: TensorBasis) -> float:
    """Empirical ``C = max_i ||a_i|| (i-1)!`` over the polynomial rows."""
    best = 0.0
    for i in range(basis.d):
        nrm = np.linalg.norm(basis.a[i], 2) if basis.a[i].size else 0.0
        if nrm > 0:
            best = max(best, math.exp(math.log(nrm) + math.lgamma(i + 1)))
    return best


def _radius(problem: NepProblem) -> float:
    R = min(2.0, 0.9 * problem.radius)
    return R


def _series_index(C_hat: float, D: int, R: float, sigma_kept: float) -> int:
    for s in range(1, D + 1):
        if C_hat * (D - s) / R**s <= sigma_kept:
            return s
    return D


def _require_polynomial(fact: TiarFactorization):
    if fact.basis.p or fact.basis.q:
        raise ValueError("compression is defined for polynomial-only factorizations")


def svd_compress(
    fact: TiarFactorization,
    eps: float,
    problem: NepProblem,
    measure: bool = True,
) -> tuple[TiarFactorization, CompressionReport]:
    """Low-rank approximation of the coefficient tensor by a truncated SVD.

    The unfolding ``A = [a_0^T, ..., a_{d-1}^T]`` (``r x dk``) is
    factorized and every singular value ``<= eps`` is dropped. The report
    carries the bounds on the basis change and on the residual increase,
    with the decay constant replaced by its empirical value.
    """
    _require_polynomial(fact)
    basis = fact.basis
    D, K, r = basis.a.shape
    A = basis.a.transpose(2, 0, 1).reshape(r, D * K)
    if r == 0:
        return fact, CompressionReport(d_before=D, d_after=D)
    U, sig, Vh = np.linalg.svd(A, full_matrices=False)
    rt = int(np.sum(sig > eps))
    rt = max(rt, 1)
    s_next = float(sig[rt]) if rt < len(sig) else 0.0
    k = fact.k
    C_hat = decay_constant(basis)
    R = _radius(problem)
    s = _series_index(C_hat, D, R, float(sig[rt - 1]))
    h_norm = float(np.linalg.norm(fact.H, 2))
    C_d = EULER_GAMMA + math.log(D) + D * h_norm
    max_mi = max(problem.derivative_norm_bound(i) for i in range(1, s + 1))
    C_s = problem.m0_inverse_norm * ((EULER_GAMMA + math.log(s + 1)) * max_mi + problem.max_norm_on_circle(R))
    report = CompressionReport(
        sigma=sig,
        r_before=r,
        r_after=rt,
        d_before=D,
        d_after=D,
        bound_errV=math.sqrt(D * K) * s_next,
        bound_errBV=math.sqrt(k) * (C_d + C_s) * s_next,
        C_d=C_d,
        C_s=C_s,
        s=s,
        R=R,
        C_hat=C_hat,
        truncated=rt < r,
    )
    if rt == r:
        Z = basis.Z @ U
        a_new = (sig[:, None] * Vh).reshape(r, D, K).transpose(1, 2, 0)
        out = TensorBasis(Z, basis.W, basis.Y, basis.S, np.ascontiguousarray(a_new), basis.b, basis.C)
        return TiarFactorization(out, fact.H, fact.discarded), report
    Z1 = basis.Z @ U[:, :rt]
    a1 = (sig[:rt, None] * Vh[:rt]).reshape(rt, D, K).transpose(1, 2, 0)
    kept = TensorBasis(Z1, basis.W, basis.Y, basis.S, np.ascontiguousarray(a1), basis.b, basis.C)
    if measure:
        Z2 = basis.Z @ U[:, rt:]
        a2 = (sig[rt:, None] * Vh[rt:]).reshape(r - rt, D, K).transpose(1, 2, 0)
        diff = TensorBasis(Z2, basis.W, basis.Y, basis.S, np.ascontiguousarray(a2), basis.b * 0, basis.C * 0)
        report.measured_errV = float(np.linalg.norm(a2))
        report.measured_residual = residual_check(fact, problem, basis=diff)
    return TiarFactorization(kept, fact.H, fact.discarded), report


def degree_truncate(
    fact: TiarFactorization,
    eps: float,
    problem: NepProblem,
    measure: bool = True,
    guard: bool = False,
) -> tuple[TiarFactorization, CompressionReport]:
    """Drop the trailing polynomial rows once the derivative criterion allows it.

    The kept row count ``dt`` is the smallest with
    ``max_{dt < i <= d} ||M_i|| ||M_0^{-1}|| (d - dt) / (dt + 1)! < eps``.
    With ``guard`` the dropped rows must also have Frobenius norm ``<= eps``;
    the criterion alone ignores the size of the coefficients, which after a
    restart need not decay (the kept residual column has its mass at high
    degree). When no ``dt < d`` qualifies the input is returned unchanged
    and ``report.truncated`` is False.
    """
    _require_polynomial(fact)
    basis = fact.basis
    D = basis.d
    k = fact.k
    C_hat = decay_constant(basis)
    minv = problem.m0_inverse_norm
    norms = [problem.derivative_norm_bound(i) for i in range(D + 1)]
    report = CompressionReport(r_before=basis.r, r_after=basis.r, d_before=D, d_after=D, C_hat=C_hat)
    dt = None
    for cand in range(1, D):
        tail = max(norms[cand + 1: D + 1])
        if tail * minv * (D - cand) / math.factorial(cand + 1) < eps:
            if guard and np.linalg.norm(basis.a[cand:]) > eps:
                continue
            dt = cand
            break
    if dt is None:
        return fact, report
    tail = max(norms[dt + 1: D + 1])
    report.d_after = dt
    report.truncated = True
    report.bound_degree = C_hat * math.sqrt(k + 1) * (D - dt) / math.factorial(dt)
    report.bound_degree_residual = C_hat * math.sqrt(k + 1) * tail * minv * (D - dt) / math.factorial(dt + 1)
    if measure:
        a_diff = basis.a.copy()
        a_diff[:dt] = 0.0
        diff = basis.with_coefficients(a_diff, basis.b, basis.C)
        report.measured_degree = float(np.linalg.norm(a_diff))
        report.measured_degree_residual = residual_check(fact, problem, basis=diff)
    a = np.ascontiguousarray(basis.a[:dt])
    out = TensorBasis(basis.Z, basis.W, basis.Y, basis.S, a, basis.b[:dt], basis.C)
    return TiarFactorization(out, fact.H, fact.discarded), report


def decay_diagnostics(fact: TiarFactorization, rank_tol: float = 1e-13) -> dict:
    """Coefficient decay and singular-value decay checks of a polynomial basis.

    Returns a dict with ``slice_norms`` (``||a_i||_2`` per row),
    ``C_hat``, ``decay_ratio`` (``||a_i|| (i-1)! / C_hat``), the singular
    values of the unfolding, its numerical ``rank``, ``sv_bound_check``
    and ``sv_bound_literal``.

    ``sv_bound_check`` verifies, for every ``R`` in ``[k, d]``, that the
    singular values beyond the numerical rank of ``A`` with the rows past
    ``R - k + 1`` removed are bounded by ``sum_{j > R-k+1} C_hat / (j-1)!``.
    ``sv_bound_literal`` evaluates ``C_hat (d-R-k+2) / (R-k+1)!`` against
    ``sigma_{R+1}`` instead; it is reported but not relied on.
    """
    _require_polynomial(fact)
    basis = fact.basis
    D, K, r = basis.a.shape
    norms = np.array([np.linalg.norm(basis.a[i], 2) if basis.a[i].size else 0.0 for i in range(D)])
    C_hat = decay_constant(basis)
    fac = np.array([math.exp(math.lgamma(i + 1)) for i in range(D)])
    ratio = norms * fac / C_hat if C_hat > 0 else np.zeros(D)
    A = basis.a.transpose(2, 0, 1).reshape(r, D * K)
    sig = np.linalg.svd(A, compute_uv=False) if A.size else np.zeros(0)
    top = sig[0] if sig.size else 0.0
    rank = int(np.sum(sig > rank_tol * max(top, 1e-300)))
    check = True
    literal = True
    kk = K
    for R in range(kk, D + 1):
        keep = R - kk + 1
        At = A.copy().reshape(r, D, K)
        At[:, keep:, :] = 0.0
        st = np.linalg.svd(At.reshape(r, D * K), compute_uv=False) if At.size else np.zeros(0)
        rk = int(np.sum(st > rank_tol * max(top, 1e-300)))
        bound = sum(C_hat / fac[j] for j in range(keep, D))
        if rk < len(sig) and sig[rk] > bound * (1 + 1e-10) + rank_tol * top:
            check = False
        lit = C_hat * (D - R - kk + 2) / math.factorial(R - kk + 1)
        if R < len(sig) and sig[R] > lit * (1 + 1e-10):
            literal = False
    return {
        "slice_norms": norms,
        "C_hat": C_hat,
        "decay_ratio": ratio,
        "sigma": sig,
        "rank": rank,
        "sv_bound_check": check,
        "sv_bound_literal": literal,
    }
