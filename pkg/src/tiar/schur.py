"""Dense restart machinery: ordered Schur forms, Ritz pairs, Householder restoration, locking."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import LockRejected, ReorderingFailure

__all__ = [
    "RitzClass",
    "RitzReport",
    "ordered_schur",
    "ritz_extract",
    "householder_restore",
    "lock",
    "select_wanted",
]

SWAP_TOL = 1e-10


class RitzClass(enum.IntEnum):
    """Groups of the ordered Schur form, in their final order."""

    CONVERGED = 0
    WANTED = 1
    UNWANTED = 2


@dataclass
class RitzReport:
    """Ritz pairs of the square part ``H_k`` of a factorization.

    ``residual_estimates[j] = |beta_k * y_j[-1]|`` with unit eigenvectors
    ``y_j`` (the columns of ``vectors``); ``nep_values`` holds ``1 / mu`` and
    is NaN for a zero Ritz value.
    """

    values: np.ndarray
    nep_values: np.ndarray
    residual_estimates: np.ndarray
    converged_flags: np.ndarray
    vectors: np.ndarray
    beta: float


def _swap(T: np.ndarray, P: np.ndarray, i: int, scale: float):
    """Exchange the diagonal entries ``T[i, i]`` and ``T[i+1, i+1]`` by a rotation."""
    t11, t12, t22 = T[i, i], T[i, i + 1], T[i + 1, i + 1]
    v = np.array([t12, t22 - t11])
    nv = np.linalg.norm(v)
    if nv == 0:
        return
    v = v / nv
    G = np.array([[v[0], -np.conj(v[1])], [v[1], np.conj(v[0])]])
    T[:, i:i + 2] = T[:, i:i + 2] @ G
    T[i:i + 2, :] = G.conj().T @ T[i:i + 2, :]
    P[:, i:i + 2] = P[:, i:i + 2] @ G
    if abs(T[i + 1, i]) > SWAP_TOL * scale:
        raise ReorderingFailure(f"swap at position {i} left a subdiagonal of {abs(T[i + 1, i]):.3e}")
    T[i + 1, i] = 0.0


def ordered_schur(H: np.ndarray, classify: Callable[[complex], RitzClass] | Sequence[RitzClass]):
    """Complex Schur form ``P^H H P = R`` ordered converged, wanted, unwanted.

    ``classify`` is either a function of the eigenvalue or a sequence with one
    class per eigenvalue of the initial (unordered) Schur form diagonal.
    Adjacent entries are exchanged by unitary 2x2 rotations with a stable
    bubble sort, so the relative order inside each group is kept.

    Returns ``(P, R, (p_locked, p))`` where ``p_locked`` counts the
    converged group and ``p`` the converged and wanted groups together.
    """
    H = np.asarray(H, dtype=complex)
    m = H.shape[0]
    if H.shape != (m, m):
        raise ValueError("ordered_schur needs a square matrix")
    if m == 0:
        return np.eye(0, dtype=complex), H.copy(), (0, 0)
    R, P = scipy.linalg.schur(H, output="complex")
    R = np.triu(R)
    diag = np.diag(R)
    if callable(classify):
        groups = [RitzClass(classify(mu)) for mu in diag]
    else:
        groups = [RitzClass(g) for g in classify]
        if len(groups) != m:
            raise ValueError("one class per eigenvalue is required")
    scale = max(np.linalg.norm(H), np.finfo(float).tiny)
    changed = True
    while changed:
        changed = False
        for i in range(m - 1):
            if groups[i] > groups[i + 1]:
                _swap(R, P, i, scale)
                groups[i], groups[i + 1] = groups[i + 1], groups[i]
                changed = True
    p_locked = sum(g is RitzClass.CONVERGED for g in groups)
    p = p_locked + sum(g is RitzClass.WANTED for g in groups)
    return P, np.triu(R), (p_locked, p)


def ritz_extract(fact, conv_tol: float = 1e-10) -> RitzReport:
    """Ritz values and convergence estimates of a factorization of length ``k >= 1``."""
    k = fact.k
    if k < 1:
        raise ValueError("Ritz extraction needs a factorization of length at least 1")
    Hk = fact.H[:k, :k]
    beta = float(abs(fact.H[k, k - 1]))
    mu, Yv = np.linalg.eig(Hk)
    Yv = Yv / np.linalg.norm(Yv, axis=0)
    est = beta * np.abs(Yv[-1, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = np.where(mu != 0, 1.0 / np.where(mu != 0, mu, 1.0), np.nan)
    flags = est <= conv_tol * np.abs(mu)
    return RitzReport(mu, lam, est, flags, Yv, beta)


def select_wanted(values: np.ndarray, p: int, rel_tie: float = 1e-6) -> np.ndarray:
    """Indices of the ``p`` Ritz values of largest modulus.

    Values whose moduli agree to ``rel_tie`` are ordered with non-negative
    imaginary part of ``1 / mu`` first, then by the real part, so that a
    cut through a conjugate pair is deterministic.
    """
    mods = np.abs(values)
    by_mod = np.argsort(-mods, kind="stable")
    group = np.zeros(len(values), dtype=int)
    for prev, j in zip(by_mod[:-1], by_mod[1:]):
        tied = mods[prev] - mods[j] <= rel_tie * mods[prev]
        group[j] = group[prev] + (0 if tied else 1)
    order = sorted(range(len(values)), key=lambda j: (group[j], values[j].imag > 0, -values[j].real))
    return np.array(order[:p], dtype=int)


def _reflector(x: np.ndarray) -> np.ndarray:
    """Householder ``Hh`` with ``x @ Hh`` a multiple of the last unit row."""
    y = x.conj()
    ny = np.linalg.norm(y)
    Hh = np.eye(len(x), dtype=complex)
    if ny == 0 or np.linalg.norm(y[:-1]) == 0:
        return Hh
    phase = y[-1] / abs(y[-1]) if y[-1] != 0 else 1.0
    v = y.astype(complex).copy()
    v[-1] += phase * ny
    return Hh - 2.0 * np.outer(v, v.conj()) / np.vdot(v, v).real


def householder_restore(R22: np.ndarray, a2: np.ndarray):
    """Unitary ``Q`` bringing ``[R22; a2]`` back to Hessenberg form.

    ``a2`` is the trailing part of the last row of the Krylov-Schur
    factorization. On return ``Q^H R22 Q = H`` is upper Hessenberg with a
    real non-negative subdiagonal and ``a2 Q = beta e_last^T`` with
    ``beta = ||a2||``. Returns ``(Q, H, beta)``.
    """
    R22 = np.asarray(R22, dtype=complex)
    a2 = np.asarray(a2, dtype=complex).ravel()
    q = R22.shape[0]
    if q == 0:
        return np.eye(0, dtype=complex), R22.copy(), 0.0
    K = np.vstack([R22, a2[None, :]])
    Q = np.eye(q, dtype=complex)
    for rho in range(q, 1, -1):
        Hh = _reflector(K[rho, :rho])
        K[:, :rho] = K[:, :rho] @ Hh
        K[:rho, :] = Hh.conj().T @ K[:rho, :]
        Q[:, :rho] = Q[:, :rho] @ Hh
    # diagonal phases: last row and subdiagonal real non-negative
    D = np.ones(q, dtype=complex)
    x = K[q, q - 1]
    D[q - 1] = np.conj(x) / abs(x) if x != 0 else 1.0
    for j in range(q - 2, -1, -1):
        x = np.conj(D[j + 1]) * K[j + 1, j]
        D[j] = np.conj(x) / abs(x) if x != 0 else 1.0
    K = (K * D[None, :])
    K[:q] = np.conj(D)[:, None] * K[:q]
    Q = Q * D[None, :]
    Hn = K[:q].copy()
    Hn[np.tril_indices(q, -2)] = 0.0
    for j in range(q - 1):
        Hn[j + 1, j] = Hn[j + 1, j].real
    beta = float(abs(K[q, q - 1]))
    return Q, Hn, beta


def lock(last_row: np.ndarray, p_locked: int, h_norm: float, lock_tol: float = 1e-8):
    """Zero the coupling ``a1 = last_row[:p_locked]`` of the converged block.

    Returns ``(row, discarded)`` with ``discarded = ||a1||``. Raises
    :class:`LockRejected` when ``||a1|| > lock_tol * h_norm``.
    """
    row = np.array(last_row, dtype=complex, copy=True)
    a1 = row[:p_locked]
    discarded = float(np.linalg.norm(a1))
    if discarded > lock_tol * h_norm:
        raise LockRejected(f"coupling norm {discarded:.3e} exceeds {lock_tol:.1e} * {h_norm:.3e}")
    row[:p_locked] = 0.0
    return row, discarded
