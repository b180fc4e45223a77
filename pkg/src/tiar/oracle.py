"""Finite companion linearization and classical Arnoldi, used as an independent check.

Arnoldi on the block companion matrix ``C_{k+1}`` started from a lifted
constant vector produces the same Hessenberg matrix as the tensor expansion
started from the corresponding constant function.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .nep import NepProblem

__all__ = ["companion_matrix", "arnoldi", "lifted_start"]


def companion_matrix(problem: NepProblem, blocks: int) -> np.ndarray:
    """Dense ``C_N`` acting on stacked Taylor coefficients ``(x_0, ..., x_{N-1})``.

    ``(C x)_j = x_{j-1} / j`` for ``j >= 1`` and
    ``(C x)_0 = -M_0^{-1} sum_{j>=1} M_j (C x)_j``.
    """
    n = problem.n
    N = blocks
    C = np.zeros((n * N, n * N), dtype=complex)
    for j in range(1, N):
        C[j * n:(j + 1) * n, (j - 1) * n:j * n] = np.eye(n) / j
    for j in range(1, N):
        Mj = problem.derivative_matrix(j)
        Mj = Mj.toarray() if sp.issparse(Mj) else Mj
        if not np.any(Mj):
            continue
        C[:n, (j - 1) * n:j * n] = -problem.m0_solve(Mj) / j
    return C


def lifted_start(v: np.ndarray, blocks: int) -> np.ndarray:
    x = np.zeros(v.shape[0] * blocks, dtype=complex)
    x[: v.shape[0]] = v / np.linalg.norm(v)
    return x


def arnoldi(A: np.ndarray, v: np.ndarray, k: int):
    """Classical Arnoldi with one full reorthogonalization pass.

    Returns ``(V, H)`` with ``V`` of shape ``(N, k+1)`` and ``H`` of shape
    ``(k+1, k)`` satisfying ``A V[:, :k] = V H``.
    """
    N = A.shape[0]
    V = np.zeros((N, k + 1), dtype=complex)
    H = np.zeros((k + 1, k), dtype=complex)
    V[:, 0] = v / np.linalg.norm(v)
    for j in range(k):
        w = A @ V[:, j]
        for _ in range(2):
            h = V[:, : j + 1].conj().T @ w
            w = w - V[:, : j + 1] @ h
            H[: j + 1, j] += h
        H[j + 1, j] = np.linalg.norm(w)
        V[:, j + 1] = w / H[j + 1, j]
    return V, H
