"""Tensor-structured functions and their algebra.

A block of ``k`` functions is represented as

    Psi(theta) = sum_i theta^i (Z a[i].T + W b[i].T) + Y exp_tail(theta S) C,

where row ``i`` of the tensors holds the coefficients of ``theta^i`` for
``i = 0 .. d-1`` and the exponential tail ``sum_{i>=d} theta^i S^i / i!``
starts at the first degree not covered by the polynomial rows. ``[Z, W]``
has orthonormal columns and ``span(Y) = span(W)``. With ``p = 0`` only
polynomials are represented.

Tensors are stored with shape ``(d, k, r)`` (C order) so the unfolding
block ``A_i = a[i].T`` is a view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SeriesDivergence

__all__ = [
    "TensorBasis",
    "polynomial_basis",
    "constant_function",
    "inner_products",
    "norm",
    "linear_combine",
    "raise_degree",
    "evaluate",
    "coefficient_stack",
    "memory_footprint",
    "exp_tail_gram",
    "exp_tail_start",
]

TAIL_TOL = 1e-18
TAIL_CAP = 500


@dataclass
class TensorBasis:
    """Coefficient representation of ``k`` tensor-structured functions."""

    Z: np.ndarray
    W: np.ndarray
    Y: np.ndarray
    S: np.ndarray
    a: np.ndarray
    b: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        d, k, r = self.a.shape
        if self.Z.shape[1] != r:
            raise ValueError(f"Z has {self.Z.shape[1]} columns but a has {r} directions")
        if self.b.shape[:2] != (d, k) or self.b.shape[2] != self.W.shape[1]:
            raise ValueError("b must have shape (d, k, q) matching a and W")
        p = self.Y.shape[1]
        if self.S.shape != (p, p) or self.C.shape != (p, k):
            raise ValueError("S must be p x p and C p x k")

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def d(self) -> int:
        return self.a.shape[0]

    @property
    def k(self) -> int:
        return self.a.shape[1]

    @property
    def r(self) -> int:
        return self.a.shape[2]

    @property
    def q(self) -> int:
        return self.b.shape[2]

    @property
    def p(self) -> int:
        return self.Y.shape[1]

    @property
    def polynomial_only(self) -> bool:
        return self.p == 0 and self.q == 0

    def column(self, j) -> "TensorBasis":
        """Single column (or column slice) sharing the directions."""
        sl = slice(j, j + 1) if isinstance(j, (int, np.integer)) else j
        return TensorBasis(self.Z, self.W, self.Y, self.S, self.a[:, sl, :], self.b[:, sl, :], self.C[:, sl])

    def with_coefficients(self, a, b, C) -> "TensorBasis":
        return TensorBasis(self.Z, self.W, self.Y, self.S, a, b, C)

    def copy(self) -> "TensorBasis":
        return TensorBasis(*(x.copy() for x in (self.Z, self.W, self.Y, self.S, self.a, self.b, self.C)))


def polynomial_basis(Z: np.ndarray, a: np.ndarray) -> TensorBasis:
    n = Z.shape[0]
    k = a.shape[1]
    return TensorBasis(
        Z=np.asarray(Z, dtype=complex),
        W=np.zeros((n, 0), dtype=complex),
        Y=np.zeros((n, 0), dtype=complex),
        S=np.zeros((0, 0), dtype=complex),
        a=np.asarray(a, dtype=complex),
        b=np.zeros(a.shape[:2] + (0,), dtype=complex),
        C=np.zeros((0, k), dtype=complex),
    )


def constant_function(v: np.ndarray) -> TensorBasis:
    """The normalized constant function ``psi(theta) = v / ||v||``."""
    v = np.asarray(v, dtype=complex)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("start vector must be nonzero")
    return polynomial_basis((v / nv)[:, None], np.ones((1, 1, 1), dtype=complex))


def exp_tail_start(S: np.ndarray, X: np.ndarray, start: int) -> np.ndarray:
    """``S^start X / start!`` computed by repeated scaled products."""
    out = X
    for i in range(1, start + 1):
        out = S @ out / i
    return out


def exp_tail_gram(Y, S, C1, C2, start, tol=TAIL_TOL, cap=TAIL_CAP) -> np.ndarray:
    """``sum_{i>=start} (Y S^i C1 / i!)^H (Y S^i C2 / i!)``.

    Terms are dropped once ``i`` is past the growth phase (``i > ||S||``)
    and three consecutive term bounds fall below ``tol``.
    """
    p = S.shape[0]
    out = np.zeros((C1.shape[1], C2.shape[1]), dtype=complex)
    if p == 0 or not C1.size or not C2.size:
        return out
    G = Y.conj().T @ Y
    gnorm = np.linalg.norm(G, 2)
    snorm = np.linalg.norm(S, 2)
    U = exp_tail_start(S, C1, start)
    u = exp_tail_start(S, C2, start)
    small = 0
    i = start
    while True:
        out += U.conj().T @ (G @ u)
        bound = gnorm * np.linalg.norm(U) * np.linalg.norm(u)
        if bound < tol and i + 1 > snorm:
            small += 1
            if small >= 3:
                return out
        else:
            small = 0
        i += 1
        if i - start > cap:
            raise SeriesDivergence(f"exponential tail not converged after {cap} terms")
        U = S @ U / i
        u = S @ u / i


def inner_products(basis: TensorBasis, phi: TensorBasis) -> np.ndarray:
    """``h_j = <psi_j, phi>`` for every column ``psi_j`` of ``basis``.

    ``phi`` may hold several columns, in which case the result is the
    ``k x k'`` matrix of inner products.
    """
    if phi.d != basis.d or phi.r != basis.r or phi.q != basis.q or phi.p != basis.p:
        raise ValueError("phi must share the directions and degree of the basis")
    h = np.einsum("ijl,iml->jm", basis.a.conj(), phi.a)
    if basis.q:
        h += np.einsum("ijl,iml->jm", basis.b.conj(), phi.b)
    if basis.p:
        h += exp_tail_gram(basis.Y, basis.S, basis.C, phi.C, basis.d)
    return h[:, 0] if phi.k == 1 else h


def norm(phi: TensorBasis) -> float:
    """Norm of a single tensor-structured function."""
    if phi.k != 1:
        raise ValueError("norm expects a single column")
    val = np.vdot(phi.a, phi.a).real + np.vdot(phi.b, phi.b).real
    if phi.p:
        val += exp_tail_gram(phi.Y, phi.S, phi.C, phi.C, phi.d)[0, 0].real
    return math.sqrt(max(val, 0.0))


def linear_combine(basis: TensorBasis, M: np.ndarray) -> TensorBasis:
    """Coefficients of ``Psi(theta) M`` on the same directions."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != basis.k:
        raise ValueError(f"combination matrix must have {basis.k} rows, got shape {M.shape}")
    a = np.einsum("ijl,jm->iml", basis.a, M)
    b = np.einsum("ijl,jm->iml", basis.b, M)
    return basis.with_coefficients(a, b, basis.C @ M)


def raise_degree(basis: TensorBasis) -> TensorBasis:
    """Move the ``theta^d`` term of the exponential tail into the polynomial rows."""
    d, k, r = basis.a.shape
    a = np.concatenate([basis.a, np.zeros((1, k, r), dtype=complex)], axis=0)
    if basis.q:
        E = basis.W.conj().T @ (basis.Y @ exp_tail_start(basis.S, basis.C, d))
        b = np.concatenate([basis.b, E.T[None, :, :]], axis=0)
    else:
        b = np.zeros((d + 1, k, 0), dtype=complex)
    return basis.with_coefficients(a, b, basis.C)


def coefficient_stack(basis: TensorBasis, degree: int | None = None) -> np.ndarray:
    """Materialized polynomial coefficients ``X_i`` (shape ``(degree, n, k)``).

    Rows past the polynomial part are filled from the exponential tail.
    """
    degree = basis.d if degree is None else degree
    out = np.zeros((degree, basis.n, basis.k), dtype=complex)
    top = min(degree, basis.d)
    for i in range(top):
        out[i] = basis.Z @ basis.a[i].T
        if basis.q:
            out[i] += basis.W @ basis.b[i].T
    if basis.p and degree > basis.d:
        T = exp_tail_start(basis.S, basis.C, basis.d)
        for i in range(basis.d, degree):
            if i > basis.d:
                T = basis.S @ T / i
            out[i] = basis.Y @ T
    return out


def evaluate(basis: TensorBasis, theta: complex) -> np.ndarray:
    """Point values ``Psi(theta)`` as an ``n x k`` matrix."""
    out = np.zeros((basis.n, basis.k), dtype=complex)
    for i in range(basis.d - 1, -1, -1):
        row = basis.Z @ basis.a[i].T
        if basis.q:
            row = row + basis.W @ basis.b[i].T
        out = out * theta + row
    if basis.p and theta != 0:
        T = exp_tail_start(theta * basis.S, basis.C, basis.d)
        acc = T.copy()
        i = basis.d
        small = 0
        while small < 3:
            i += 1
            if i - basis.d > TAIL_CAP:
                raise SeriesDivergence("exponential tail not converged")
            T = theta * basis.S @ T / i
            acc += T
            if np.linalg.norm(T) <= 1e-17 * max(np.linalg.norm(acc), 1e-300) and i > abs(theta) * np.linalg.norm(basis.S, 2):
                small += 1
            else:
                small = 0
        out += basis.Y @ acc
    return out


def memory_footprint(basis: TensorBasis) -> int:
    """Bytes held by the seven arrays of the representation."""
    return int(sum(x.size * x.itemsize for x in (basis.Z, basis.W, basis.Y, basis.S, basis.a, basis.b, basis.C)))
