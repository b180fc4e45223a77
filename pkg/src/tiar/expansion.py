"""Arnoldi expansion of TIAR factorizations ``B Psi_k = Psi_{k+1} Hbar_k``."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .basis import (
    TensorBasis,
    coefficient_stack,
    constant_function,
    exp_tail_gram,
    inner_products,
    linear_combine,
    norm,
    raise_degree,
)
from .errors import Breakdown, SingularS
from .nep import MdVariant, NepProblem

__all__ = [
    "TiarFactorization",
    "start_factorization",
    "operator_action",
    "apply_operator",
    "orthogonalize",
    "expand",
    "residual_check",
]

log = logging.getLogger(__name__)

DEFLATION_TOL = 1e-14
BREAKDOWN_TOL = 1e-12
DGKS_ETA = 1 / np.sqrt(2)
MAX_PASSES = 5


@dataclass
class TiarFactorization:
    """Basis with ``k + 1`` columns and a ``(k+1) x k`` Hessenberg matrix.

    ``discarded`` accumulates the norms thrown away by locking, so the
    factorization residual is expected to stay below roundoff plus this
    budget.
    """

    basis: TensorBasis
    H: np.ndarray
    discarded: float = 0.0

    def __post_init__(self):
        if self.H.shape != (self.basis.k, self.basis.k - 1):
            raise ValueError(f"H has shape {self.H.shape}, expected {(self.basis.k, self.basis.k - 1)}")

    @property
    def k(self) -> int:
        return self.H.shape[1]


def start_factorization(v: np.ndarray) -> TiarFactorization:
    """Length-0 factorization holding the normalized constant function ``v``."""
    return TiarFactorization(constant_function(v), np.zeros((1, 0), dtype=complex))


def operator_action(basis: TensorBasis, problem: NepProblem, variant=MdVariant.SUM_FORM, sign: float = -1.0):
    """Apply the operator to every column of ``basis``.

    Returns ``(z, a_up, b_up, c_up)``: the constant terms ``z`` (``n x k``),
    the shifted coefficient tensors with ``d + 1`` rows (row 0 left at
    zero) and the new exponential coefficients ``S^{-1} C``. ``sign`` is
    exposed only so the oracle harness can run a deliberately wrong variant.
    """
    d, k, r = basis.a.shape
    q, p = basis.q, basis.p
    scal = 1.0 / np.arange(1, d + 1)
    a_up = np.zeros((d + 1, k, r), dtype=complex)
    a_up[1:] = basis.a * scal[:, None, None]
    b_up = np.zeros((d + 1, k, q), dtype=complex)
    if q:
        b_up[1:] = basis.b * scal[:, None, None]
    if p:
        if np.linalg.cond(basis.S) > 1e14:
            raise SingularS("exponent matrix S is numerically singular")
        c_up = np.linalg.solve(basis.S, basis.C)
    else:
        c_up = np.zeros((0, k), dtype=complex)

    blocks = []
    for t in range(len(problem.terms)):
        f = np.array([problem.terms[t].derivative(i) for i in range(1, d + 1)], dtype=complex)
        if not np.any(f):
            blocks.append(None)
            continue
        alpha = np.tensordot(f, a_up[1:], axes=(0, 0))
        x = basis.Z @ alpha.T
        if q:
            x = x + basis.W @ np.tensordot(f, b_up[1:], axes=(0, 0)).T
        blocks.append(x)
    acc = problem.combine_apply(blocks)
    if acc is None:
        acc = np.zeros((basis.n, k), dtype=complex)
    if p:
        acc = acc + problem.md_apply(d, basis.Y, basis.S, c_up, variant)
    z = sign * problem.m0_solve(acc)
    return z, a_up, b_up, c_up


def apply_operator(
    basis: TensorBasis,
    col: int,
    problem: NepProblem,
    variant=MdVariant.SUM_FORM,
    sign: float = -1.0,
    deflation_tol: float = DEFLATION_TOL,
):
    """Image of column ``col`` under the operator, as a one-column basis.

    The constant term is orthogonalized twice against ``[Z, W]``; when it
    has a component outside that span a new direction is appended to ``Z``.
    Returns ``(phi, deflated)`` where ``deflated`` reports that no new
    direction was needed.
    """
    z, a_up, b_up, c_up = operator_action(basis.column(col), problem, variant, sign)
    z = z[:, 0]
    r, q = basis.r, basis.q
    z0 = np.linalg.norm(z)
    alpha = np.zeros(r, dtype=complex)
    gamma = np.zeros(q, dtype=complex)
    for _ in range(2):
        ca = basis.Z.conj().T @ z
        cg = basis.W.conj().T @ z
        z = z - basis.Z @ ca - basis.W @ cg
        alpha += ca
        gamma += cg
    nu = np.linalg.norm(z)
    deflated = z0 == 0 or nu <= deflation_tol * z0
    if deflated:
        log.debug("deflated direction: |z_perp| = %.3e of %.3e", nu, z0)
        Z = basis.Z
        a_up[0, 0, :] = alpha
    else:
        Z = np.concatenate([basis.Z, (z / nu)[:, None]], axis=1)
        a_up = np.concatenate([a_up, np.zeros(a_up.shape[:2] + (1,), dtype=complex)], axis=2)
        a_up[0, 0, :r] = alpha
        a_up[0, 0, r] = nu
    if q:
        b_up[0, 0, :] = gamma
    phi = TensorBasis(Z, basis.W, basis.Y, basis.S, a_up, b_up, c_up)
    return phi, deflated


def _subtract(phi: TensorBasis, basis: TensorBasis, h: np.ndarray) -> TensorBasis:
    a = phi.a - np.einsum("ijl,j->il", basis.a, h)[:, None, :]
    b = phi.b - np.einsum("ijl,j->il", basis.b, h)[:, None, :]
    C = phi.C - (basis.C @ h)[:, None]
    return phi.with_coefficients(a, b, C)


def orthogonalize(basis: TensorBasis, phi: TensorBasis, breakdown_tol: float = BREAKDOWN_TOL):
    """Gram-Schmidt of ``phi`` against the columns of ``basis``.

    Two passes are always made; further passes follow while a pass removes
    more than ``1 - 1/sqrt(2)`` of the norm (the DGKS test), which keeps
    the basis orthonormal near a breakdown. Returns
    ``(h, beta, phi_perp / beta)``. Raises :class:`Breakdown` (with ``h``
    and ``beta`` attached) when ``beta <= breakdown_tol * ||phi||``.
    """
    nphi = norm(phi)
    h = np.zeros(basis.k, dtype=complex)
    prev = nphi
    for npass in range(MAX_PASSES):
        g = inner_products(basis, phi)
        phi = _subtract(phi, basis, g)
        h += g
        beta = norm(phi)
        if npass >= 1 and beta > DGKS_ETA * prev:
            break
        prev = beta
    if beta <= breakdown_tol * nphi or beta == 0:
        exc = Breakdown(f"orthogonal complement has norm {beta:.3e} (input norm {nphi:.3e})")
        exc.h, exc.beta = h, beta
        raise exc
    phi = phi.with_coefficients(phi.a / beta, phi.b / beta, phi.C / beta)
    return h, beta, phi


def _append_column(basis: TensorBasis, phi: TensorBasis) -> TensorBasis:
    return TensorBasis(
        phi.Z,
        basis.W,
        basis.Y,
        basis.S,
        np.concatenate([basis.a, phi.a], axis=1),
        np.concatenate([basis.b, phi.b], axis=1),
        np.concatenate([basis.C, phi.C], axis=1),
    )


def expand(
    fact: TiarFactorization,
    m: int,
    problem: NepProblem,
    variant=MdVariant.SUM_FORM,
    sign: float = -1.0,
) -> TiarFactorization:
    """Extend ``fact`` to length ``m`` by Arnoldi steps.

    Each step adds exactly one polynomial degree and at most one new
    direction to ``Z``. On breakdown the raised :class:`Breakdown` carries
    the factorization built so far and the square Hessenberg matrix whose
    eigenvalues are exact Ritz values of an invariant subspace.
    """
    if m < fact.k:
        raise ValueError(f"target length {m} is shorter than the factorization ({fact.k})")
    basis, H = fact.basis, fact.H
    for k in range(fact.k, m):
        phi, _ = apply_operator(basis, k, problem, variant, sign)
        if phi.r > basis.r:
            pad = np.zeros(basis.a.shape[:2] + (phi.r - basis.r,), dtype=complex)
            basis = TensorBasis(phi.Z, basis.W, basis.Y, basis.S, np.concatenate([basis.a, pad], axis=2),
                                basis.b, basis.C)
        basis = raise_degree(basis)
        try:
            h, beta, phi = orthogonalize(basis, phi)
        except Breakdown as exc:
            Hsq = np.zeros((k + 1, k + 1), dtype=complex)
            Hsq[:, :k] = H
            Hsq[:, k] = exc.h
            exc.factorization = TiarFactorization(basis, H, fact.discarded)
            exc.hessenberg = Hsq
            raise
        Hn = np.zeros((k + 2, k + 1), dtype=complex)
        Hn[: k + 1, :k] = H
        Hn[: k + 1, k] = h
        Hn[k + 1, k] = beta
        H = Hn
        basis = _append_column(basis, phi)
    return TiarFactorization(basis, H, fact.discarded)


def residual_check(
    fact: TiarFactorization,
    problem: NepProblem,
    variant=MdVariant.SUM_FORM,
    basis: TensorBasis | None = None,
) -> float:
    """``||B Psi_k - Psi_{k+1} Hbar_k||`` measured on materialized coefficients.

    ``basis`` overrides ``fact.basis`` so the residual of a perturbation
    (for example the part discarded by a compression) can be measured with
    the same Hessenberg matrix.
    """
    basis = fact.basis if basis is None else basis
    k = fact.k
    if k == 0:
        return 0.0
    d = basis.d
    head = basis.column(slice(0, k))
    z, a_up, b_up, c_up = operator_action(head, problem, variant)
    lhs_basis = TensorBasis(basis.Z, basis.W, basis.Y, basis.S, a_up, b_up, c_up)
    lhs = coefficient_stack(lhs_basis)
    lhs[0] += z
    rhs_basis = linear_combine(raise_degree(basis), fact.H)
    rhs = coefficient_stack(rhs_basis)
    total = float(np.sum(np.abs(lhs - rhs) ** 2))
    if basis.p:
        D = c_up - rhs_basis.C
        total += float(np.trace(exp_tail_gram(basis.Y, basis.S, D, D, d + 1)).real)
    return float(np.sqrt(max(total, 0.0)))
