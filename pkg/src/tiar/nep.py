"""Nonlinear eigenvalue problems ``M(lam) v = 0`` in split form.

A problem is stored as a short list of terms ``T_i f_i(lam)``. Each term
knows how to evaluate its scalar function, the matrix function ``f_i(S)``
and the Taylor derivatives ``f_i^{(j)}(0)``, which is everything the
Krylov expansion needs: solves with ``M(0)``, products with the derivative
matrices ``M_j = M^{(j)}(0)`` and the tail operator ``M_d(Y, S)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SeriesDivergence, SingularM0, SpectrumOutsideDisk

__all__ = [
    "MdVariant",
    "NepTerm",
    "NepProblem",
    "DelayNep",
    "monomial",
    "exponential",
    "polynomial_nep",
    "delay_nep",
    "dep_grid",
    "dep_random",
    "load_matrix_market",
    "dep_from_matrix_market",
]

_DENSE_NORM_LIMIT = 1500


class MdVariant(str, enum.Enum):
    """How the tail operator ``M_d(Y, S)`` is evaluated."""

    SUM_FORM = "sum"
    SERIES = "series"


@dataclass(frozen=True)
class NepTerm:
    """One product ``T f(lam)`` of the split form.

    ``derivative(j)`` must return ``f^{(j)}(0)``. ``matfun`` may be None when
    the matrix function is unavailable; the sum-form tail is then disabled.
    """

    matrix: object
    scalar: Callable[[complex], complex]
    derivative: Callable[[int], complex]
    matfun: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = ""


def monomial(power: int) -> dict:
    """Keyword arguments of a term with ``f(lam) = lam**power``."""
    fact = math.factorial(power)

    def deriv(j: int) -> complex:
        return float(fact) if j == power else 0.0

    def matfun(S):
        return np.linalg.matrix_power(S, power) if S.size else S.copy()

    return dict(scalar=lambda lam: lam**power, derivative=deriv, matfun=matfun, label=f"lam^{power}")


def exponential(rate: complex) -> dict:
    """Keyword arguments of a term with ``f(lam) = exp(rate * lam)``."""

    def matfun(S):
        return scipy.linalg.expm(rate * S) if S.size else S.copy()

    return dict(
        scalar=lambda lam: np.exp(rate * lam),
        derivative=lambda j: rate**j,
        matfun=matfun,
        label=f"exp({rate}*lam)",
    )


def _as_operator(A):
    if sp.issparse(A):
        return sp.csc_matrix(A, dtype=complex)
    return np.asarray(A, dtype=complex)


def _spectral_norm(A) -> float:
    n = A.shape[0]
    if n == 0:
        return 0.0
    if sp.issparse(A):
        if A.nnz == 0:
            return 0.0
        if n <= _DENSE_NORM_LIMIT:
            return float(np.linalg.norm(A.toarray(), 2))
        s = spla.svds(A, k=1, return_singular_vectors=False, tol=1e-10, random_state=0)
        return float(s[0]) * (1.0 + 1e-8)
    return float(np.linalg.norm(A, 2))


def _fro(A) -> float:
    if sp.issparse(A):
        return float(sp.linalg.norm(A, "fro"))
    return float(np.linalg.norm(A))


class NepProblem:
    """Analytic matrix function ``M(lam) = sum_i T_i f_i(lam)`` on a disk.

    Parameters
    ----------
    terms
        The split form. Matrices may be dense arrays or scipy sparse matrices.
    radius
        Radius of the disk around the origin where ``M`` is analytic
        (``inf`` for entire functions).
    name
        Free-form label used in reports.

    The factorization of ``M(0)`` is computed once at construction and is
    read-only afterwards, so instances can be shared between threads.
    """

    def __init__(self, terms: Sequence[NepTerm], radius: float = math.inf, name: str = "nep"):
        if not terms:
            raise ValueError("a NEP needs at least one term")
        self.terms = tuple(
            NepTerm(_as_operator(t.matrix), t.scalar, t.derivative, t.matfun, t.label) for t in terms
        )
        shapes = {t.matrix.shape for t in self.terms}
        if len(shapes) != 1:
            raise ValueError(f"term matrices have inconsistent shapes {shapes}")
        (shape,) = shapes
        if shape[0] != shape[1]:
            raise ValueError("term matrices must be square")
        if not radius > 0:
            raise ValueError("analyticity radius must be positive")
        self.n = shape[0]
        self.radius = float(radius)
        self.name = name
        self._sparse = any(sp.issparse(t.matrix) for t in self.terms)
        self._norm_cache: dict[tuple, float] = {}
        self._factorize_m0()

    # -- assembly ---------------------------------------------------------

    def _combine(self, coeffs):
        if self._sparse:
            out = sp.csc_matrix((self.n, self.n), dtype=complex)
            for c, t in zip(coeffs, self.terms):
                if c != 0:
                    out = out + c * sp.csc_matrix(t.matrix)
            return out.tocsc()
        out = np.zeros((self.n, self.n), dtype=complex)
        for c, t in zip(coeffs, self.terms):
            if c != 0:
                out += c * t.matrix
        return out

    def evaluate(self, lam: complex):
        """Assemble ``M(lam)``."""
        return self._combine([t.scalar(lam) for t in self.terms])

    def derivative_coefficients(self, j: int) -> np.ndarray:
        return np.array([t.derivative(j) for t in self.terms], dtype=complex)

    def derivative_matrix(self, j: int):
        """Assemble ``M_j = M^{(j)}(0)``."""
        return self._combine(self.derivative_coefficients(j))

    @property
    def has_sum_form(self) -> bool:
        return all(t.matfun is not None for t in self.terms)

    @cached_property
    def term_fro_norms(self) -> np.ndarray:
        return np.array([_fro(t.matrix) for t in self.terms])

    @cached_property
    def term_norms(self) -> np.ndarray:
        return np.array([_spectral_norm(t.matrix) for t in self.terms])

    # -- M(0) ---------------------------------------------------------------

    def _factorize_m0(self):
        M0 = self.derivative_matrix(0)
        scale = _fro(M0)
        thresh = self.n * np.finfo(float).eps * scale
        if self._sparse:
            try:
                self._lu = spla.splu(sp.csc_matrix(M0))
            except RuntimeError as exc:
                raise SingularM0(f"M(0) is singular: {exc}") from exc
            pivots = np.abs(self._lu.U.diagonal())
        else:
            with warnings.catch_warnings():
                # singularity is reported below with a clearer error
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                self._lu = scipy.linalg.lu_factor(M0, check_finite=True)
            pivots = np.abs(np.diag(self._lu[0]))
        if scale == 0 or pivots.min() <= thresh:
            raise SingularM0(f"M(0) is numerically singular (smallest pivot {pivots.min():.3e})")
        self._m0 = M0

    def m0_solve(self, X: np.ndarray) -> np.ndarray:
        """Return ``V`` with ``M(0) V = X``."""
        X = np.asarray(X, dtype=complex)
        if X.size == 0:
            return X.copy()
        if self._sparse:
            return self._lu.solve(X)
        return scipy.linalg.lu_solve(self._lu, X)

    def m0_solve_adjoint(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=complex)
        if self._sparse:
            return self._lu.solve(X, trans="H")
        return scipy.linalg.lu_solve(self._lu, X, trans=2)

    @cached_property
    def m0_inverse_norm(self) -> float:
        """``||M(0)^{-1}||_2``: exact for small problems, inverse power steps otherwise."""
        if self.n <= _DENSE_NORM_LIMIT:
            M0 = self._m0.toarray() if sp.issparse(self._m0) else self._m0
            s = np.linalg.svd(M0, compute_uv=False)
            return float(1.0 / s[-1])
        rng = np.random.default_rng(0)
        v = rng.standard_normal(self.n) + 0j
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(30):
            w = self.m0_solve_adjoint(self.m0_solve(v))
            new = math.sqrt(np.linalg.norm(w))
            v = w / np.linalg.norm(w)
            if abs(new - est) <= 1e-6 * new:
                est = new
                break
            est = new
        return est * 1.01

    # -- derivative actions ---------------------------------------------------

    def mi_apply(self, i: int, X: np.ndarray) -> np.ndarray:
        """Return ``M^{(i)}(0) X``."""
        if i < 0:
            raise ValueError("derivative order must be non-negative")
        X = np.asarray(X, dtype=complex)
        out = np.zeros(X.shape, dtype=complex)
        for c, t in zip(self.derivative_coefficients(i), self.terms):
            if c != 0:
                out += c * (t.matrix @ X)
        return out

    def combine_apply(self, coeff_vectors: Sequence[np.ndarray]) -> np.ndarray:
        """Return ``sum_t T_t X_t`` for one block ``X_t`` per term."""
        out = None
        for t, X in zip(self.terms, coeff_vectors):
            if X is None:
                continue
            y = t.matrix @ X
            out = y if out is None else out + y
        return out

    def _check_spectrum(self, S: np.ndarray):
        if not S.size or math.isinf(self.radius):
            return
        rho = np.max(np.abs(np.linalg.eigvals(S)))
        if rho >= self.radius * (1.0 - 1e-12):
            raise SpectrumOutsideDisk(
                f"spectral radius {rho:.6g} of S is not inside the disk of radius {self.radius:.6g}"
            )

    def md_apply(
        self,
        d: int,
        Y: np.ndarray,
        S: np.ndarray,
        c: np.ndarray,
        variant: MdVariant | str = MdVariant.SUM_FORM,
        series_tol: float = 1e-16,
        max_terms: int = 500,
    ) -> np.ndarray:
        """Return ``M_d(Y, S) c = sum_{i>d} M_i Y S^i c / i!``.

        ``c`` may be a vector or a ``p x k`` block. The sum-form variant uses
        ``sum_t T_t Y f_t(S) c`` minus the first ``d + 1`` Taylor terms; the
        series variant sums the tail directly.
        """
        variant = MdVariant(variant)
        Y = np.asarray(Y, dtype=complex)
        S = np.asarray(S, dtype=complex)
        c = np.asarray(c, dtype=complex)
        vec = c.ndim == 1
        cm = c[:, None] if vec else c
        p = S.shape[0]
        if p == 0:
            out = np.zeros((self.n, cm.shape[1]), dtype=complex)
            return out[:, 0] if vec else out
        self._check_spectrum(S)
        nterms = len(self.terms)
        coeffs = [np.zeros_like(cm) for _ in range(nterms)]
        if variant is MdVariant.SUM_FORM:
            if not self.has_sum_form:
                raise ValueError("sum-form tail requested but a term has no matrix function")
            for t, term in enumerate(self.terms):
                coeffs[t] += term.matfun(S) @ cm
            power = cm.copy()
            for j in range(d + 1):
                if j > 0:
                    power = S @ power / j
                for t in range(nterms):
                    fj = self.terms[t].derivative(j)
                    if fj != 0:
                        coeffs[t] -= fj * power
        else:
            snorm = np.linalg.norm(S, 2)
            ynorm = np.linalg.norm(Y, 2) if Y.size else 0.0
            cnorm = np.linalg.norm(cm)
            power = cm.copy()
            for j in range(1, d + 1):
                power = S @ power / j
            small = 0
            j = d
            while True:
                j += 1
                if j - d > max_terms:
                    raise SeriesDivergence(f"tail series not converged after {max_terms} terms")
                power = S @ power / j
                fj = self.derivative_coefficients(j)
                bound = float(np.dot(self.term_norms, np.abs(fj))) * ynorm * np.linalg.norm(power)
                for t in range(nterms):
                    if fj[t] != 0:
                        coeffs[t] += fj[t] * power
                if bound == 0 or (bound < series_tol * cnorm and j + 1 > snorm):
                    small += 1
                else:
                    small = 0
                if small >= 3 or cnorm == 0:
                    break
        out = self.combine_apply([Y @ C for C in coeffs])
        return out[:, 0] if vec else out

    # -- diagnostics ------------------------------------------------------------

    def nep_residual(self, lam: complex, v: np.ndarray) -> float:
        """Relative residual ``||M(lam) v|| / (||v|| * sum_i ||T_i||_F |f_i(lam)|)``."""
        v = np.asarray(v, dtype=complex)
        nv = np.linalg.norm(v)
        if nv == 0:
            raise ValueError("residual of the zero vector is undefined")
        vals = np.array([t.scalar(lam) for t in self.terms])
        r = self.combine_apply([val * v for val in vals])
        scale = float(np.dot(self.term_fro_norms, np.abs(vals)))
        if scale == 0:
            return float(np.linalg.norm(r) / nv)
        return float(np.linalg.norm(r) / (nv * scale))

    def in_domain(self, lam: complex) -> bool:
        return abs(lam) < self.radius

    def derivative_norm_bound(self, i: int) -> float:
        """Upper bound on ``||M^{(i)}(0)||_2``.

        The derivative matrix is assembled from the split form and its
        2-norm is computed once per distinct coefficient pattern, so DEP
        derivatives of order >= 3 cost a single norm of ``A2``.
        """
        if i < 0:
            raise ValueError("derivative order must be non-negative")
        coeffs = self.derivative_coefficients(i)
        scale = np.max(np.abs(coeffs))
        if scale == 0:
            return 0.0
        key = tuple(np.round(coeffs / scale, 12))
        if key not in self._norm_cache:
            self._norm_cache[key] = _spectral_norm(self._combine(np.array(key, dtype=complex)))
        return float(scale * self._norm_cache[key])

    def max_norm_on_circle(self, R: float, samples: int = 32) -> float:
        """Sampled ``max_{|lam| = R} ||M(lam)||_F`` (Frobenius upper estimate)."""
        best = 0.0
        for theta in np.linspace(0.0, 2 * np.pi, samples, endpoint=False):
            lam = R * np.exp(1j * theta)
            vals = np.array([t.scalar(lam) for t in self.terms])
            best = max(best, _fro(self._combine(vals)))
        return best


class DelayNep(NepProblem):
    """Delay eigenvalue problem ``M(lam) = -lam^2 I + lam A1 + A0 + exp(-tau lam) A2 + I``."""

    def __init__(self, A0, A1, A2, tau: float = 1.0, name: str = "dep"):
        n = A0.shape[0]
        sparse = any(sp.issparse(A) for A in (A0, A1, A2))
        eye = sp.identity(n, dtype=complex, format="csc") if sparse else np.eye(n, dtype=complex)
        self.A0, self.A1, self.A2, self.tau = A0, A1, A2, tau
        terms = [
            NepTerm(A0 + eye, **monomial(0)),
            NepTerm(A1, **monomial(1)),
            NepTerm(-eye, **monomial(2)),
            NepTerm(A2, **exponential(-tau)),
        ]
        super().__init__(terms, radius=math.inf, name=name)


def delay_nep(A0, A1, A2, tau: float = 1.0, name: str = "dep") -> DelayNep:
    return DelayNep(A0, A1, A2, tau=tau, name=name)


def polynomial_nep(coefficients: Sequence, name: str = "pep") -> NepProblem:
    """``M(lam) = sum_j lam^j A_j`` for the given coefficient matrices."""
    terms = [NepTerm(A, **monomial(j)) for j, A in enumerate(coefficients)]
    return NepProblem(terms, radius=math.inf, name=name)


def _laplacian_1d(N: int):
    h = 1.0 / (N + 1)
    return sp.diags([np.ones(N - 1), -2 * np.ones(N), np.ones(N - 1)], [-1, 0, 1]) / h**2


def dep_grid(N: int, tau: float = 1.0) -> DelayNep:
    """DEP from a second-order finite-difference grid of ``N x N`` interior points.

    The spatial operator is the 5-point Dirichlet Laplacian on the unit
    square scaled by ``1/(4 pi^2)`` (smallest eigenvalue about -1/2), plus a
    variable reaction term; ``A1`` is a variable damping and ``A2`` a
    variable delayed feedback. The coefficients break the symmetry of the
    square so that eigenvalues near the origin are simple. ``n = N**2``.
    """
    if N < 2:
        raise ValueError("grid size must be at least 2")
    L1 = _laplacian_1d(N)
    eye = sp.identity(N)
    L = sp.kron(eye, L1) + sp.kron(L1, eye)
    x = np.arange(1, N + 1) / (N + 1)
    X, Yg = np.meshgrid(x, x, indexing="ij")
    X, Yg = X.ravel(), Yg.ravel()
    A0 = (L / (4 * np.pi**2) + sp.diags(0.3 * np.sin(np.pi * X) * Yg)).tocsc()
    A1 = sp.diags(-0.1 - 0.2 * X - 0.1 * Yg**2).tocsc()
    A2 = sp.diags(0.5 + 0.3 * X * Yg).tocsc()
    return DelayNep(A0, A1, A2, tau=tau, name=f"dep_grid{N}")


def dep_random(n: int, seed: int = 0, scale: float = 0.5) -> DelayNep:
    """Small dense DEP with random coefficient matrices of norm about ``scale``."""
    rng = np.random.default_rng(seed)
    mats = [scale * rng.standard_normal((n, n)) / math.sqrt(n) for _ in range(3)]
    return DelayNep(*mats, name=f"dep_random{n}_{seed}")


def load_matrix_market(path):
    """Read a Matrix Market file (coordinate or array) as a sparse or dense matrix."""
    A = scipy.io.mmread(str(path))
    if sp.issparse(A):
        return sp.csc_matrix(A)
    return np.asarray(A)


def dep_from_matrix_market(a0, a1, a2, tau: float = 1.0) -> DelayNep:
    mats = [load_matrix_market(p) for p in (a0, a1, a2)]
    shapes = {A.shape for A in mats}
    if len(shapes) != 1:
        raise ValueError(f"A0/A1/A2 shapes differ: {sorted(shapes)}")
    return DelayNep(*mats, tau=tau, name="dep_mtx")
