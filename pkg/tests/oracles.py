"""Independent reference computations used by the tests.

None of these go through the split-form derivative machinery of the
package: derivatives come from contour integrals of ``M`` itself, and
eigenvalues from roots of ``det M`` computed in extended precision.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
import scipy.sparse as sp
import sympy


def dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def cauchy_derivative(problem, j: int, radius: float = 0.5, samples: int = 64) -> np.ndarray:
    """``M^{(j)}(0)`` by the trapezoidal rule on ``|z| = radius``."""
    acc = 0
    for t in np.arange(samples) * 2 * np.pi / samples:
        z = radius * np.exp(1j * t)
        acc = acc + dense(problem.evaluate(z)) / z**j
    return math.factorial(j) * acc / samples


def tail_action(problem, d: int, Y, S, c, derivs: int = 8) -> np.ndarray:
    """``sum_{i>d} M_i Y S^i c / i!`` through the eigendecomposition of ``S``.

    Each eigen-direction contributes ``(M(s) - sum_{i<=d} M_i s^i / i!) y w``,
    with ``M(s)`` evaluated directly and ``M_i`` from contour integrals.
    """
    lam, V = np.linalg.eig(S)
    YV = Y @ V
    w = np.linalg.solve(V, c)
    Ms = [cauchy_derivative(problem, i) for i in range(d + 1)]
    out = np.zeros(Y.shape[0], dtype=complex)
    for j, s in enumerate(lam):
        T = dense(problem.evaluate(s)) - sum(Ms[i] * s**i / math.factorial(i) for i in range(d + 1))
        out += T @ YV[:, j] * w[j]
    return out


def pep_det_roots(coefficients, dps: int = 50) -> np.ndarray:
    """Roots of ``det(sum_j lam^j A_j)`` in extended precision."""
    lam = sympy.Symbol("lam")
    mats = [sympy.Matrix(np.asarray(A).tolist()).applyfunc(sympy.nsimplify) for A in coefficients]
    M = sum((lam**j * A for j, A in enumerate(mats)), sympy.zeros(*mats[0].shape))
    poly = sympy.Poly(sympy.expand(M.det(method="berkowitz")), lam)
    coeffs = [complex(c) for c in poly.all_coeffs()]
    with mpmath.workdps(dps):
        roots = mpmath.polyroots(coeffs, maxsteps=500, extraprec=200)
    return np.array([complex(r) for r in roots])


def _mp_det(problem, lam):
    M = dense(problem.evaluate(complex(lam)))
    return mpmath.det(mpmath.matrix(M.tolist()))


def dep_det_roots(problem, radius: float, starts: int = 14) -> np.ndarray:
    """Zeros of ``det M`` in ``|lam| < radius`` by secant iteration from a grid.

    Completeness is confirmed separately with :func:`winding_number`.
    """

    def f(z):
        M = mpmath.matrix(dense(problem.evaluate(complex(z))).tolist())
        return mpmath.det(M)

    found: list[complex] = []
    grid = np.linspace(-radius, radius, starts)
    for x in grid:
        for y in grid:
            z0 = complex(x, y)
            if abs(z0) > radius:
                continue
            try:
                z = complex(mpmath.findroot(f, mpmath.mpc(z0), solver="secant", tol=1e-26, maxsteps=80))
            except (ValueError, ZeroDivisionError):
                continue
            if abs(z) < radius and abs(complex(f(z))) < 1e-10 and all(abs(z - w) > 1e-6 for w in found):
                found.append(z)
    return np.array(found)


def winding_number(problem, radius: float, samples: int = 4000) -> int:
    """Number of zeros of ``det M`` inside ``|lam| = radius`` (argument principle)."""
    t = np.linspace(0, 2 * np.pi, samples + 1)
    vals = np.array([np.linalg.det(dense(problem.evaluate(radius * np.exp(1j * s)))) for s in t])
    phase = np.unwrap(np.angle(vals))
    return int(round((phase[-1] - phase[0]) / (2 * np.pi)))


def random_exp_basis(rng, n: int = 6, r: int = 2, q: int = 2, d: int = 3, k: int = 3, scale: float = 0.6):
    """A general tensor-structured basis with an exponential tail (not orthonormal)."""
    from tiar.basis import TensorBasis

    Q, _ = np.linalg.qr(rng.standard_normal((n, r + q)) + 1j * rng.standard_normal((n, r + q)))
    Z, W = Q[:, :r], Q[:, r:]
    Y = W @ (rng.standard_normal((q, q)) + np.eye(q))
    S = scale * (rng.standard_normal((q, q)) + 1j * rng.standard_normal((q, q))) / math.sqrt(2 * q)

    def cplx(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    return TensorBasis(Z, W, Y, S, cplx(d, k, r), cplx(d, k, q), cplx(q, k))


def materialize(basis, degree: int = 80) -> np.ndarray:
    """Taylor coefficients ``X_i`` (``degree x n x k``) summed term by term from the definition."""
    out = np.zeros((degree, basis.n, basis.k), dtype=complex)
    for i in range(min(degree, basis.d)):
        out[i] = basis.Z @ basis.a[i].T + basis.W @ basis.b[i].T
    if basis.p:
        P = np.eye(basis.p, dtype=complex)
        for i in range(degree):
            if i >= basis.d:
                out[i] += basis.Y @ P @ basis.C / math.factorial(i)
            P = P @ basis.S
    return out
