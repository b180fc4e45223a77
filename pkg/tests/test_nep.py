import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from tiar import MdVariant, NepProblem, SingularM0, SpectrumOutsideDisk, delay_nep, dep_grid, dep_random, polynomial_nep
from tiar.nep import NepTerm, dep_from_matrix_market, exponential, load_matrix_market, monomial

from .oracles import cauchy_derivative, dense, tail_action


def test_dep_evaluate_matches_definition(small_dep):
    lam = 0.3 - 0.7j
    A0, A1, A2 = small_dep.A0, small_dep.A1, small_dep.A2
    I = np.eye(small_dep.n)
    expect = -(lam**2) * I + lam * A1 + A0 + np.exp(-lam) * A2 + I
    np.testing.assert_allclose(dense(small_dep.evaluate(lam)), expect, atol=1e-14)


@pytest.mark.parametrize("j", range(6))
def test_derivative_matrix_matches_contour_integral(small_dep, j):
    np.testing.assert_allclose(dense(small_dep.derivative_matrix(j)), cauchy_derivative(small_dep, j), atol=1e-12)


def test_mi_apply_matches_derivative_matrix(small_dep, rng):
    X = rng.standard_normal((small_dep.n, 3))
    for i in range(5):
        np.testing.assert_allclose(small_dep.mi_apply(i, X), dense(small_dep.derivative_matrix(i)) @ X, atol=1e-13)
    with pytest.raises(ValueError):
        small_dep.mi_apply(-1, X)


@pytest.mark.parametrize("variant", list(MdVariant))
@pytest.mark.parametrize("d", [0, 1, 3, 5])
def test_md_apply_matches_spectral_oracle(small_dep, rng, variant, d):
    n, p = small_dep.n, 3
    Y = rng.standard_normal((n, p)) + 1j * rng.standard_normal((n, p))
    S = 0.4 * (rng.standard_normal((p, p)) + 1j * rng.standard_normal((p, p)))
    c = rng.standard_normal(p) + 0j
    got = small_dep.md_apply(d, Y, S, c, variant)
    ref = tail_action(small_dep, d, Y, S, c)
    assert np.linalg.norm(got - ref) <= 1e-11 * max(1.0, np.linalg.norm(ref))


def test_md_apply_block_and_empty(small_dep, rng):
    n = small_dep.n
    Y = rng.standard_normal((n, 2)) + 0j
    S = np.diag([0.3, -0.2]) + 0j
    c = rng.standard_normal((2, 4)) + 0j
    block = small_dep.md_apply(2, Y, S, c, "series")
    cols = np.column_stack([small_dep.md_apply(2, Y, S, c[:, j], "series") for j in range(4)])
    np.testing.assert_allclose(block, cols, atol=1e-14)
    empty = small_dep.md_apply(2, np.zeros((n, 0)), np.zeros((0, 0)), np.zeros(0))
    assert empty.shape == (n,) and not np.any(empty)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_md_apply_is_linear_in_c(x, y):
    prob = dep_random(5, seed=2)
    rng = np.random.default_rng(0)
    Y = rng.standard_normal((5, 2)) + 0j
    S = np.array([[0.5, 0.1], [0.0, -0.3]], dtype=complex)
    c1, c2 = np.array([1.0, 0.0]) + 0j, np.array([0.0, 1.0]) + 0j
    lhs = prob.md_apply(1, Y, S, x * c1 + y * c2, "series")
    rhs = x * prob.md_apply(1, Y, S, c1, "series") + y * prob.md_apply(1, Y, S, c2, "series")
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_sum_form_requires_matrix_functions():
    term = NepTerm(np.eye(2), scalar=np.cos, derivative=lambda j: [1, 0, -1, 0][j % 4], matfun=None)
    prob = NepProblem([term, NepTerm(np.diag([1.0, 2.0]), **monomial(1))])
    assert not prob.has_sum_form
    with pytest.raises(ValueError):
        prob.md_apply(1, np.eye(2), np.eye(2) * 0.1, np.ones(2), "sum")
    prob.md_apply(1, np.eye(2), np.eye(2) * 0.1, np.ones(2), "series")


def test_spectrum_outside_disk():
    prob = NepProblem([NepTerm(np.eye(2), **monomial(0)), NepTerm(np.eye(2), **exponential(1.0))], radius=1.0)
    with pytest.raises(SpectrumOutsideDisk):
        prob.md_apply(1, np.eye(2), np.diag([0.5, 1.5]), np.ones(2))
    assert prob.in_domain(0.5) and not prob.in_domain(1.0)


def test_singular_m0_rejected():
    with pytest.raises(SingularM0):
        polynomial_nep([np.diag([1.0, 0.0]), np.eye(2)])
    with pytest.raises(SingularM0):
        polynomial_nep([sp.csc_matrix(np.diag([1.0, 0.0])), sp.identity(2, format="csc")])


def test_invalid_construction():
    with pytest.raises(ValueError):
        NepProblem([])
    with pytest.raises(ValueError):
        polynomial_nep([np.eye(2), np.eye(3)])
    with pytest.raises(ValueError):
        polynomial_nep([np.ones((2, 3))])
    with pytest.raises(ValueError):
        dep_grid(1)


def test_m0_solve_and_inverse_norm(small_dep, rng):
    X = rng.standard_normal((small_dep.n, 2))
    M0 = dense(small_dep.derivative_matrix(0))
    np.testing.assert_allclose(M0 @ small_dep.m0_solve(X), X, atol=1e-12)
    np.testing.assert_allclose(M0.conj().T @ small_dep.m0_solve_adjoint(X), X, atol=1e-12)
    assert small_dep.m0_inverse_norm == pytest.approx(np.linalg.norm(np.linalg.inv(M0), 2), rel=1e-10)


def test_m0_inverse_norm_estimate_is_upper_bound():
    prob = dep_grid(21)
    M0 = dense(prob.derivative_matrix(0))
    exact = np.linalg.norm(np.linalg.inv(M0), 2)
    assert exact <= prob.m0_inverse_norm <= 1.05 * exact


def test_derivative_norm_bound(small_dep):
    for i in range(6):
        exact = np.linalg.norm(dense(small_dep.derivative_matrix(i)), 2)
        assert small_dep.derivative_norm_bound(i) == pytest.approx(exact, rel=1e-10, abs=1e-14)


def test_nep_residual_vanishes_on_eigenpair():
    prob = polynomial_nep([np.diag([1.0, 2.0]), np.diag([-1.0, 0.0]), np.eye(2) * 0])
    assert prob.nep_residual(1.0, np.array([1.0, 0.0])) < 1e-16
    assert prob.nep_residual(1.0, np.array([0.0, 1.0])) > 0.1
    with pytest.raises(ValueError):
        prob.nep_residual(1.0, np.zeros(2))


def test_max_norm_on_circle_dominates_samples(small_dep):
    R = 1.3
    best = small_dep.max_norm_on_circle(R)
    for t in np.linspace(0, 2 * np.pi, 32, endpoint=False):
        assert np.linalg.norm(dense(small_dep.evaluate(R * np.exp(1j * t)))) <= best * (1 + 1e-12)


def test_dep_grid_structure():
    prob = dep_grid(6)
    assert prob.n == 36 and sp.issparse(prob.A0)
    assert prob.tau == 1.0
    ev = np.linalg.eigvals(dense(prob.A0))
    assert np.all(ev.real < 0.2)


def test_matrix_market_round_trip(tmp_path, small_dep):
    paths = []
    for name, A in zip(("a0", "a1", "a2"), (small_dep.A0, small_dep.A1, small_dep.A2)):
        path = tmp_path / f"{name}.mtx"
        scipy.io.mmwrite(str(path), sp.csc_matrix(A))
        paths.append(path)
    np.testing.assert_allclose(dense(load_matrix_market(paths[0])), small_dep.A0, atol=1e-14)
    prob = dep_from_matrix_market(*paths)
    np.testing.assert_allclose(dense(prob.evaluate(0.4j)), dense(small_dep.evaluate(0.4j)), atol=1e-13)
    scipy.io.mmwrite(str(tmp_path / "bad.mtx"), sp.identity(3, format="csc"))
    with pytest.raises(ValueError):
        dep_from_matrix_market(paths[0], paths[1], tmp_path / "bad.mtx")


def test_monomial_and_exponential_terms():
    m = monomial(3)
    assert m["derivative"](3) == math.factorial(3) and m["derivative"](2) == 0
    S = np.array([[0.1, 0.2], [0.0, 0.3]])
    np.testing.assert_allclose(m["matfun"](S), S @ S @ S)
    e = exponential(-2.0)
    assert e["derivative"](3) == -8.0
    assert e["scalar"](0.5) == pytest.approx(np.exp(-1.0))


def test_delay_nep_sparse_and_dense_agree(small_dep):
    sparse = delay_nep(sp.csc_matrix(small_dep.A0), sp.csc_matrix(small_dep.A1), sp.csc_matrix(small_dep.A2))
    lam = 0.2 + 0.1j
    np.testing.assert_allclose(dense(sparse.evaluate(lam)), dense(small_dep.evaluate(lam)), atol=1e-14)
