import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tiar.basis import (
    TensorBasis,
    coefficient_stack,
    constant_function,
    evaluate,
    exp_tail_gram,
    inner_products,
    linear_combine,
    memory_footprint,
    norm,
    polynomial_basis,
    raise_degree,
)

from .oracles import materialize, random_exp_basis

seeds = st.integers(0, 2**31 - 1)


def _gram(X, Y):
    return np.einsum("inj,inl->jl", X.conj(), Y)


@given(seeds)
def test_inner_products_match_materialized_coefficients(seed):
    B = random_exp_basis(np.random.default_rng(seed))
    X = materialize(B)
    np.testing.assert_allclose(inner_products(B, B), _gram(X, X), rtol=1e-12, atol=1e-12)


@given(seeds)
def test_norm_of_single_column(seed):
    B = random_exp_basis(np.random.default_rng(seed))
    col = B.column(1)
    X = materialize(col)
    assert norm(col) == pytest.approx(np.sqrt(np.sum(np.abs(X) ** 2)), rel=1e-12)


@given(seeds, st.complex_numbers(max_magnitude=1.5))
def test_evaluate_sums_the_taylor_series(seed, theta):
    B = random_exp_basis(np.random.default_rng(seed))
    X = materialize(B, 120)
    ref = sum(theta**i * X[i] for i in range(120))
    np.testing.assert_allclose(evaluate(B, theta), ref, rtol=1e-11, atol=1e-11)


@given(seeds)
def test_linear_combine_commutes_with_evaluation(seed):
    rng = np.random.default_rng(seed)
    B = random_exp_basis(rng)
    M = rng.standard_normal((B.k, 2)) + 1j * rng.standard_normal((B.k, 2))
    theta = 0.3 - 0.4j
    np.testing.assert_allclose(evaluate(linear_combine(B, M), theta), evaluate(B, theta) @ M, atol=1e-12)


@given(seeds, st.complex_numbers(max_magnitude=1.0))
def test_raise_degree_preserves_the_function(seed, theta):
    B = random_exp_basis(np.random.default_rng(seed))
    R = raise_degree(B)
    assert R.d == B.d + 1
    np.testing.assert_allclose(evaluate(R, theta), evaluate(B, theta), atol=1e-11)
    np.testing.assert_allclose(coefficient_stack(R, 10), coefficient_stack(B, 10), atol=1e-12)


def test_coefficient_stack_matches_definition(rng):
    B = random_exp_basis(rng)
    np.testing.assert_allclose(coefficient_stack(B, 12), materialize(B, 12), atol=1e-13)


def test_constant_function():
    B = constant_function(np.array([3.0, 4.0]))
    assert norm(B) == pytest.approx(1.0)
    np.testing.assert_allclose(evaluate(B, 2.0)[:, 0], [0.6, 0.8])
    with pytest.raises(ValueError):
        constant_function(np.zeros(3))


def test_polynomial_inner_products(rng):
    Z, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    a = rng.standard_normal((3, 4, 2)) + 0j
    B = polynomial_basis(Z, a)
    assert B.polynomial_only and B.p == 0 and B.q == 0
    X = coefficient_stack(B)
    np.testing.assert_allclose(inner_products(B, B), _gram(X, X), atol=1e-13)


def test_exp_tail_gram_start_offset(rng):
    B = random_exp_basis(rng, d=0)
    X = materialize(B, 80)
    g = exp_tail_gram(B.Y, B.S, B.C, B.C, 2)
    np.testing.assert_allclose(g, _gram(X[2:], X[2:]), atol=1e-12)


def test_shape_validation(rng):
    B = random_exp_basis(rng)
    with pytest.raises(ValueError):
        TensorBasis(B.Z[:, :1], B.W, B.Y, B.S, B.a, B.b, B.C)
    with pytest.raises(ValueError):
        TensorBasis(B.Z, B.W, B.Y, B.S, B.a, B.b[:1], B.C)
    with pytest.raises(ValueError):
        TensorBasis(B.Z, B.W, B.Y, B.S, B.a, B.b, B.C[:, :1])
    with pytest.raises(ValueError):
        linear_combine(B, np.eye(B.k + 1))
    with pytest.raises(ValueError):
        inner_products(B, raise_degree(B).column(0))
    with pytest.raises(ValueError):
        norm(B)


def test_memory_footprint(rng):
    B = random_exp_basis(rng, n=6, r=2, q=2, d=3, k=3)
    elems = 6 * 2 + 6 * 2 + 6 * 2 + 4 + 3 * 3 * 2 + 3 * 3 * 2 + 2 * 3
    assert memory_footprint(B) == 16 * elems


def test_column_views_share_directions(rng):
    B = random_exp_basis(rng)
    col = B.column(slice(0, 2))
    assert col.k == 2 and col.Z is B.Z
    np.testing.assert_allclose(evaluate(col, 0.5), evaluate(B, 0.5)[:, :2])
