"""Operational matrices on the lower-triangular Toeplitz ring."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dorder.bpf import make_basis, SpectralVector
from dorder.opmat import (OpMatrix, gamma_fn, integration_matrix,
                          derivative_matrix, identity_matrix,
                          invert_lower_toeplitz, apply, compose, add, scale,
                          to_dense)


def ring_product_col(a, b):
    return np.convolve(a.first_col, b.first_col)[:a.first_col.size]


def test_gamma_fn():
    assert gamma_fn(1.0) == 1.0
    assert gamma_fn(5.0) == 24.0
    assert abs(gamma_fn(0.5) - np.sqrt(np.pi)) < 1e-15
    for bad in (0.0, -1.0, np.nan):
        with pytest.raises(ValueError):
            gamma_fn(bad)


def test_integration_matrix_order_one_textbook():
    # A_1 is the classical BPF integration matrix: h/2 diagonal, h below
    b = make_basis(6, 3.0)
    h = b.width
    a1 = to_dense(integration_matrix(1.0, b))
    expect = np.tril(np.full((6, 6), h), -1) + np.eye(6) * h / 2.0
    assert np.array_equal(a1, expect)


def test_integration_matrix_order_zero_is_identity():
    b = make_basis(5, 2.0)
    assert np.array_equal(to_dense(integration_matrix(0.0, b)), np.eye(5))


def test_integration_matrix_first_column_telescopes():
    # column sums telescope: sum_p f_p = N^(alpha+1) - (N-1)^(alpha+1)
    b = make_basis(64, 1.0)
    for alpha in (0.3, 0.5, 1.7):
        col = integration_matrix(alpha, b).first_col
        lead = (b.width ** alpha) / gamma_fn(alpha + 2.0)
        total = 64.0 ** (alpha + 1) - 63.0 ** (alpha + 1)
        assert np.isclose(col.sum(), lead * total, rtol=1e-12)


def test_integration_negative_order_rejected():
    b = make_basis(4, 1.0)
    with pytest.raises(ValueError):
        integration_matrix(-0.5, b)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75, 1.0])
@pytest.mark.parametrize("n", [32, 256])
def test_derivative_inverts_integration(alpha, n):
    b = make_basis(n, 5.0)
    ba = ring_product_col(derivative_matrix(alpha, b), integration_matrix(alpha, b))
    e0 = np.zeros(n)
    e0[0] = 1.0
    assert np.max(np.abs(ba - e0)) <= 1e-10


def test_derivative_order_three_halves_overflows_at_large_n():
    # the inverse column of A_1.5 grows geometrically; at N=1024 it
    # leaves double range and the constructor refuses to hand it back
    b = make_basis(1024, 1.0)
    with pytest.raises(RuntimeError, match="overflow"):
        derivative_matrix(1.5, b)


def test_invert_requires_nonzero_leading_entry():
    b = make_basis(4, 1.0)
    m = OpMatrix(b, np.array([0.0, 1.0, 0.0, 0.0]))
    with pytest.raises(ValueError, match="singular"):
        invert_lower_toeplitz(m)


@settings(max_examples=40)
@given(st.integers(2, 40), st.integers(0, 2 ** 32 - 1))
def test_invert_matches_dense_inverse(n, seed):
    rng = np.random.default_rng(seed)
    b = make_basis(n, 1.0)
    col = np.empty(n)
    col[0] = rng.uniform(0.5, 2.0)
    col[1:] = 0.3 * rng.standard_normal(n - 1) / np.arange(1, n) ** 2
    m = OpMatrix(b, col)
    inv = invert_lower_toeplitz(m)
    assert np.allclose(to_dense(inv), np.linalg.inv(to_dense(m)), rtol=1e-9, atol=1e-9)


def test_apply_equals_dense_matvec():
    rng = np.random.default_rng(11)
    b = make_basis(33, 2.0)
    m = integration_matrix(0.6, b)
    v = SpectralVector(b, rng.standard_normal(33))
    w = apply(m, v)
    assert np.allclose(w.coeffs, to_dense(m) @ v.coeffs, atol=1e-13)


def test_ring_is_commutative_and_associative():
    b = make_basis(20, 1.0)
    x = integration_matrix(0.4, b)
    y = integration_matrix(1.0, b)
    z = identity_matrix(b)
    assert np.allclose(compose(x, y).first_col, compose(y, x).first_col, atol=1e-15)
    lhs = compose(compose(x, y), x)
    rhs = compose(x, compose(y, x))
    assert np.allclose(lhs.first_col, rhs.first_col, atol=1e-15)
    assert np.array_equal(compose(x, z).first_col, x.first_col)


def test_add_scale():
    b = make_basis(6, 1.0)
    x = integration_matrix(0.5, b)
    s = add(x, scale(x, -1.0))
    assert np.all(s.first_col == 0.0)
    assert np.allclose(scale(x, 3.0).first_col, 3.0 * x.first_col, atol=0)


def test_basis_mismatch_rejected():
    x = integration_matrix(0.5, make_basis(6, 1.0))
    y = integration_matrix(0.5, make_basis(6, 2.0))
    with pytest.raises(ValueError):
        compose(x, y)
    with pytest.raises(ValueError):
        apply(x, SpectralVector(make_basis(6, 2.0), np.zeros(6)))


def test_opmatrix_rejects_nonfinite():
    b = make_basis(3, 1.0)
    with pytest.raises(RuntimeError):
        OpMatrix(b, np.array([1.0, np.inf, 0.0]))
