import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fichera.basis import (BasisSpec, differentiation_matrix, gauss_legendre, gll_points,
                           lagrange_eval)


def test_gll_low_orders():
    np.testing.assert_allclose(gll_points(1), [-1, 1])
    np.testing.assert_allclose(gll_points(2), [-1, 0, 1], atol=1e-15)
    # interior points of p = 3 are the roots of P3' = 0, i.e. +-1/sqrt(5)
    np.testing.assert_allclose(gll_points(3), [-1, -1 / np.sqrt(5), 1 / np.sqrt(5), 1],
                               atol=1e-15)


@given(st.integers(1, 20), st.integers(0, 39))
@settings(max_examples=60, deadline=None)
def test_gauss_exact_for_polynomials(n, k):
    x, w = gauss_legendre(n)
    if k > 2 * n - 1:
        return
    exact = 0.0 if k % 2 else 2.0 / (k + 1)
    assert abs(w @ x**k - exact) < 1e-13


@given(st.integers(1, 16))
@settings(max_examples=16, deadline=None)
def test_lagrange_partition_of_unity(p):
    nodes = gll_points(p)
    x = np.linspace(-1, 1, 37)
    phi, dphi = lagrange_eval(nodes, x)
    np.testing.assert_allclose(phi.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(dphi.sum(axis=1), 0.0, atol=1e-9)
    np.testing.assert_allclose(lagrange_eval(nodes, nodes)[0], np.eye(p + 1), atol=1e-13)


@pytest.mark.parametrize("p", [2, 5, 10])
def test_differentiation_exact_on_polynomials(p):
    nodes = gll_points(p)
    D = differentiation_matrix(nodes)
    np.testing.assert_allclose(D @ nodes**p, p * nodes ** (p - 1), atol=1e-10)


def test_1d_matrices():
    K1, M1 = BasisSpec(6).matrices_1d()
    one = np.ones(7)
    assert abs(one @ M1 @ one - 2.0) < 1e-14
    assert np.abs(K1 @ one).max() < 1e-12
    x = gll_points(6)
    assert abs(x @ K1 @ x - 2.0) < 1e-13  # int (d/dx x)^2 over [-1, 1]


def test_tensor_layout():
    b = BasisSpec(3)
    N, Nxi, Neta, w = b.tensor_2d()
    assert N.shape == (25, 16)
    assert abs(w.sum() - 4.0) < 1e-14
    np.testing.assert_allclose(N.sum(axis=1), 1.0, atol=1e-13)


def test_basis_validation():
    with pytest.raises(ValueError):
        BasisSpec(0)
    with pytest.raises(ValueError):
        BasisSpec(4, n_q=3)
