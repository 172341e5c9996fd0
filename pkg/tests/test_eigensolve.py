import math

import numpy as np
import pytest
import scipy.sparse as sp

from fichera.eigensolve import EigenSolverError, eigenvector_sign_normalize, smallest_eigenpairs


def fd_laplacian(n):
    h = 1.0 / (n + 1)
    K = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2
    return K.tocsc(), sp.identity(n, format="csc")


def test_fd_laplacian_spectrum():
    n = 400
    K, M = fd_laplacian(n)
    h = 1.0 / (n + 1)
    exact = [4 / h**2 * math.sin(k * math.pi * h / 2) ** 2 for k in (1, 2, 3, 4)]
    r = smallest_eigenpairs(K, M, 4)
    np.testing.assert_allclose(r.values, exact, rtol=1e-11)
    assert r.residuals.max() < 1e-10


def test_generalized_and_m_orthonormal():
    rng = np.random.default_rng(1)
    n = 300
    d = rng.uniform(1, 2, n)
    K, _ = fd_laplacian(n)
    M = sp.diags(d).tocsc()
    r = smallest_eigenpairs(K, M, 3)
    V = r.vectors
    np.testing.assert_allclose(V.T @ (M @ V), np.eye(3), atol=1e-10)
    ref = np.linalg.eigvalsh(np.diag(d**-0.5) @ K.toarray() @ np.diag(d**-0.5))[:3]
    np.testing.assert_allclose(r.values, ref, rtol=1e-10)


def test_degenerate_pair_is_resolved():
    # the 2D square has a double second eigenvalue
    n = 30
    K1, M1 = fd_laplacian(n)
    K = (sp.kron(K1, sp.identity(n)) + sp.kron(sp.identity(n), K1)).tocsc()
    M = sp.identity(n * n, format="csc")
    r = smallest_eigenpairs(K, M, 3)
    assert abs(r.values[1] - r.values[2]) / r.values[1] < 1e-11
    assert r.values[1] > r.values[0] * 2


def test_seed_reproducibility():
    K, M = fd_laplacian(500)
    a = smallest_eigenpairs(K, M, 2, seed=7)
    b = smallest_eigenpairs(K, M, 2, seed=7)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.vectors.tobytes() == b.vectors.tobytes()


def test_sign_normalization():
    K, M = fd_laplacian(200)
    r = eigenvector_sign_normalize(smallest_eigenpairs(K, M, 1), M)
    assert r.vectors[:, 0].sum() > 0


def test_budget_exhaustion_raises():
    K, M = fd_laplacian(2000)
    with pytest.raises(EigenSolverError):
        smallest_eigenpairs(K, M, 3, tol=1e-14, max_blocks=2, krylov_steps=1)
