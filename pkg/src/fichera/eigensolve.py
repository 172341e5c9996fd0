"""Smallest eigenpairs of the symmetric pencil (K, M).

The solver is a restarted block Krylov iteration on the shift-inverted operator
K^{-1} M.  A block start (rather than a single vector) is what lets repeated
eigenvalues such as the lambda_2 = lambda_3 pair of the Fichera layer come out
with their full multiplicity.
"""
from dataclasses import dataclass, field, replace
import logging

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DEFAULT_SEED = 20180101


class EigenSolverError(RuntimeError):
    """Raised on factorization failure or non-convergence."""

    def __init__(self, msg, values=None, residuals=None):
        super().__init__(msg)
        self.values = values
        self.residuals = residuals


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray
    seed: int = DEFAULT_SEED
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def values_over_pi2(self):
        return self.values / np.pi**2

    def __len__(self):
        return len(self.values)


def factorize(K):
    """Sparse LU of the (SPD) stiffness block; returns a solve callable."""
    K = sp.csc_matrix(K)
    try:
        lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", options={"SymmetricMode": True})
    except RuntimeError as exc:  # singular factor
        raise EigenSolverError(f"factorization failed: {exc}") from exc
    diag = lu.U.diagonal()
    if not np.all(np.isfinite(diag)) or np.any(diag == 0.0):
        raise EigenSolverError("factorization produced a singular pivot")
    return lu.solve


def _m_orthonormalize(V, M, basis=None, MB=None):
    """Orthonormalize columns of V in the M inner product (twice for stability).

    Columns that become numerically dependent are dropped.
    """
    for _ in range(2):
        if basis is not None and basis.shape[1]:
            V = V - basis @ (MB.T @ V)
        MV = M @ V
        G = V.T @ MV
        G = 0.5 * (G + G.T)
        w, U = np.linalg.eigh(G)
        keep = w > w.max() * 1e-14 if w.size else w > 0
        V = (V @ U[:, keep]) / np.sqrt(w[keep])
    return V, M @ V


def smallest_eigenpairs(K, M, count, tol=1e-10, seed=DEFAULT_SEED, block=None,
                        krylov_steps=8, max_blocks=500, solve=None):
    """The ``count`` smallest eigenpairs of K v = lambda M v.

    Parameters
    ----------
    K, M : sparse symmetric matrices, M positive definite, K positive definite
        on the free dofs (shift 0 is used).
    count : number of eigenpairs.
    tol : bound on the relative residual ||Kv - lambda Mv|| / (lambda ||Mv||).
    seed : seed for the random starting block.
    block : block width, default ``count + 2``.
    max_blocks : budget of block applications of K^{-1} M.
    solve : optional pre-factorized K^{-1}.

    Returns
    -------
    EigenResult with ascending values and M-orthonormal vectors.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if n == 0:
        raise EigenSolverError("no free degrees of freedom")
    if n <= max(64, 4 * count):
        return _dense_eigenpairs(K, M, count, seed)
    b = block or count + 2
    if solve is None:
        solve = factorize(K)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, b))
    X, MX = _m_orthonormalize(X, M)
    extra = np.zeros((n, 0))
    Mextra = np.zeros((n, 0))
    used = 0
    restarts = 0
    theta = res = None
    while used < max_blocks:
        restarts += 1
        # thick restart: retained Ritz vectors stay in the basis unexpanded
        blocks = [X, extra]
        mblocks = [MX, Mextra]
        cur, Mcur = X, MX
        for _ in range(krylov_steps):
            W = solve(Mcur)
            used += 1
            W, MW = _m_orthonormalize(W, M, np.hstack(blocks), np.hstack(mblocks))
            if W.shape[1] == 0:
                break
            blocks.append(W)
            mblocks.append(MW)
            cur, Mcur = W, MW
        V = np.hstack(blocks)
        MV = np.hstack(mblocks)
        A = V.T @ (K @ V)
        A = 0.5 * (A + A.T)
        theta, Y = np.linalg.eigh(A)
        nkeep = min(3 * b, V.shape[1])
        Z = V @ Y[:, :nkeep]
        MZ = MV @ Y[:, :nkeep]
        res = _residuals(K, Z[:, :count], MZ[:, :count], theta[:count])
        log.debug("restart %d blocks %d residuals %s", restarts, used, res)
        X, MX = Z[:, :b], MZ[:, :b]
        extra, Mextra = Z[:, b:], MZ[:, b:]
        if np.all(res <= tol):
            break
    else:
        raise EigenSolverError(
            f"no convergence within {max_blocks} block applications",
            values=theta[:count] if theta is not None else None, residuals=res)
    vals = theta[:count].copy()
    vecs = X[:, :count].copy()
    return EigenResult(vals, vecs, res, seed=seed, iterations=used,
                       meta={"restarts": restarts, "block": b, "n": n})


def _residuals(K, X, MX, theta):
    R = K @ X - MX * theta
    nrm = np.linalg.norm(MX, axis=0) * np.abs(theta)
    return np.linalg.norm(R, axis=0) / nrm


def _dense_eigenpairs(K, M, count, seed):
    Kd = K.toarray()
    Md = M.toarray()
    w, V = sla.eigh(Kd, Md)
    count = min(count, len(w))
    X = V[:, :count]
    res = _residuals(K, X, M @ X, w[:count])
    return EigenResult(w[:count], X, res, seed=seed, iterations=0,
                       meta={"dense": True, "n": K.shape[0]})


def eigenvector_sign_normalize(result, M=None, gap_tol=1e-8):
    """Flip the ground state so its mean (sum of M v) is positive.

    Raises if the first eigenvalue is not simple.
    """
    vals = result.values
    if len(vals) > 1 and (vals[1] - vals[0]) <= gap_tol * abs(vals[0]):
        raise EigenSolverError("first eigenvalue is degenerate; ground state not unique")
    v = result.vectors[:, 0]
    mean = (M @ v).sum() if M is not None else v.sum()
    if mean < 0:
        vecs = result.vectors.copy()
        vecs[:, 0] = -v
        return replace(result, vectors=vecs)
    return result
