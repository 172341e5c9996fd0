"""Gauss-Lobatto-Legendre nodal basis and Gauss-Legendre quadrature on [-1, 1].

Tensor-product elements in 2D and 3D are built from the 1D objects here.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg


def gauss_legendre(n):
    """Gauss-Legendre points and weights on [-1, 1] (exact to degree 2n-1)."""
    x, w = npleg.leggauss(n)
    return x, w


@lru_cache(maxsize=64)
def _gll_cached(p):
    if p == 1:
        return np.array([-1.0, 1.0])
    # interior nodes are the roots of P_p'
    coef = np.zeros(p + 1)
    coef[-1] = 1.0
    interior = npleg.legroots(npleg.legder(coef))
    x = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    # Newton polish on (1 - x^2) P_p'(x)
    for _ in range(3):
        pp = npleg.legval(x[1:-1], npleg.legder(coef))
        ppp = npleg.legval(x[1:-1], npleg.legder(coef, 2))
        x[1:-1] -= pp / ppp
    return x


def gll_points(p):
    """The p+1 Gauss-Lobatto-Legendre nodes on [-1, 1], ascending."""
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    return _gll_cached(p).copy()


def barycentric_weights(nodes):
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def lagrange_eval(nodes, x):
    """Values and first derivatives of the Lagrange cardinal functions.

    Returns arrays of shape (len(x), len(nodes)).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    w = barycentric_weights(nodes)
    phi = np.empty((len(x), n))
    dphi = np.empty((len(x), n))
    # differentiation matrix at the nodes, then interpolate derivatives
    D = differentiation_matrix(nodes)
    for i, xi in enumerate(x):
        d = xi - nodes
        hit = np.flatnonzero(np.abs(d) < 1e-15)
        if hit.size:
            phi[i] = 0.0
            phi[i, hit[0]] = 1.0
            dphi[i] = D[hit[0]]
            continue
        t = w / d
        s = t.sum()
        phi[i] = t / s
        # derivative of barycentric formula
        dt = -w / d**2
        dphi[i] = (dt * s - t * dt.sum()) / s**2
    return phi, dphi


def differentiation_matrix(nodes):
    """D[i, j] = l_j'(nodes[i])."""
    n = len(nodes)
    w = barycentric_weights(nodes)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = (w[j] / w[i]) / (nodes[i] - nodes[j])
        D[i, i] = -D[i].sum()
    return D


@dataclass(frozen=True)
class BasisSpec:
    """Degree-p tensor Lagrange basis on GLL nodes with n_q Gauss points per direction.

    ``n_q`` defaults to p + 2.
    """

    degree: int
    n_q: int = 0
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    qx: np.ndarray = field(init=False, repr=False, compare=False)
    qw: np.ndarray = field(init=False, repr=False, compare=False)
    phi: np.ndarray = field(init=False, repr=False, compare=False)
    dphi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        p = int(self.degree)
        if p < 1:
            raise ValueError(f"degree must be >= 1, got {p}")
        nq = int(self.n_q) if self.n_q else p + 2
        if nq < p + 1:
            raise ValueError(f"n_q={nq} must be >= p+1={p + 1}")
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "n_q", nq)
        nodes = gll_points(p)
        qx, qw = gauss_legendre(nq)
        phi, dphi = lagrange_eval(nodes, qx)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "qx", qx)
        object.__setattr__(self, "qw", qw)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "dphi", dphi)

    @property
    def nloc1d(self):
        return self.degree + 1

    def matrices_1d(self):
        """Reference 1D stiffness and mass on [-1, 1]: (K1, M1)."""
        W = self.qw[:, None]
        K1 = self.dphi.T @ (W * self.dphi)
        M1 = self.phi.T @ (W * self.phi)
        return K1, M1

    def tensor_2d(self):
        """Values and reference gradients of the 2D basis at tensor quadrature points.

        Local numbering is lexicographic with x fastest: index = i + (p+1)*j.
        Quadrature points likewise: q = a + n_q*b.
        Returns (N, dN_dxi, dN_deta, weights) with N of shape (n_q**2, (p+1)**2).
        """
        phi, dphi = self.phi, self.dphi
        N = np.einsum("ai,bj->baji", phi, phi).reshape(self.n_q**2, -1)
        Nx = np.einsum("ai,bj->baji", dphi, phi).reshape(self.n_q**2, -1)
        Ny = np.einsum("ai,bj->baji", phi, dphi).reshape(self.n_q**2, -1)
        w = np.outer(self.qw, self.qw).reshape(-1)  # symmetric, order irrelevant
        return N, Nx, Ny, w
