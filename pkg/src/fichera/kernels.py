"""Element-matrix kernels.

Each kernel exists twice: a loop version compiled by numba and a batched
numpy version.  ``element_matrices_2d`` and ``combine_3d`` dispatch on the
backend chosen at import time (see ``_accel``).
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit


def _element_matrices_2d_loops(N, Nxi, Neta, Jinv, wdet, ax, ay, cm):
    ne = wdet.shape[0]
    nq, nb = N.shape
    Ke = np.empty((ne, nb, nb))
    Me = np.empty((ne, nb, nb))
    Bx = np.empty((nq, nb))
    By = np.empty((nq, nb))
    Wx = np.empty((nq, nb))
    Wy = np.empty((nq, nb))
    Wm = np.empty((nq, nb))
    for e in range(ne):
        for q in range(nq):
            g00 = Jinv[e, q, 0, 0]
            g01 = Jinv[e, q, 0, 1]
            g10 = Jinv[e, q, 1, 0]
            g11 = Jinv[e, q, 1, 1]
            sx = wdet[e, q] * ax[e]
            sy = wdet[e, q] * ay[e]
            sm = wdet[e, q] * cm[e]
            for i in range(nb):
                bx = g00 * Nxi[q, i] + g10 * Neta[q, i]
                by = g01 * Nxi[q, i] + g11 * Neta[q, i]
                Bx[q, i] = bx
                By[q, i] = by
                Wx[q, i] = sx * bx
                Wy[q, i] = sy * by
                Wm[q, i] = sm * N[q, i]
        Ke[e] = Bx.T @ Wx + By.T @ Wy
        Me[e] = N.T @ Wm
    return Ke, Me


def _element_matrices_2d_numpy(N, Nxi, Neta, Jinv, wdet, ax, ay, cm, chunk=64):
    ne = wdet.shape[0]
    nb = N.shape[1]
    Ke = np.empty((ne, nb, nb))
    Me = np.empty((ne, nb, nb))
    for s in range(0, ne, chunk):
        sl = slice(s, min(ne, s + chunk))
        G = Jinv[sl]
        Bx = G[:, :, 0, 0, None] * Nxi + G[:, :, 1, 0, None] * Neta
        By = G[:, :, 0, 1, None] * Nxi + G[:, :, 1, 1, None] * Neta
        wx = (wdet[sl] * ax[sl, None])[:, :, None]
        wy = (wdet[sl] * ay[sl, None])[:, :, None]
        wm = (wdet[sl] * cm[sl, None])[:, :, None]
        Ke[sl] = np.matmul(Bx.transpose(0, 2, 1), wx * Bx)
        Ke[sl] += np.matmul(By.transpose(0, 2, 1), wy * By)
        Me[sl] = np.matmul(N.T[None], wm * N[None])
    return Ke, Me


def _combine_3d_loops(scales, Kx, Ky, Kz, M0):
    """Per-element hex matrices from Kronecker blocks: rows of ``scales`` are
    (sx, sy, sz, sm); returns flattened K and M data, element-major."""
    ne = scales.shape[0]
    nb = Kx.shape[0]
    kd = np.empty(ne * nb * nb)
    md = np.empty(ne * nb * nb)
    for e in range(ne):
        sx = scales[e, 0]
        sy = scales[e, 1]
        sz = scales[e, 2]
        sm = scales[e, 3]
        off = e * nb * nb
        for i in range(nb):
            for j in range(nb):
                kd[off + i * nb + j] = sx * Kx[i, j] + sy * Ky[i, j] + sz * Kz[i, j]
                md[off + i * nb + j] = sm * M0[i, j]
    return kd, md


def _combine_3d_numpy(scales, Kx, Ky, Kz, M0):
    kd = (scales[:, 0, None, None] * Kx + scales[:, 1, None, None] * Ky
          + scales[:, 2, None, None] * Kz)
    md = scales[:, 3, None, None] * M0
    return kd.ravel(), md.ravel()


element_matrices_2d_numba = njit(_element_matrices_2d_loops)
combine_3d_numba = njit(_combine_3d_loops)

if HAVE_NUMBA:
    def element_matrices_2d(N, Nxi, Neta, Jinv, wdet, ax, ay, cm):
        return element_matrices_2d_numba(
            np.ascontiguousarray(N), np.ascontiguousarray(Nxi), np.ascontiguousarray(Neta),
            np.ascontiguousarray(Jinv), np.ascontiguousarray(wdet),
            np.ascontiguousarray(ax, dtype=float), np.ascontiguousarray(ay, dtype=float),
            np.ascontiguousarray(cm, dtype=float))

    def combine_3d(scales, Kx, Ky, Kz, M0):
        return combine_3d_numba(np.ascontiguousarray(scales), Kx, Ky, Kz, M0)
else:
    element_matrices_2d = _element_matrices_2d_numpy
    combine_3d = _combine_3d_numpy

element_matrices_2d_numpy = _element_matrices_2d_numpy
combine_3d_numpy = _combine_3d_numpy
