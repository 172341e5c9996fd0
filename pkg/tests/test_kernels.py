import numpy as np

from fichera import kernels
from fichera.basis import BasisSpec
from fichera.fem import _quad_geometry, hex_reference_blocks
from fichera.geometry import GradingSpec, build_quarter_disk_mesh


def test_2d_kernels_agree():
    mesh = build_quarter_disk_mesh(GradingSpec(2, 0.1), 2)
    b = BasisSpec(5)
    N, Nxi, Neta, _ = b.tensor_2d()
    Jinv, wdet = _quad_geometry(mesh, b)
    rng = np.random.default_rng(3)
    ax, ay, cm = rng.uniform(0.5, 2, (3, mesh.n_elements))
    k1, m1 = kernels.element_matrices_2d_numpy(N, Nxi, Neta, Jinv, wdet, ax, ay, cm)
    k2, m2 = kernels.element_matrices_2d_numba(N, Nxi, Neta, Jinv, wdet, ax, ay, cm)
    np.testing.assert_allclose(k1, k2, atol=1e-12)
    np.testing.assert_allclose(m1, m2, atol=1e-14)
    # symmetric, stiffness annihilates constants
    assert np.abs(k1 - k1.transpose(0, 2, 1)).max() < 1e-12
    assert np.abs(k1.sum(axis=2)).max() < 1e-10


def test_3d_kernels_agree():
    rng = np.random.default_rng(4)
    scales = rng.uniform(0.1, 1, (7, 4))
    blocks = hex_reference_blocks(BasisSpec(2))
    a = kernels.combine_3d_numpy(scales, *blocks)
    b = kernels.combine_3d_numba(scales, *blocks)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-14)
