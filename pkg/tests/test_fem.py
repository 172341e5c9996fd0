import math
import os
import subprocess
import sys

import numpy as np
import pytest

from fichera.basis import BasisSpec
from fichera.eigensolve import smallest_eigenpairs
from fichera.fem import (assemble, energy, evaluate, facet_quadrature, guide_stretch,
                         interpolate, ReferencePencil, solve_helmholtz)
from fichera.geometry import (Geometry2D, Geometry3D, GradingSpec, build_guide_mesh,
                              build_layer_grid, build_mixed_square_mesh,
                              build_quarter_disk_mesh, build_reference_guide_mesh, default_bc,
                              map_reference_to_physical)

PI2 = math.pi**2


def square_system(p, bc):
    mesh = build_mixed_square_mesh(1.0, GradingSpec(2, 0.2), 2)
    return assemble(mesh, BasisSpec(p), bc)


def test_dirichlet_square():
    s = square_system(8, {"outer": "D", "sigma1": "D", "sigma2": "D"})
    r = smallest_eigenpairs(s.K, s.M, 3)
    np.testing.assert_allclose(r.values / PI2, [2, 5, 5], rtol=1e-9)


def test_mixed_square_two_eigenvalues():
    s = square_system(8, {"outer": "D", "sigma1": "N", "sigma2": "N"})
    r = smallest_eigenpairs(s.K, s.M, 2)
    np.testing.assert_allclose(r.values / PI2, [0.5, 2.5], rtol=1e-9)


def test_mass_and_stiffness_identities():
    s = square_system(5, {"outer": "N", "sigma1": "N", "sigma2": "N"})
    one = np.ones(s.dofmap.ndof)
    assert abs(one @ (s.M_full @ one) - 1.0) < 1e-13
    assert np.abs(s.K_full @ one).max() < 1e-11
    x, y = s.dofmap.coords.T
    assert abs(x @ (s.K_full @ x) - 1.0) < 1e-12


def test_interpolation_and_evaluation_exact_for_polynomials():
    s = square_system(4, {"outer": "D", "sigma1": "N", "sigma2": "N"})
    u = interpolate(s, lambda x, y: x**3 * y + 2 * y**4)
    pts = np.array([[-0.3, -0.7], [-0.91, -0.05], [-0.5, -0.5]])
    vals, grads = evaluate(s, u, pts, derivatives=True)
    x, y = pts.T
    np.testing.assert_allclose(vals, x**3 * y + 2 * y**4, atol=1e-12)
    np.testing.assert_allclose(grads[:, 0], 3 * x**2 * y, atol=1e-11)


def test_weighted_equals_direct_assembly():
    ref = build_reference_guide_mesh(GradingSpec(3, 0.1), 2)
    bc = default_bc("broken-guide", "N")
    a = assemble(ref, BasisSpec(6), bc, guide_stretch(4.0))
    b = assemble(map_reference_to_physical(ref, 4.0), BasisSpec(6), bc)
    la = smallest_eigenpairs(a.K, a.M, 2).values
    lb = smallest_eigenpairs(b.K, b.M, 2).values
    np.testing.assert_allclose(la, lb, rtol=1e-10)
    pen = ReferencePencil(ref, BasisSpec(6), bc).system(4.0)
    np.testing.assert_allclose(smallest_eigenpairs(pen.K, pen.M, 2).values, la, rtol=1e-12)


def test_weighted_form_direct_mesh_agrees():
    bc = default_bc("broken-guide", "D")
    m = build_guide_mesh(Geometry2D("broken-guide", 3.0), GradingSpec(4, 0.1), 2)
    s = assemble(m, BasisSpec(8), bc)
    lam = smallest_eigenpairs(s.K, s.M, 1).values[0]
    pen = ReferencePencil(build_reference_guide_mesh(GradingSpec(4, 0.1), 2), BasisSpec(8), bc)
    t = pen.system(3.0)
    assert abs(smallest_eigenpairs(t.K, t.M, 1).values[0] / lam - 1) < 1e-7


def test_helmholtz_manufactured():
    # sin(a x + c) sin(b y + d) with a^2 + b^2 = k^2 solves the homogeneous equation
    k2 = PI2 / 2
    a = b = math.sqrt(k2 / 2)
    mesh = build_quarter_disk_mesh(GradingSpec(2, 0.1), 2)
    exact = lambda x, y: np.sin(a * x + 0.3) * np.sin(b * y + 0.1)
    errs = []
    for p in (8, 12):
        sol = solve_helmholtz(mesh, BasisSpec(p), k2, exact)
        errs.append(np.abs(sol.u - interpolate(sol.system, exact)).max())
        assert sol.min_eigenvalue > k2
    assert errs[0] < 1e-7
    assert errs[1] < 1e-2 * errs[0]


def test_facet_quadrature_length():
    m = build_guide_mesh(Geometry2D("broken-guide", 2.0), GradingSpec(2, 0.1), 2)
    s = assemble(m, BasisSpec(4), default_bc("broken-guide", "N"))
    one = np.ones(s.dofmap.ndof)
    q = facet_quadrature(s, one, ("sigma1", "sigma2"))
    assert abs(q["length"] - 2.0) < 1e-13
    assert abs(q["v2"] - 2.0) < 1e-13


def test_layer_dirichlet_cube_block():
    # bracketing on a coarse 3D layer: Neumann truncation lies below Dirichlet
    d = assemble(build_layer_grid(Geometry3D("fichera-layer", 2.0)), BasisSpec(2),
                 default_bc("fichera-layer", "D"))
    n = assemble(build_layer_grid(Geometry3D("fichera-layer", 2.0)), BasisSpec(2),
                 default_bc("fichera-layer", "N"))
    ld = smallest_eigenpairs(d.K, d.M, 3).values
    ln = smallest_eigenpairs(n.K, n.M, 3).values
    assert np.all(ln <= ld)
    assert abs(ld[1] - ld[2]) / ld[1] < 1e-10


def test_energy_of_eigenvector():
    s = square_system(6, {"outer": "D", "sigma1": "N", "sigma2": "N"})
    r = smallest_eigenpairs(s.K, s.M, 1)
    u = s.expand(r.vectors[:, 0])
    num, den = energy(s, u, shift=r.values[0])
    assert abs(num) < 1e-9 and abs(den - 1) < 1e-10


def test_numpy_backend_assembles_identically(tmp_path):
    code = ("import numpy as np, sys\n"
            "from fichera.basis import BasisSpec\n"
            "from fichera.fem import assemble, guide_stretch\n"
            "from fichera.geometry import GradingSpec, build_reference_guide_mesh, default_bc\n"
            "from fichera._accel import backend\n"
            "s = assemble(build_reference_guide_mesh(GradingSpec(2, 0.1), 2), BasisSpec(5),"
            " default_bc('rounded-guide', 'N'), guide_stretch(2.5))\n"
            "np.save(sys.argv[1], s.K_full.toarray())\n"
            "print(backend())\n")
    out = {}
    for flag in ("0", "1"):
        f = tmp_path / f"K{flag}.npy"
        env = dict(os.environ, FICHERA_NO_NUMBA=flag)
        r = subprocess.run([sys.executable, "-c", code, str(f)], env=env, capture_output=True,
                           text=True, check=True)
        out[flag] = (r.stdout.strip(), np.load(f))
    assert out["1"][0] == "numpy"
    np.testing.assert_allclose(out["0"][1], out["1"][1], atol=1e-12)
