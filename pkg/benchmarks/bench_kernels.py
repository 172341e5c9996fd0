"""Compare the numba and numpy element kernels on representative meshes.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The numba timings exclude the first (compiling) call.  Set FICHERA_NO_NUMBA=1 to
check that the package imports and assembles without numba.
"""
import argparse
import time

import numpy as np

from fichera import kernels
from fichera._accel import HAVE_NUMBA, backend
from fichera.basis import BasisSpec
from fichera.fem import _quad_geometry, guide_stretch, hex_reference_blocks, region_weights
from fichera.geometry import Geometry3D, GradingSpec, build_layer_grid, build_reference_guide_mesh


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def inputs_2d(p):
    mesh = build_reference_guide_mesh(GradingSpec(4, 0.1), 2)
    basis = BasisSpec(p)
    N, Nxi, Neta, _ = basis.tensor_2d()
    Jinv, wdet = _quad_geometry(mesh, basis)
    st = guide_stretch(10.0)
    w = np.array([region_weights(st, r) for r in mesh.regions])
    return (N, Nxi, Neta, Jinv, wdet, w[:, 0].copy(), w[:, 1].copy(), w[:, 2].copy()), mesh.n_elements


def inputs_3d(p):
    mesh = build_layer_grid(Geometry3D("fichera-layer", 10.0))
    X = mesh.nodes[mesh.elements]
    h = X[:, 7, :] - X[:, 0, :]
    hx, hy, hz = h.T
    scales = np.ascontiguousarray(np.stack(
        [hy * hz / (2 * hx), hx * hz / (2 * hy), hx * hy / (2 * hz), hx * hy * hz / 8], axis=1))
    return (scales,) + tuple(hex_reference_blocks(BasisSpec(p))), mesh.n_elements


def run(repeat):
    print(f"backend: {backend()}  (numba available: {HAVE_NUMBA})")
    print(f"{'kernel':<22}{'p':>3}{'elements':>10}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>9}{'max diff':>11}")
    cases = [("element_matrices_2d", p, inputs_2d(p), kernels.element_matrices_2d_numpy,
              kernels.element_matrices_2d_numba) for p in (4, 8, 16)]
    cases += [("combine_3d", p, inputs_3d(p), kernels.combine_3d_numpy, kernels.combine_3d_numba)
              for p in (2, 4)]
    for name, p, (args, ne), f_np, f_nb in cases:
        t_np, r_np = best_of(lambda: f_np(*args), repeat)
        f_nb(*args)  # compile
        t_nb, r_nb = best_of(lambda: f_nb(*args), repeat)
        diff = max(float(np.abs(a - b).max()) for a, b in zip(r_np, r_nb))
        print(f"{name:<22}{p:>3}{ne:>10}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.2f}{diff:>11.1e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    run(ap.parse_args().repeat)
