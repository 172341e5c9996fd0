"""High-order continuous Galerkin assembly on quad and structured hex meshes.

A reference guide mesh can be assembled with per-region axis stretches
``(sx, sy)``; the bilinear forms then carry the weights of the stretched
(physical) domain: stiffness ``sy/sx * dx^2 + sx/sy * dy^2`` and mass
``sx * sy``.  Boundary quantities are reported in physical units.
"""
from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp

from .basis import BasisSpec, differentiation_matrix, gauss_legendre, lagrange_eval
from .geometry import DIRICHLET, HEX_FACES, QUAD_FACES, Mesh, MeshError, map_quad
from . import kernels


class AssemblyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# degrees of freedom


@dataclass
class DofMap:
    dofs: np.ndarray  # (n_elements, n_local)
    ndof: int
    coords: np.ndarray  # (ndof, dim), mesh coordinates

    def face_local_nodes(self, p, dim, face):
        return _face_local(p, dim, face)


def _face_local(p, dim, face):
    n = p + 1
    if dim == 2:
        ii = np.arange(n)
        if face == 0:
            return ii
        if face == 1:
            return p + n * ii
        if face == 2:
            return ii + n * p
        return n * ii
    idx = np.arange(n**3).reshape(n, n, n)  # [k, j, i]
    return {
        0: idx[:, :, 0], 1: idx[:, :, p], 2: idx[:, 0, :],
        3: idx[:, p, :], 4: idx[0, :, :], 5: idx[p, :, :],
    }[face].ravel()


def build_dofmap_2d(mesh, p):
    n = p + 1
    ne = mesh.n_elements
    nv = len(mesh.nodes)
    dofs = np.empty((ne, n * n), dtype=np.int64)
    edge_base = {}
    next_id = nv
    t = np.arange(1, p)
    local_edge = [t, p + n * t, t + n * p, n * t]
    for e in range(ne):
        el = mesh.elements[e]
        d = dofs[e]
        d[0], d[p], d[n * p], d[n * p + p] = el[0], el[1], el[2], el[3]
        for f, (a, b) in enumerate(QUAD_FACES):
            if p < 2:
                break
            va, vb = int(el[a]), int(el[b])
            key = (min(va, vb), max(va, vb))
            base = edge_base.get(key)
            if base is None:
                base = next_id
                edge_base[key] = base
                next_id += p - 1
            ids = base + np.arange(p - 1)
            d[local_edge[f]] = ids if va < vb else ids[::-1]
        if p >= 2:
            inner = (t[None, :] + n * t[:, None]).ravel()
            d[inner] = next_id + np.arange((p - 1) ** 2)
            next_id += (p - 1) ** 2
    ndof = next_id
    coords = np.empty((ndof, 2))
    g = gll_nodes(p)
    xi, eta = np.meshgrid(g, g, indexing="xy")
    xi, eta = xi.ravel(), eta.ravel()
    for e in range(ne):
        x, _ = map_quad(mesh, e, xi, eta)
        coords[dofs[e]] = x
    return DofMap(dofs, ndof, coords)


def gll_nodes(p):
    from .basis import gll_points

    return gll_points(p)


def build_dofmap_3d(mesh, p):
    """Structured lattice numbering of a tensor hex grid."""
    if mesh.axes is None:
        raise AssemblyError("3D assembly needs a structured grid")
    S = [np.asarray(a) for a in mesh.axes]
    g = (gll_nodes(p) + 1) / 2
    lat = []
    for ax in S:
        pts = [ax[0]]
        for a, b in zip(ax[:-1], ax[1:]):
            pts.extend(a + (b - a) * g[1:])
        lat.append(np.array(pts))
    nx, ny, nz = (len(v) for v in lat)
    # element (i, j, k) from its first vertex
    X0 = mesh.nodes[mesh.elements[:, 0]]
    ijk = [np.searchsorted(S[d], X0[:, d]) for d in range(3)]
    n = p + 1
    a = np.arange(n)
    ne = mesh.n_elements
    I = ijk[0][:, None] * p + a[None, :]
    J = ijk[1][:, None] * p + a[None, :]
    K = ijk[2][:, None] * p + a[None, :]
    # local index = i + n*j + n^2*k
    lat_id = (K[:, :, None, None] * ny + J[:, None, :, None]) * nx + I[:, None, None, :]
    lat_id = lat_id.reshape(ne, -1)
    used = np.unique(lat_id)
    remap = -np.ones(nx * ny * nz, dtype=np.int64)
    remap[used] = np.arange(len(used))
    dofs = remap[lat_id]
    kk, rem = np.divmod(used, nx * ny)
    jj, ii = np.divmod(rem, nx)
    coords = np.stack([lat[0][ii], lat[1][jj], lat[2][kk]], axis=1)
    return DofMap(dofs, len(used), coords)


# ---------------------------------------------------------------------------
# assembled system


@dataclass
class System:
    mesh: Mesh
    basis: BasisSpec
    dofmap: DofMap
    K_full: sp.csr_matrix
    M_full: sp.csr_matrix
    free: np.ndarray
    dirichlet: np.ndarray
    bc_map: dict
    stretch: dict = field(default_factory=dict)

    @property
    def K(self):
        return self._restrict(self.K_full)

    @property
    def M(self):
        return self._restrict(self.M_full)

    def _restrict(self, A):
        key = id(A)
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            cache[key] = A[self.free][:, self.free].tocsr()
        return cache[key]

    @property
    def ndof(self):
        return self.dofmap.ndof

    @property
    def n_free(self):
        return len(self.free)

    def expand(self, u_free, boundary=None):
        """Full dof vector(s) from free values; Dirichlet dofs get ``boundary`` or 0."""
        u_free = np.asarray(u_free)
        shape = (self.ndof,) + u_free.shape[1:]
        u = np.zeros(shape)
        u[self.free] = u_free
        if boundary is not None:
            u[self.dirichlet] = boundary
        return u

    def region_stretch(self, region):
        return self.stretch.get(region, (1.0, 1.0))

    def physical_coords(self):
        """Dof coordinates after applying the region stretches."""
        if not self.stretch:
            return self.dofmap.coords.copy()
        return stretch_points(self.dofmap.coords, self.stretch)


def stretch_points(pts, stretch):
    """Reference guide point -> physical point (arm coordinates multiplied by R)."""
    out = np.array(pts, dtype=float, copy=True)
    for d, reg in ((0, "T1"), (1, "T2")):
        s = stretch.get(reg, (1.0, 1.0))[d]
        out[:, d] = np.where(out[:, d] > 0, out[:, d] * s, out[:, d])
    return out


def unstretch_points(pts, stretch):
    out = np.array(pts, dtype=float, copy=True)
    for d, reg in ((0, "T1"), (1, "T2")):
        s = stretch.get(reg, (1.0, 1.0))[d]
        out[:, d] = np.where(out[:, d] > 0, out[:, d] / s, out[:, d])
    return out


def guide_stretch(R):
    """Per-region stretches mapping the reference guide (arms of length 1) to arms of length R."""
    R = float(R)
    if R <= 0:
        raise AssemblyError("R must be positive")
    return {"G0": (1.0, 1.0), "T1": (R, 1.0), "T2": (1.0, R)}


def region_weights(stretch, region):
    """(a_x, a_y, c) weights of the stretched bilinear forms on one region."""
    sx, sy = stretch.get(region, (1.0, 1.0))
    return sy / sx, sx / sy, sx * sy


def assemble(mesh, basis, bc_map, stretch=None):
    """Stiffness and mass with Dirichlet dofs eliminated by restriction.

    ``bc_map`` maps facet tags to ``"D"`` or ``"N"``; unknown tags are an error.
    """
    if not isinstance(basis, BasisSpec):
        basis = BasisSpec(int(basis))
    missing = set(mesh.facet_tags) - set(bc_map)
    if missing:
        raise AssemblyError(f"no boundary condition for tags {sorted(missing)}")
    stretch = dict(stretch or {})
    if mesh.dim == 2:
        dm = build_dofmap_2d(mesh, basis.degree)
        Kd, Md = _element_data_2d(mesh, basis, stretch)
    elif mesh.dim == 3:
        if stretch:
            raise AssemblyError("stretches are only supported in 2D")
        dm = build_dofmap_3d(mesh, basis.degree)
        Kd, Md = _element_data_3d(mesh, basis)
    else:
        raise AssemblyError(f"unsupported dimension {mesh.dim}")
    nb = dm.dofs.shape[1]
    rows = np.repeat(dm.dofs, nb, axis=1).ravel()
    cols = np.tile(dm.dofs, (1, nb)).ravel()
    shape = (dm.ndof, dm.ndof)
    K = sp.coo_matrix((Kd, (rows, cols)), shape=shape).tocsr()
    M = sp.coo_matrix((Md, (rows, cols)), shape=shape).tocsr()
    K = 0.5 * (K + K.T)
    M = 0.5 * (M + M.T)
    dirichlet = dirichlet_dofs(mesh, dm, basis.degree, bc_map)
    mask = np.ones(dm.ndof, dtype=bool)
    mask[dirichlet] = False
    free = np.flatnonzero(mask)
    return System(mesh, basis, dm, K.tocsr(), M.tocsr(), free, dirichlet, dict(bc_map), stretch)


def dirichlet_dofs(mesh, dm, p, bc_map):
    out = []
    for k, tag in enumerate(mesh.facet_tags):
        if bc_map[tag] != DIRICHLET:
            continue
        e, f = mesh.facets[k]
        out.append(dm.dofs[e, _face_local(p, mesh.dim, f)])
    if not out:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(out))


def _quad_geometry(mesh, basis):
    """Jacobian inverses and weighted determinants at quadrature points for all quads."""
    qx, qw = basis.qx, basis.qw
    xi, eta = np.meshgrid(qx, qx, indexing="xy")
    xi, eta = xi.ravel(), eta.ravel()
    w = np.outer(qw, qw).ravel()
    ne = mesh.n_elements
    nq = len(w)
    Jinv = np.empty((ne, nq, 2, 2))
    wdet = np.empty((ne, nq))
    X = mesh.nodes[mesh.elements]  # (ne, 4, 2)
    # bilinear part in one shot; polar elements are redone below
    from .geometry import _quad_shape_grad

    dxi, deta = _quad_shape_grad(xi, eta)
    J = np.empty((ne, nq, 2, 2))
    J[:, :, :, 0] = np.einsum("qa,ead->eqd", dxi, X)
    J[:, :, :, 1] = np.einsum("qa,ead->eqd", deta, X)
    for e in range(ne):
        if mesh.mapping[e] == "polar":
            _, J[e] = map_quad(mesh, e, xi, eta)
    det = J[:, :, 0, 0] * J[:, :, 1, 1] - J[:, :, 0, 1] * J[:, :, 1, 0]
    if np.any(det <= 0):
        raise AssemblyError("nonpositive Jacobian at a quadrature point")
    Jinv[:, :, 0, 0] = J[:, :, 1, 1] / det
    Jinv[:, :, 1, 1] = J[:, :, 0, 0] / det
    Jinv[:, :, 0, 1] = -J[:, :, 0, 1] / det
    Jinv[:, :, 1, 0] = -J[:, :, 1, 0] / det
    wdet[:] = det * w[None, :]
    return Jinv, wdet


def _element_data_2d(mesh, basis, stretch):
    N, Nxi, Neta, _ = basis.tensor_2d()
    Jinv, wdet = _quad_geometry(mesh, basis)
    ne = mesh.n_elements
    ax = np.empty(ne)
    ay = np.empty(ne)
    cm = np.empty(ne)
    for e, reg in enumerate(mesh.regions):
        ax[e], ay[e], cm[e] = region_weights(stretch, reg)
    Ke, Me = kernels.element_matrices_2d(N, Nxi, Neta, Jinv, wdet, ax, ay, cm)
    return Ke.ravel(), Me.ravel()


def hex_reference_blocks(basis):
    K1, M1 = basis.matrices_1d()
    Kx = np.kron(M1, np.kron(M1, K1))
    Ky = np.kron(M1, np.kron(K1, M1))
    Kz = np.kron(K1, np.kron(M1, M1))
    M0 = np.kron(M1, np.kron(M1, M1))
    return Kx, Ky, Kz, M0


def _element_data_3d(mesh, basis):
    X = mesh.nodes[mesh.elements]
    h = X[:, 7, :] - X[:, 0, :]
    if np.any(h <= 0):
        raise AssemblyError("degenerate hexahedron")
    hx, hy, hz = h[:, 0], h[:, 1], h[:, 2]
    scales = np.stack([hy * hz / (2 * hx), hx * hz / (2 * hy), hx * hy / (2 * hz),
                       hx * hy * hz / 8], axis=1)
    Kx, Ky, Kz, M0 = hex_reference_blocks(basis)
    return kernels.combine_3d(scales, Kx, Ky, Kz, M0)


# ---------------------------------------------------------------------------
# evaluation


def _element_bboxes(mesh):
    X = mesh.nodes[mesh.elements]
    lo = X.min(axis=1)
    hi = X.max(axis=1)
    for e, arc in mesh.arcs.items():
        _, cx, cy, r, t0, t1 = arc
        th = np.linspace(t0, t1, 17)
        pts = np.stack([cx + r * np.cos(th), cy + r * np.sin(th)], axis=1)
        lo[e] = np.minimum(lo[e], pts.min(axis=0))
        hi[e] = np.maximum(hi[e], pts.max(axis=0))
    return lo, hi


def locate(mesh, points, tol=1e-10):
    """(element, xi, eta) for each 2D point; raises if a point is outside the mesh."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cache = mesh.__dict__.setdefault("_bbox", None)
    if cache is None:
        cache = _element_bboxes(mesh)
        mesh.__dict__["_bbox"] = cache
    lo, hi = cache
    out_e = np.empty(len(points), dtype=np.int64)
    out_r = np.empty((len(points), 2))
    for k, x in enumerate(points):
        cand = np.flatnonzero(np.all((lo - tol <= x) & (x <= hi + tol), axis=1))
        found = False
        for e in cand:
            ref = _inverse_map(mesh, e, x)
            if ref is not None and np.all(np.abs(ref) <= 1 + 1e-9):
                out_e[k] = e
                out_r[k] = np.clip(ref, -1, 1)
                found = True
                break
        if not found:
            raise AssemblyError(f"point {x} is outside the mesh")
    return out_e, out_r


def _inverse_map(mesh, e, x):
    r = np.zeros(2)
    for _ in range(50):
        y, J = map_quad(mesh, e, r[:1], r[1:])
        res = x - y[0]
        if np.abs(res).max() < 1e-14 * (1 + np.abs(x).max()):
            return r
        try:
            dr = np.linalg.solve(J[0], res)
        except np.linalg.LinAlgError:
            return None
        r = r + dr
        if np.abs(r).max() > 3:
            return None
    y, _ = map_quad(mesh, e, r[:1], r[1:])
    return r if np.abs(x - y[0]).max() < 1e-11 else None


def evaluate(system, u_full, points, derivatives=False):
    """Values (and mesh-coordinate gradients) of a full dof vector at 2D points."""
    mesh = system.mesh
    if mesh.dim != 2:
        raise AssemblyError("point evaluation is implemented for 2D meshes")
    p = system.basis.degree
    nodes = gll_nodes(p)
    els, refs = locate(mesh, points)
    vals = np.empty(len(els))
    grads = np.empty((len(els), 2))
    for k, (e, (a, b)) in enumerate(zip(els, refs)):
        pa, da = lagrange_eval(nodes, a)
        pb, db = lagrange_eval(nodes, b)
        coef = u_full[system.dofmap.dofs[e]].reshape(p + 1, p + 1)  # [j, i]
        vals[k] = pb[0] @ coef @ pa[0]
        if derivatives:
            gxi = pb[0] @ coef @ da[0]
            geta = db[0] @ coef @ pa[0]
            _, J = map_quad(mesh, e, np.array([a]), np.array([b]))
            grads[k] = np.linalg.solve(J[0].T, [gxi, geta])
    return (vals, grads) if derivatives else vals


def interpolate(system, fn):
    """Nodal interpolant of ``fn(x, y)`` (mesh coordinates) as a full dof vector."""
    c = system.dofmap.coords
    return np.asarray(fn(*c.T), dtype=float)


# ---------------------------------------------------------------------------
# facet quadrature


def facet_quadrature(system, u_full, tags, nq=None):
    """Integrals over tagged 2D facets in physical units.

    Returns a dict with ``length``, ``v2`` (int |v|^2), ``dtau2`` (int |d_tau v|^2),
    ``v_dnn`` (int v d_n^2 v, affine facets only), ``dn2`` (int |d_n v|^2).
    """
    mesh = system.mesh
    if mesh.dim != 2:
        raise AssemblyError("facet quadrature is implemented for 2D meshes")
    tags = {tags} if isinstance(tags, str) else set(tags)
    p = system.basis.degree
    nodes = gll_nodes(p)
    D = differentiation_matrix(nodes)
    nq = nq or p + 3
    s, w = gauss_legendre(nq)
    phi_s, dphi_s = lagrange_eval(nodes, s)
    d2phi_s = dphi_s @ D
    ends = {-1: lagrange_eval(nodes, np.array([-1.0])), 1: lagrange_eval(nodes, np.array([1.0]))}
    d2ends = {k: v[1] @ D for k, v in ends.items()}
    acc = dict(length=0.0, v2=0.0, dtau2=0.0, v_dnn=0.0, dn2=0.0)
    for k, tag in enumerate(mesh.facet_tags):
        if tag not in tags:
            continue
        e, f = mesh.facets[k]
        coef = u_full[system.dofmap.dofs[e]].reshape(p + 1, p + 1)  # [j, i]
        sx, sy = system.region_stretch(mesh.regions[e])
        X = mesh.nodes[mesh.elements[e]]
        if f in (0, 2):  # eta fixed
            side = -1 if f == 0 else 1
            pe, de = ends[side][0][0], ends[side][1][0]
            d2e = d2ends[side][0]
            v = phi_s @ coef.T @ pe
            dt = dphi_s @ coef.T @ pe  # d/dxi
            dn = phi_s @ coef.T @ de  # d/deta
            dnn = phi_s @ coef.T @ d2e
            xi_pts, eta_pts = s, np.full(nq, float(side))
        else:
            side = 1 if f == 1 else -1
            pe, de = ends[side][0][0], ends[side][1][0]
            d2e = d2ends[side][0]
            v = phi_s @ coef @ pe
            dt = dphi_s @ coef @ pe
            dn = phi_s @ coef @ de
            dnn = phi_s @ coef @ d2e
            xi_pts, eta_pts = np.full(nq, float(side)), s
        _, J = map_quad(mesh, e, xi_pts, eta_pts)
        col_t = 0 if f in (0, 2) else 1
        tang = J[:, :, col_t] * np.array([sx, sy])  # physical tangent vector
        ds = np.linalg.norm(tang, axis=1)
        dtau = dt / ds
        acc["length"] += np.dot(w, ds)
        acc["v2"] += np.dot(w, ds * v**2)
        acc["dtau2"] += np.dot(w, ds * dtau**2)
        if mesh.mapping[e] == "affine" and _is_axis_rectangle(X):
            h = (X[3] - X[0]) * np.array([sx, sy])
            hn = h[1] if f in (0, 2) else h[0]
            acc["dn2"] += np.dot(w, ds * (2 * dn / hn) ** 2)
            acc["v_dnn"] += np.dot(w, ds * v * dnn * (2 / hn) ** 2)
        else:
            acc["v_dnn"] = math.nan
            acc["dn2"] = math.nan
    return acc


def _is_axis_rectangle(X):
    return X[0, 1] == X[1, 1] and X[0, 0] == X[2, 0] and X[2, 1] == X[3, 1] and X[1, 0] == X[3, 0]


def facet_points(system, tags):
    """Sorted vertex coordinates lying on the tagged facets (mesh coordinates)."""
    mesh = system.mesh
    ids = set()
    for k, tag in enumerate(mesh.facet_tags):
        if tag == tags or (not isinstance(tags, str) and tag in tags):
            ids.update(mesh.facet_nodes(k))
    return mesh.nodes[sorted(ids)]


# ---------------------------------------------------------------------------
# Helmholtz with Dirichlet lifting


@dataclass
class HelmholtzSolution:
    u: np.ndarray  # full dof vector
    system: System
    shift: float
    min_eigenvalue: float


def solve_helmholtz(mesh, basis, shift, boundary_fn, bc_map=None, stretch=None):
    """Solve -Lap u - shift u = 0 with u = boundary_fn on Dirichlet facets.

    The restricted operator K - shift M must be positive definite; this is
    checked through its lowest eigenvalue.
    """
    from .eigensolve import smallest_eigenpairs

    bc_map = bc_map or {t: DIRICHLET for t in mesh.tags()}
    system = assemble(mesh, basis, bc_map, stretch)
    lam1 = smallest_eigenpairs(system.K, system.M, 1, tol=1e-8).values[0]
    if shift >= lam1:
        raise AssemblyError(
            f"K - {shift:.6g} M is not positive definite (lowest eigenvalue {lam1:.6g})")
    A = (system.K_full - shift * system.M_full).tocsr()
    g = interpolate(system, boundary_fn)[system.dirichlet]
    Aff = A[system.free][:, system.free].tocsc()
    Afd = A[system.free][:, system.dirichlet]
    from scipy.sparse.linalg import spsolve

    uf = spsolve(Aff, -(Afd @ g))
    u = system.expand(uf, boundary=g)
    return HelmholtzSolution(u, system, float(shift), float(lam1))


def energy(system, u_full, shift=0.0):
    """(u, (K - shift M) u) and (u, M u) with full matrices."""
    Ku = system.K_full @ u_full
    Mu = system.M_full @ u_full
    return float(u_full @ Ku - shift * (u_full @ Mu)), float(u_full @ Mu)


class ReferencePencil:
    """Stiffness/mass of a reference guide split by region and direction.

    The stretched pencil at any R is a linear combination of the stored
    components, so the mesh, dof map and sparsity are shared by all R.
    """

    def __init__(self, mesh, basis, bc_map):
        if not isinstance(basis, BasisSpec):
            basis = BasisSpec(int(basis))
        regions = sorted(set(mesh.regions))
        if not set(regions) <= {"G0", "T1", "T2"}:
            raise AssemblyError("reference pencil needs region tags G0/T1/T2 on every element")
        self.mesh = mesh
        self.basis = basis
        self.bc_map = dict(bc_map)
        base = assemble(mesh, basis, bc_map)
        self.dofmap = base.dofmap
        self.free = base.free
        self.dirichlet = base.dirichlet
        N, Nxi, Neta, _ = basis.tensor_2d()
        Jinv, wdet = _quad_geometry(mesh, basis)
        nb = self.dofmap.dofs.shape[1]
        rows = np.repeat(self.dofmap.dofs, nb, axis=1).ravel()
        cols = np.tile(self.dofmap.dofs, (1, nb)).ravel()
        shape = (self.dofmap.ndof,) * 2
        reg = np.array(mesh.regions)
        self.parts = {}
        for r in regions:
            on = (reg == r).astype(float)
            Kx, M = kernels.element_matrices_2d(N, Nxi, Neta, Jinv, wdet, on, 0 * on, on)
            Ky, _ = kernels.element_matrices_2d(N, Nxi, Neta, Jinv, wdet, 0 * on, on, 0 * on)
            mats = []
            for data in (Kx, Ky, M):
                A = sp.coo_matrix((data.ravel(), (rows, cols)), shape=shape).tocsr()
                mats.append(0.5 * (A + A.T))
            self.parts[r] = tuple(mats)

    def system(self, R):
        stretch = guide_stretch(R)
        K = None
        M = None
        for r, (Kx, Ky, Mr) in self.parts.items():
            ax, ay, c = region_weights(stretch, r)
            Kr = ax * Kx + ay * Ky
            K = Kr if K is None else K + Kr
            M = c * Mr if M is None else M + c * Mr
        return System(self.mesh, self.basis, self.dofmap, K.tocsr(), M.tocsr(),
                      self.free, self.dirichlet, dict(self.bc_map), stretch)
