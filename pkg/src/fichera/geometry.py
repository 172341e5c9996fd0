"""Guide and layer domains, corner-graded quad meshes and tensor hexahedral grids.

Conventions
-----------
Quadrilateral vertices are stored in lexicographic order of the reference
square: 0 = (-1,-1), 1 = (1,-1), 2 = (-1,1), 3 = (1,1).  Local faces are
0: eta=-1 (v0,v1), 1: xi=+1 (v1,v3), 2: eta=+1 (v2,v3), 3: xi=-1 (v0,v2).
Hexahedra use the same lexicographic order with x fastest.

Boundary tags: ``outer`` (wall min(x) = -width), ``inner`` (wall min(x) = 0),
``sigma1``/``sigma2``/``sigma3`` (truncation faces x_j = R), and for the
quarter disk alone ``arc``, ``side1`` (x1 = 0), ``side2`` (x2 = 0).
"""
from dataclasses import dataclass, field
import math

import numpy as np

DIRICHLET = "D"
NEUMANN = "N"

QUAD_FACES = ((0, 1), (1, 3), (2, 3), (0, 2))
HEX_FACES = (
    (0, 2, 4, 6),  # x = -1
    (1, 3, 5, 7),  # x = +1
    (0, 1, 4, 5),  # y = -1
    (2, 3, 6, 7),  # y = +1
    (0, 1, 2, 3),  # z = -1
    (4, 5, 6, 7),  # z = +1
)

MAPPING_CODES = {"affine": 0, "bilinear": 1, "polar": 2, "trilinear": 3}

GUIDE_KINDS = ("broken-guide", "rounded-guide", "scaled-broken-guide")
LAYER_KINDS = ("fichera-layer", "scaled-fichera-layer")


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class GradingSpec:
    """Geometric refinement toward the corner (0, 0): ``layers`` rings of ratio ``ratio``."""

    layers: int = 0
    ratio: float = 0.1
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.layers < 0:
            raise MeshError(f"layers must be >= 0, got {self.layers}")
        if not 0.0 < self.ratio < 1.0:
            raise MeshError(f"ratio must lie in (0, 1), got {self.ratio}")
        if tuple(self.center) != (0.0, 0.0):
            raise MeshError("grading is only supported toward the nonconvex corner (0, 0)")


@dataclass(frozen=True)
class Geometry2D:
    kind: str
    arm_length: float
    bc_map: dict = field(default=None)

    def __post_init__(self):
        if self.kind not in GUIDE_KINDS:
            raise MeshError(f"unknown guide kind {self.kind!r}")
        if self.arm_length <= -1:
            raise MeshError("arm_length must exceed -1")
        if self.bc_map is None:
            object.__setattr__(self, "bc_map", default_bc(self.kind, NEUMANN))

    @property
    def width(self):
        return 0.5 if self.kind == "scaled-broken-guide" else 1.0


@dataclass(frozen=True)
class Geometry3D:
    kind: str
    arm_length: float
    subdivision_level: int = 1
    bc_map: dict = field(default=None)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise MeshError(f"unknown layer kind {self.kind!r}")
        if self.subdivision_level not in (1, 2, 3):
            raise MeshError("subdivision_level must be 1, 2 or 3")
        if self.bc_map is None:
            object.__setattr__(self, "bc_map", default_bc(self.kind, NEUMANN))

    @property
    def width(self):
        return 0.5 if self.kind == "scaled-fichera-layer" else 1.0


def default_bc(kind, sigma_bc):
    """Boundary conditions of the guide/layer with ``sigma_bc`` on the truncation faces."""
    scaled = kind.startswith("scaled")
    bc = {
        "inner": DIRICHLET,
        "outer": NEUMANN if scaled else DIRICHLET,
        "arc": DIRICHLET,
        "sigma1": sigma_bc,
        "sigma2": sigma_bc,
        "sigma3": sigma_bc,
    }
    return bc


@dataclass
class Mesh:
    """Conforming quad (2D) or hex (3D) mesh.

    ``facets`` is an (nf, 2) integer array of (element, local face) pairs with
    tags in ``facet_tags``.  ``arcs`` maps a polar element id to
    (local face, center x, center y, radius, angle at face start, angle at face end).
    ``axes`` holds the 1D subdivisions of a structured 3D grid.
    """

    dim: int
    nodes: np.ndarray
    elements: np.ndarray
    mapping: list
    regions: list
    facets: np.ndarray
    facet_tags: list
    arcs: dict = field(default_factory=dict)
    axes: tuple = None
    removed_from: int = None  # structured grid: first interval index of the removed cube
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n_elements(self):
        return len(self.elements)

    def facet_nodes(self, k):
        e, f = self.facets[k]
        faces = QUAD_FACES if self.dim == 2 else HEX_FACES
        return tuple(int(self.elements[e, a]) for a in faces[f])

    def tags(self):
        return sorted(set(self.facet_tags))

    def element_measures(self, nq=8):
        """Area/volume of every element by Gauss quadrature of the exact mapping."""
        from .basis import gauss_legendre

        qx, qw = gauss_legendre(nq)
        out = np.empty(self.n_elements)
        if self.dim == 2:
            xi, eta = np.meshgrid(qx, qx, indexing="xy")
            w = np.outer(qw, qw).ravel()
            for e in range(self.n_elements):
                _, J = map_quad(self, e, xi.ravel(), eta.ravel())
                det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
                out[e] = np.dot(w, det)
        else:
            X = self.nodes[self.elements]
            h = X[:, 7, :] - X[:, 0, :]
            out = np.prod(h, axis=1)
        return out

    def dump(self, fh):
        """Write the plain-text mesh dump (17 significant digits)."""
        fh.write(f"{self.dim} {len(self.nodes)} {self.n_elements} {len(self.facets)}\n")
        for x in self.nodes:
            fh.write(" ".join(f"{v:.17g}" for v in x) + "\n")
        for e in range(self.n_elements):
            ids = " ".join(str(int(i)) for i in self.elements[e])
            fh.write(f"{MAPPING_CODES[self.mapping[e]]} {ids}\n")
        for k, tag in enumerate(self.facet_tags):
            fh.write(tag + " " + " ".join(str(i) for i in self.facet_nodes(k)) + "\n")


def read_mesh_dump(fh):
    """Parse a mesh dump into plain arrays (nodes, elements, mapping codes, facets)."""
    head = fh.readline().split()
    dim, nn, ne, nf = (int(v) for v in head)
    nodes = np.array([[float(v) for v in fh.readline().split()] for _ in range(nn)])
    codes, elems = [], []
    for _ in range(ne):
        parts = [int(v) for v in fh.readline().split()]
        codes.append(parts[0])
        elems.append(parts[1:])
    facets = []
    for _ in range(nf):
        parts = fh.readline().split()
        facets.append((parts[0], tuple(int(v) for v in parts[1:])))
    return dim, nodes, np.array(elems), codes, facets


# ---------------------------------------------------------------------------
# element mappings


def _quad_shape(xi, eta):
    return np.stack([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                     (1 - xi) * (1 + eta), (1 + xi) * (1 + eta)], axis=-1) / 4.0


def _quad_shape_grad(xi, eta):
    dxi = np.stack([-(1 - eta), (1 - eta), -(1 + eta), (1 + eta)], axis=-1) / 4.0
    deta = np.stack([-(1 - xi), -(1 + xi), (1 - xi), (1 + xi)], axis=-1) / 4.0
    return dxi, deta


def _edge_param(face, xi, eta):
    """Parameter s in [0,1] along local face, and the blending coordinate."""
    if face in (0, 2):
        return (xi + 1) / 2
    return (eta + 1) / 2


def map_quad(mesh, e, xi, eta):
    """Physical points and Jacobians (n, 2, 2) of element ``e`` at reference points."""
    X = mesh.nodes[mesh.elements[e]]
    N = _quad_shape(xi, eta)
    dxi, deta = _quad_shape_grad(xi, eta)
    x = N @ X
    J = np.empty((len(xi), 2, 2))
    J[:, :, 0] = dxi @ X
    J[:, :, 1] = deta @ X
    if mesh.mapping[e] == "polar":
        face, cx, cy, rad, t0, t1 = mesh.arcs[e]
        a, b = QUAD_FACES[face]
        # Gordon-Hall correction: the arc minus its chord, blended linearly
        s = _edge_param(face, xi, eta)
        th = t0 + (t1 - t0) * s
        arc = np.stack([cx + rad * np.cos(th), cy + rad * np.sin(th)], axis=-1)
        darc = (t1 - t0) * np.stack([-rad * np.sin(th), rad * np.cos(th)], axis=-1)
        chord = np.outer(1 - s, X[a]) + np.outer(s, X[b])
        dchord = X[b] - X[a]
        diff = arc - chord
        ddiff = darc - dchord
        if face == 0:
            blend, dblend_xi, dblend_eta = (1 - eta) / 2, 0.0, -0.5
        elif face == 2:
            blend, dblend_xi, dblend_eta = (1 + eta) / 2, 0.0, 0.5
        elif face == 1:
            blend, dblend_xi, dblend_eta = (1 + xi) / 2, 0.5, 0.0
        else:
            blend, dblend_xi, dblend_eta = (1 - xi) / 2, -0.5, 0.0
        blend = np.broadcast_to(blend, xi.shape)
        x = x + blend[:, None] * diff
        # ds/dxi or ds/deta = 1/2 along the face direction
        if face in (0, 2):
            J[:, :, 0] += blend[:, None] * ddiff * 0.5 + dblend_xi * diff
            J[:, :, 1] += dblend_eta * diff
        else:
            J[:, :, 1] += blend[:, None] * ddiff * 0.5 + dblend_eta * diff
            J[:, :, 0] += dblend_xi * diff
    return x, J


def _classify_quad(X):
    # parallelogram <=> v0 + v3 == v1 + v2
    d = X[0] + X[3] - X[1] - X[2]
    scale = np.abs(X).max() + 1.0
    return "affine" if np.abs(d).max() <= 1e-14 * scale else "bilinear"


# ---------------------------------------------------------------------------
# 2D construction


class _QuadBuilder:
    def __init__(self):
        self._ids = {}
        self.nodes = []
        self.elements = []
        self.mapping = []
        self.regions = []
        self.arcs = {}

    def node(self, x, y):
        key = (round(float(x) + 0.0, 13), round(float(y) + 0.0, 13))
        nid = self._ids.get(key)
        if nid is None:
            nid = len(self.nodes)
            self._ids[key] = nid
            self.nodes.append((float(x) + 0.0, float(y) + 0.0))
        return nid

    def quad(self, p00, p10, p01, p11, region, arc=None):
        """Add an element from four corner points given in reference-lexicographic order."""
        ids = [self.node(*p) for p in (p00, p10, p01, p11)]
        X = np.array([self.nodes[i] for i in ids])
        # enforce positive orientation
        e1 = X[1] - X[0]
        e2 = X[2] - X[0]
        if e1[0] * e2[1] - e1[1] * e2[0] < 0:
            raise MeshError("inverted element in construction")
        eid = len(self.elements)
        self.elements.append(ids)
        self.regions.append(region)
        if arc is not None:
            self.mapping.append("polar")
            self.arcs[eid] = arc
        else:
            self.mapping.append(_classify_quad(X))
        return eid

    def finish(self, tagger, name, **meta):
        nodes = np.array(self.nodes)
        elements = np.array(self.elements, dtype=np.int64)
        # boundary faces: appear once
        count = {}
        for e, el in enumerate(elements):
            for f, (a, b) in enumerate(QUAD_FACES):
                key = tuple(sorted((int(el[a]), int(el[b]))))
                count.setdefault(key, []).append((e, f))
        facets, tags = [], []
        for key in sorted(count):
            owners = count[key]
            if len(owners) == 1:
                e, f = owners[0]
                mid = 0.5 * (nodes[key[0]] + nodes[key[1]])
                if self.mapping[e] == "polar" and self.arcs[e][0] == f:
                    tag = tagger(mid, arc=True)
                else:
                    tag = tagger(mid, arc=False)
                facets.append((e, f))
                tags.append(tag)
            elif len(owners) > 2:
                raise MeshError("non-manifold edge")
        mesh = Mesh(2, nodes, elements, list(self.mapping), list(self.regions),
                    np.array(facets, dtype=np.int64).reshape(-1, 2), tags,
                    arcs=dict(self.arcs), name=name, meta=meta)
        check_jacobians(mesh)
        return mesh


def _grid_cell(builder, xs, ys, region, corner, grading):
    """Mesh the rectangle [xs] x [ys] breakpoints; the cell touching (0,0) gets rings."""
    for j in range(len(ys) - 1):
        for i in range(len(xs) - 1):
            x0, x1 = xs[i], xs[i + 1]
            y0, y1 = ys[j], ys[j + 1]
            at_corner = (
                grading.layers > 0
                and (x0 == 0.0 or x1 == 0.0)
                and (y0 == 0.0 or y1 == 0.0)
            )
            if not at_corner:
                builder.quad((x0, y0), (x1, y0), (x0, y1), (x1, y1), region)
                continue
            sx = x1 if x0 == 0.0 else x0
            sy = y1 if y0 == 0.0 else y0
            _graded_corner_cell(builder, sx, sy, region, grading)


def _oriented_quad(builder, pts, region):
    """Add quad from 4 points in cyclic order, fixing orientation."""
    a, b, c, d = pts
    # cyclic a->b->c->d ; lexicographic (a, b, d, c)
    cross = (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0])
    if cross < 0:
        a, b, c, d = a, d, c, b
    return builder.quad(a, b, d, c, region)


def _graded_corner_cell(builder, sx, sy, region, grading):
    """Rectangle with corner at (0,0) and opposite corner (sx, sy), refined in L-shaped rings."""
    q = grading.ratio
    scale = 1.0
    for _ in range(grading.layers):
        s_out, s_in = scale, scale * q
        A = (sx * s_out, 0.0)
        B = (sx * s_out, sy * s_out)
        C = (0.0, sy * s_out)
        a = (sx * s_in, 0.0)
        b = (sx * s_in, sy * s_in)
        c = (0.0, sy * s_in)
        _oriented_quad(builder, (A, B, b, a), region)
        _oriented_quad(builder, (B, C, c, b), region)
        scale = s_in
    _oriented_quad(builder, ((0.0, 0.0), (sx * scale, 0.0), (sx * scale, sy * scale),
                             (0.0, sy * scale)), region)


def _breaks(a, b, n):
    pts = np.linspace(a, b, n + 1)
    pts[0], pts[-1] = a, b
    return [float(v) + 0.0 for v in pts]


def _strip_tagger(width, arm, core="square"):
    def tag(mid, arc=False):
        x, y = mid
        if arc:
            return "outer"
        tol = 1e-12
        if arm is not None and abs(x - arm) < tol and y < tol:
            return "sigma1"
        if arm is not None and abs(y - arm) < tol and x < tol:
            return "sigma2"
        if abs(min(x, y) + width) < tol:
            return "outer"
        if abs(min(x, y)) < tol:
            return "inner"
        raise MeshError(f"untagged boundary facet at {mid}")
    return tag


def _validate_2d(grading, base):
    if not isinstance(grading, GradingSpec):
        raise MeshError("grading must be a GradingSpec")
    if int(base) < 1:
        raise MeshError("base_elems_per_unit must be >= 1")


def _guide_builder(kind, arm, grading, base, arm_cells=None):
    """Core plus two arms of length ``arm``; returns the filled builder."""
    width = 0.5 if kind == "scaled-broken-guide" else 1.0
    n = int(base)
    nw = max(1, int(round(n * width)))
    m = arm_cells if arm_cells is not None else max(1, int(math.ceil(n * arm - 1e-9)))
    across = _breaks(-width, 0.0, nw)
    along = _breaks(0.0, arm, m)
    b = _QuadBuilder()
    if kind == "rounded-guide":
        if n % 2:
            raise MeshError("rounded guide needs an even base_elems_per_unit")
        _quarter_disk(b, n, grading)
    else:
        _grid_cell(b, across, across, "G0", None, grading)
    _grid_cell(b, along, across, "T1", None, grading)
    _grid_cell(b, across, along, "T2", None, grading)
    return b, width


def _quarter_disk(builder, n, grading, region="G0"):
    """Quarter disk {x<0, y<0, |x|<1}: inner square [-1/2,0]^2 plus a ring of n sectors."""
    q = n // 2
    inner = _breaks(-0.5, 0.0, q)
    _grid_cell(builder, inner, inner, region, None, grading)
    # polyline from (-1/2, 0) down to (-1/2,-1/2) then right to (0,-1/2)
    poly = [(-0.5, y) for y in reversed(inner)] + [(x, -0.5) for x in inner[1:]]
    m = q
    nseg = len(poly) - 1
    thetas = [math.pi + 0.5 * math.pi * i / nseg for i in range(nseg + 1)]
    arcpts = [(math.cos(t), math.sin(t)) for t in thetas]
    arcpts[0] = (-1.0, 0.0)
    arcpts[-1] = (0.0, -1.0)

    def layer_pt(i, j):
        if j == 0:
            return poly[i]
        if j == m:
            return arcpts[i]
        t = j / m
        return (poly[i][0] + t * (arcpts[i][0] - poly[i][0]),
                poly[i][1] + t * (arcpts[i][1] - poly[i][1]))

    # straight sides must hit the uniform 1/n grid exactly
    for j in range(1, m):
        layer = [layer_pt(0, j), layer_pt(nseg, j)]
        expect = -0.5 - j / (2 * m)
        if abs(layer[0][0] - expect) > 1e-14 or abs(layer[1][1] - expect) > 1e-14:
            raise MeshError("ring layers do not match the strip grid")

    def snap(pt):
        x, y = pt
        # keep shared straight-side nodes bitwise identical to the strip grid
        if abs(y) < 1e-15:
            return (float(_breaks(-1.0, 0.0, n)[int(round((x + 1.0) * n))]), 0.0)
        if abs(x) < 1e-15:
            return (0.0, float(_breaks(-1.0, 0.0, n)[int(round((y + 1.0) * n))]))
        return pt

    for i in range(nseg):
        for j in range(m):
            p_in0, p_in1 = snap(layer_pt(i, j)), snap(layer_pt(i + 1, j))
            p_out0, p_out1 = snap(layer_pt(i, j + 1)), snap(layer_pt(i + 1, j + 1))
            # cyclic order: inner i, inner i+1, outer i+1, outer i
            pts = (p_in0, p_in1, p_out1, p_out0)
            if j == m - 1:
                _polar_quad(builder, pts, thetas[i], thetas[i + 1], region)
            else:
                _oriented_quad(builder, pts, region)


def _polar_quad(builder, pts, t0, t1, region):
    """Outer-ring element whose outer face (points 2->3 in cyclic order) is the unit arc."""
    a, b, c, d = pts  # a=in_i, b=in_{i+1}, c=out_{i+1}, d=out_i
    # lexicographic with face 2 (eta=+1) = (v2, v3) = arc from d to c
    cross = (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0])
    if cross > 0:
        arc = (2, 0.0, 0.0, 1.0, t0, t1)
        return builder.quad(a, b, d, c, region, arc=arc)
    # reversed orientation: swap roles so that v2->v3 runs from c to d
    arc = (2, 0.0, 0.0, 1.0, t1, t0)
    return builder.quad(b, a, c, d, region, arc=arc)


def build_guide_mesh(geom, grading, base_elems_per_unit):
    """Corner-graded quad mesh of the finite guide of ``geom`` with arms of length R."""
    _validate_2d(grading, base_elems_per_unit)
    R = float(geom.arm_length)
    if R <= 0:
        raise MeshError(f"direct guide meshing needs arm_length > 0, got {R}")
    b, width = _guide_builder(geom.kind, R, grading, base_elems_per_unit)
    return b.finish(_strip_tagger(width, R), f"{geom.kind}-R{R:g}", grading=grading,
                    base=int(base_elems_per_unit))


def build_reference_guide_mesh(grading, base, kind="broken-guide"):
    """Mesh of the reference guide (arms of length 1) with region tags G0, T1, T2."""
    _validate_2d(grading, base)
    b, width = _guide_builder(kind, 1.0, grading, base)
    return b.finish(_strip_tagger(width, 1.0), f"{kind}-reference", grading=grading,
                    base=int(base))


def build_mixed_square_mesh(side, grading, base):
    """Square (-1, side-1)^2 with ``outer`` on x=-1, y=-1 and sigma tags on the far sides."""
    _validate_2d(grading, base)
    top = side - 1.0
    br = _breaks(-1.0, top, max(1, int(math.ceil(base * side - 1e-9))))
    b = _QuadBuilder()
    g = grading if top == 0.0 else GradingSpec(0)
    _grid_cell(b, br, br, "G0", None, g)

    def tag(mid, arc=False):
        x, y = mid
        if abs(x - top) < 1e-12:
            return "sigma1"
        if abs(y - top) < 1e-12:
            return "sigma2"
        return "outer"
    return b.finish(tag, f"mixed-square-{side:g}")


def build_quarter_disk_mesh(grading, base):
    """Quarter disk of radius 1 in the third quadrant (the core of the rounded guide)."""
    _validate_2d(grading, base)
    if base % 2:
        raise MeshError("quarter disk needs an even base")
    b = _QuadBuilder()
    _quarter_disk(b, int(base), grading)

    def tag(mid, arc=False):
        if arc:
            return "arc"
        x, y = mid
        if abs(x) < 1e-12:
            return "side1"
        if abs(y) < 1e-12:
            return "side2"
        raise MeshError(f"untagged facet at {mid}")
    return b.finish(tag, "quarter-disk", grading=grading, base=int(base))


def map_reference_to_physical(mesh, R):
    """Image of a reference guide mesh under the arm stretch x -> R x on T1 (y on T2)."""
    nodes = mesh.nodes.copy()
    nodes[:, 0] = np.where(nodes[:, 0] > 0, nodes[:, 0] * R, nodes[:, 0])
    nodes[:, 1] = np.where(nodes[:, 1] > 0, nodes[:, 1] * R, nodes[:, 1])
    mapping = []
    for e in range(mesh.n_elements):
        if mesh.mapping[e] == "polar":
            mapping.append("polar")
        else:
            mapping.append(_classify_quad(nodes[mesh.elements[e]]))
    out = Mesh(2, nodes, mesh.elements.copy(), mapping, list(mesh.regions),
               mesh.facets.copy(), list(mesh.facet_tags), arcs=dict(mesh.arcs),
               name=mesh.name + f"-stretched{R:g}")
    check_jacobians(out)
    return out


def check_jacobians(mesh, nq=4):
    from .basis import gauss_legendre

    if mesh.dim != 2:
        return
    qx, _ = gauss_legendre(nq)
    xi, eta = np.meshgrid(qx, qx)
    xi, eta = xi.ravel(), eta.ravel()
    for e in range(mesh.n_elements):
        _, J = map_quad(mesh, e, xi, eta)
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        if np.any(det <= 0):
            raise MeshError(f"element {e} has a nonpositive Jacobian")


# ---------------------------------------------------------------------------
# 3D structured grids


def layer_subdivision(R, level=1):
    """1D subdivision S_k of [-1, R] for the Fichera grid G_k."""
    if level not in (1, 2, 3):
        raise MeshError("subdivision level must be 1, 2 or 3")
    if R < 2:
        raise MeshError(f"S_1 requires R >= 2, got {R}")
    base = [-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0, 2.0, (R + 2.0) / 2.0, float(R)]
    S = _dedupe(base)
    for _ in range(level - 1):
        S = _refine(S)
    return S


def cross_subdivision(R, level=1):
    """Subdivision of [-1/2, R] for the scaled layer (cross reduction).

    Refinement pattern {-w, -w/10, 0, 1/10, 1, a, b} with a = min(4, R),
    b = max(a, R); abscissae not exceeding their predecessor are dropped.
    """
    if R <= 0:
        raise MeshError("scaled layer needs R > 0")
    a = min(4.0, float(R))
    b = max(a, float(R))
    raw = [-0.5, -0.05, 0.0, 0.1, 1.0, a, b]
    S = []
    for v in raw:
        if v > float(R):
            continue
        if not S or v > S[-1]:
            S.append(v)
    if S[-1] != float(R):
        S.append(float(R))
    for _ in range(level - 1):
        S = _refine(S)
    return S


def _dedupe(vals):
    out = []
    for v in vals:
        if not out or v > out[-1]:
            out.append(v)
        elif v < out[-1]:
            raise MeshError("subdivision is not ordered")
    return out


def _refine(S):
    out = [S[0]]
    for a, b in zip(S[:-1], S[1:]):
        out.extend([(a + b) / 2.0, b])
    return out


def build_layer_grid(geom, subdivision=None):
    """Tensor hexahedral grid of [-w, R]^3 minus [0, R]^3 with tagged boundary faces."""
    R = float(geom.arm_length)
    if geom.kind == "fichera-layer":
        S = subdivision or layer_subdivision(R, geom.subdivision_level)
    else:
        S = subdivision or cross_subdivision(R, geom.subdivision_level)
    S = np.asarray(S, dtype=float)
    if S[0] != -geom.width or abs(S[-1] - R) > 1e-14:
        raise MeshError("subdivision must span [-width, R]")
    i0 = int(np.flatnonzero(S == 0.0)[0])
    n = len(S)
    ni = n - 1
    vid = np.arange(n**3).reshape(n, n, n)  # [k, j, i]
    Z, Y, X = np.meshgrid(S, S, S, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    elements = []
    for k in range(ni):
        for j in range(ni):
            for i in range(ni):
                if i >= i0 and j >= i0 and k >= i0:
                    continue
                elements.append([vid[k + c, j + bb, i + a]
                                 for c in (0, 1) for bb in (0, 1) for a in (0, 1)])
    elements = np.array(elements, dtype=np.int64)
    used = np.unique(elements)
    remap = -np.ones(n**3, dtype=np.int64)
    remap[used] = np.arange(len(used))
    nodes = nodes[used]
    elements = remap[elements]
    # boundary faces: occur once
    count = {}
    for e, el in enumerate(elements):
        for f, face in enumerate(HEX_FACES):
            key = tuple(sorted(int(el[a]) for a in face))
            count.setdefault(key, []).append((e, f))
    facets, tags = [], []
    w = geom.width
    for key in sorted(count):
        owners = count[key]
        if len(owners) != 1:
            continue
        e, f = owners[0]
        c = nodes[list(key)].mean(axis=0)
        facets.append((e, f))
        tags.append(_layer_tag(c, R, w))
    mesh = Mesh(3, nodes, elements, ["trilinear"] * len(elements),
                ["L"] * len(elements), np.array(facets, dtype=np.int64), tags,
                axes=(S, S, S), removed_from=i0, name=f"{geom.kind}-R{R:g}")
    return mesh


def _layer_tag(c, R, w):
    tol = 1e-12
    for d in range(3):
        if abs(c[d] - R) < tol:
            return f"sigma{d + 1}"
    m = c.min()
    if abs(m + w) < tol:
        return "outer"
    if abs(m) < tol:
        return "inner"
    raise MeshError(f"untagged face at {c}")


def domain_measure(kind, R):
    """Analytic area/volume of the truncated domain."""
    if kind == "broken-guide":
        return 2 * R + 1
    if kind == "scaled-broken-guide":
        return 0.25 + R
    if kind == "rounded-guide":
        return math.pi / 4 + 2 * R
    if kind == "fichera-layer":
        return (R + 1) ** 3 - R**3
    if kind == "scaled-fichera-layer":
        return (R + 0.5) ** 3 - R**3
    raise MeshError(kind)
