"""Eigenvalues of finite guides and layers, the lambda(x3) curve, the boundary
derivative formula and the mode-matching series on the straight arms."""
from dataclasses import asdict, dataclass, field
import csv
import hashlib
import json
import logging
import math
import os
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .basis import BasisSpec, gauss_legendre
from .eigensolve import (DEFAULT_SEED, EigenResult, eigenvector_sign_normalize,
                         smallest_eigenpairs)
from .fem import (ReferencePencil, assemble, evaluate, facet_points, facet_quadrature,
                  unstretch_points)
from .geometry import (DIRICHLET, NEUMANN, Geometry2D, Geometry3D, GradingSpec,
                       build_layer_grid, build_reference_guide_mesh, default_bc)

log = logging.getLogger(__name__)

PI2 = math.pi**2


class GuideError(RuntimeError):
    pass


@dataclass(frozen=True)
class Discretization:
    """Degree and mesh parameters of one solve."""

    degree: int = 16
    layers: int = 4
    ratio: float = 0.1
    base: int = 2
    n_q: int = 0
    tol: float = 1e-10
    seed: int = DEFAULT_SEED

    @property
    def grading(self):
        return GradingSpec(self.layers, self.ratio)

    @property
    def basis(self):
        return BasisSpec(self.degree, self.n_q)

    @property
    def mesh_id(self):
        return f"L{self.layers}r{self.ratio:g}b{self.base}"

    def record(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# pencil cache (one reference mesh and pattern per geometry/bc/discretization)

_PENCILS = {}


def reference_pencil(kind, sigma_bc, disc):
    key = (kind, sigma_bc, disc.degree, disc.n_q, disc.layers, disc.ratio, disc.base)
    pen = _PENCILS.get(key)
    if pen is None:
        mesh = build_reference_guide_mesh(disc.grading, disc.base, kind)
        pen = ReferencePencil(mesh, disc.basis, default_bc(kind, sigma_bc))
        if len(_PENCILS) > 16:
            _PENCILS.clear()
        _PENCILS[key] = pen
    return pen


def guide_eigenpairs(kind, R, sigma_bc, disc, count=1):
    """Lowest eigenpairs of the 2D guide of arm length R (reference-domain route)."""
    if R <= 0:
        raise GuideError(f"arm length must be positive, got {R}")
    pen = reference_pencil(kind, sigma_bc, disc)
    system = pen.system(R)
    # the 1/R arm weights set a residual floor for very short arms
    tol = disc.tol * max(1.0, 1.0 / R)
    res = smallest_eigenpairs(system.K, system.M, count, tol=tol, seed=disc.seed)
    return res, system


def layer_eigenpairs(kind, R, sigma_bc, degree, level=1, count=3, tol=1e-10,
                     seed=DEFAULT_SEED, max_dofs=400_000):
    """Lowest eigenpairs of the truncated 3D layer on the tensor grid of ``level``."""
    geom = Geometry3D(kind, float(R), level, default_bc(kind, sigma_bc))
    mesh = build_layer_grid(geom)
    S = mesh.axes[0]
    nlat = (len(S) - 1) * degree + 1
    if nlat**3 > max_dofs * 2:
        raise GuideError(f"dof guard: lattice of {nlat}^3 points exceeds the limit")
    system = assemble(mesh, BasisSpec(degree), geom.bc_map)
    if system.n_free > max_dofs:
        raise GuideError(f"dof guard: {system.n_free} free dofs > {max_dofs}")
    res = smallest_eigenpairs(system.K, system.M, count, tol=tol, seed=seed)
    return res, system


def dirichlet_mixed_pair(geom, R, disc=None, count=1, degree=None, level=None):
    """Eigenvalues with Dirichlet and with Neumann conditions on the truncation faces.

    Returns (EigenResult_Dir, EigenResult_Mix).
    """
    if R <= 0:
        raise GuideError(f"R must be positive, got {R}")
    out = []
    for sig in (DIRICHLET, NEUMANN):
        if isinstance(geom, Geometry2D):
            res, _ = guide_eigenpairs(geom.kind, R, sig, disc or Discretization(), count)
        elif isinstance(geom, Geometry3D):
            res, _ = layer_eigenpairs(geom.kind, R, sig, degree or 4,
                                      level or geom.subdivision_level, count)
        else:
            raise GuideError(f"unsupported geometry {geom!r}")
        out.append(res)
    d, m = out
    if np.any(m.values > d.values * (1 + 1e-12)):
        log.warning("bracketing violated at R=%g: mix %s > dir %s", R, m.values, d.values)
    return d, m


# ---------------------------------------------------------------------------
# lambda(x3)


def lambda_closed_form(x3):
    """Lowest eigenvalue of the mixed square of side 1 + x3 (x3 in (-1, 0])."""
    x3 = np.asarray(x3, dtype=float)
    if np.any(x3 <= -1):
        raise GuideError("x3 must exceed -1")
    return 0.5 * PI2 / (1.0 + x3) ** 2


def lambda_of(x3, disc=None, cache=None):
    """lambda(x3): closed form for x3 <= 0, Neumann-truncated broken guide for x3 > 0."""
    if x3 <= -1:
        raise GuideError(f"x3 must exceed -1, got {x3}")
    if x3 <= 0:
        return float(lambda_closed_form(x3))
    disc = disc or Discretization()
    key = _cache_key("broken-guide", NEUMANN, disc, x3)
    store = SweepCache(cache) if cache is not None else None
    if store is not None:
        hit = store.get(key)
        if hit is not None:
            return hit
    res, _ = guide_eigenpairs("broken-guide", x3, NEUMANN, disc, 1)
    val = float(res.values[0])
    if store is not None:
        store.put(key, val, {"x3": x3, "disc": disc.record()})
    return val


def _cache_key(kind, bc, disc, x):
    payload = json.dumps([kind, bc, disc.record(), repr(float(x))], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:32]


class SweepCache:
    """One JSON file per solve, keyed by a hash of geometry, grading, degree and abscissa."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def get(self, key):
        f = self.root / f"{key}.json"
        if not f.exists():
            return None
        return json.loads(f.read_text())["value"]

    def put(self, key, value, meta):
        f = self.root / f"{key}.json"
        tmp = f.with_suffix(".tmp")
        tmp.write_text(json.dumps({"value": value, "meta": meta}, sort_keys=True))
        os.replace(tmp, f)


def default_cache_dir():
    return os.environ.get("FICHERA_CACHE", str(Path.home() / ".cache" / "fichera"))


def default_x3_samples(n=60, lo=1e-3, hi=10.0):
    return list(np.geomspace(lo, hi, n))


@dataclass
class LambdaCurve:
    samples: list  # (x3, value) sorted
    disc: dict = field(default_factory=dict)
    lambda_inf: float = math.nan
    lambda_inf_err: float = math.nan

    def __post_init__(self):
        self.samples = sorted((float(x), float(v)) for x, v in self.samples)
        xs = np.array([s[0] for s in self.samples])
        if np.any(xs <= 0):
            raise GuideError("sampled branch needs x3 > 0")
        if len(set(xs)) != len(xs):
            raise GuideError("duplicate samples")
        # anchor at the closed-form value at 0, the limit of the sampled branch
        kx = np.concatenate(([0.0], xs))
        kv = np.concatenate(([0.5 * PI2], [s[1] for s in self.samples]))
        self._knots = kx
        self._interp = PchipInterpolator(kx, kv, extrapolate=False)

    @property
    def omega(self):
        return math.sqrt(PI2 - self.lambda_inf)

    @property
    def knots(self):
        return self._knots.copy()

    @property
    def x_max(self):
        return float(self._knots[-1])

    def __call__(self, x3):
        x3 = np.asarray(x3, dtype=float)
        out = np.empty_like(x3)
        neg = x3 <= 0
        out[neg] = lambda_closed_form(x3[neg])
        mid = (~neg) & (x3 <= self.x_max)
        out[mid] = self._interp(x3[mid])
        # beyond the last sample the curve is flat to within exp(-2 omega x3)
        out[x3 > self.x_max] = self.samples[-1][1]
        return out if out.ndim else float(out)

    def check(self, slack=1e-9):
        vals = np.array([v for _, v in self.samples])
        problems = []
        if np.any(np.diff(vals) < -slack * vals[1:]):
            problems.append("sampled branch is not nondecreasing")
        if np.any(vals < 0.5 * PI2 * (1 - slack)):
            problems.append("sample below pi^2/2")
        if math.isfinite(self.lambda_inf) and np.any(vals > self.lambda_inf + abs(self.lambda_inf_err) + slack * PI2):
            problems.append("sample above lambda_inf")
        return problems

    def to_csv(self, fh, p=None, mesh_id=""):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x3", "lambda", "lambda_over_pi2", "p", "mesh_id"])
        for x, v in self.samples:
            w.writerow([f"{x:.17g}", f"{v:.17g}", f"{v / PI2:.17g}", p or self.disc.get("degree", ""),
                        mesh_id])


def sweep_lambda(x3_samples, disc=None, cache=None, lambda_inf=None):
    """Sampled lambda curve with invariants checked.

    ``lambda_inf`` may be a (value, error) pair; otherwise it is taken from the
    Dirichlet/Neumann pair at the largest sample.
    """
    disc = disc or Discretization()
    xs = [float(x) for x in x3_samples]
    if any(x <= 0 for x in xs):
        raise GuideError("samples must be positive")
    if xs != sorted(xs):
        raise GuideError("samples must be sorted")
    vals = []
    for x in xs:
        try:
            vals.append(lambda_of(x, disc, cache))
        except Exception as exc:
            raise GuideError(f"solve failed at x3={x}: {exc}") from exc
    if lambda_inf is None:
        from .analysis import extrapolate_lambda_inf

        d = _cached_guide_value("broken-guide", xs[-1], DIRICHLET, disc, cache)
        lambda_inf = extrapolate_lambda_inf(d, vals[-1])
    curve = LambdaCurve(list(zip(xs, vals)), disc.record(), *lambda_inf)
    problems = curve.check()
    if problems:
        raise GuideError("; ".join(problems))
    return curve


def _cached_guide_value(kind, R, bc, disc, cache):
    store = SweepCache(cache) if cache is not None else None
    key = _cache_key(kind, bc, disc, R)
    if store is not None:
        hit = store.get(key)
        if hit is not None:
            return hit
    res, _ = guide_eigenpairs(kind, R, bc, disc, 1)
    val = float(res.values[0])
    if store is not None:
        store.put(key, val, {"x3": R, "bc": bc, "kind": kind, "disc": disc.record()})
    return val


def guide_pair_values(kind, R, disc, cache=None):
    """(lambda_Dir, lambda_Mix) of a 2D guide, cached on disk when ``cache`` is set."""
    return (_cached_guide_value(kind, R, DIRICHLET, disc, cache),
            _cached_guide_value(kind, R, NEUMANN, disc, cache))


# ---------------------------------------------------------------------------
# derivative in R


def ground_state(kind, R, disc, sigma_bc=NEUMANN):
    """Normalized positive ground state of the guide, as a full dof vector."""
    res, system = guide_eigenpairs(kind, R, sigma_bc, disc, 2)
    res = eigenvector_sign_normalize(res, system.M)
    v = system.expand(res.vectors[:, 0])
    return float(res.values[0]), v, system, res


def eigen_derivative(R, disc=None, kind="broken-guide", both_faces=True, state=None):
    """d(lambda_R)/dR from the boundary integral over the Neumann faces.

    Returns (derivative, lower bound int (pi^2 - lambda)|v|^2).
    """
    disc = disc or Discretization()
    lam, v, system, _ = state or ground_state(kind, R, disc)
    tags = ("sigma1", "sigma2") if both_faces else ("sigma1",)
    q = facet_quadrature(system, v, tags)
    factor = 1.0 if both_faces else 2.0
    deriv = factor * (q["dtau2"] - lam * q["v2"])
    bound = factor * (PI2 - lam) * q["v2"]
    return deriv, bound


# ---------------------------------------------------------------------------
# series on the straight arm


@dataclass
class SeriesSolution:
    R: float
    lam: float
    coefficients: np.ndarray  # g_k, k = 1..K_max
    end: str = NEUMANN  # condition at x1 = R

    @property
    def k_max(self):
        return len(self.coefficients)

    @property
    def rates(self):
        k = np.arange(1, self.k_max + 1)
        return np.sqrt(k**2 * PI2 - self.lam)

    def tail_bound(self, x1):
        w = math.sqrt(PI2 - self.lam)
        return math.exp(-x1 * self.k_max * w)

    def sigma_norm(self, rho):
        """L2 norm of the truncated series on the segment {rho} x (-1, 0)."""
        fac = self._x_factor(np.array([rho]), 0)[:, 0]
        return float(np.sqrt(np.sum((self.coefficients * fac) ** 2)))

    def _x_factor(self, x1, order):
        # cosh((R-x)w)/cosh(Rw) etc. written with decaying exponentials only
        w = self.rates[:, None]
        R = self.R
        x = x1[None, :]
        near = np.exp(-x * w)
        far = np.exp(-(2 * R - x) * w)
        even = order % 2 == 0
        if self.end == NEUMANN:
            num = near + far if even else near - far
            den = 1 + np.exp(-2 * R * w)
        else:
            num = near - far if even else near + far
            den = 1 - np.exp(-2 * R * w)
        return (-w) ** order * num / den


def series_eval(sol, x1, x2, d1=0, d2=0):
    """d1-th x1 and d2-th x2 derivative of the truncated arm series."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if np.any(x1 <= 0):
        raise GuideError("the arm series is only valid for x1 > 0")
    x1, x2 = np.broadcast_arrays(x1, x2)
    k = np.arange(1, sol.k_max + 1)
    fx = sol._x_factor(x1.ravel(), d1)  # (K, n)
    kp = k[:, None] * math.pi
    arg = kp * x2.ravel()[None, :]
    # d^m/dx^m sin = (kp)^m sin(arg + m pi/2)
    fy = math.sqrt(2) * kp**d2 * np.sin(arg + d2 * math.pi / 2)
    out = np.sum(sol.coefficients[:, None] * fx * fy, axis=0)
    return out.reshape(x1.shape)


def arm_trace_rule(system, nq=24):
    """Composite Gauss rule on {0} x (-1, 0) aligned with the mesh vertices there."""
    pts = facet_points_on_line(system)
    ys = np.unique(np.concatenate(([-1.0, 0.0], pts)))
    s, w = gauss_legendre(nq)
    xs, ws = [], []
    for a, b in zip(ys[:-1], ys[1:]):
        xs.append((a + b) / 2 + (b - a) / 2 * s)
        ws.append((b - a) / 2 * w)
    return np.concatenate(xs), np.concatenate(ws)


def facet_points_on_line(system, tol=1e-13):
    nodes = system.mesh.nodes
    width = -nodes[:, 1].min()
    on = (np.abs(nodes[:, 0]) < tol) & (nodes[:, 1] <= tol) & (nodes[:, 1] >= -width - tol)
    return np.sort(nodes[on, 1])


def series_from_fem(v, system, lam, k_max=30, nq=24):
    """Sine coefficients of the FE trace on {0} x (-1, 0)."""
    y, w = arm_trace_rule(system, nq)
    g = evaluate(system, v, np.stack([np.zeros_like(y), y], axis=1))
    k = np.arange(1, k_max + 1)
    S = math.sqrt(2) * np.sin(math.pi * k[:, None] * y[None, :])
    coeffs = S @ (w * g)
    R = system.region_stretch("T1")[0]
    end = system.bc_map.get("sigma1", NEUMANN)
    return SeriesSolution(float(R), float(lam), coeffs, end)


def fem_eval_physical(system, v, x1, x2, derivatives=False):
    """Evaluate an FE vector of a stretched reference system at physical points."""
    pts = np.stack(np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float)), axis=-1)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, 2)
    ref = unstretch_points(pts, system.stretch)
    if not derivatives:
        return evaluate(system, v, ref).reshape(shape)
    vals, grads = evaluate(system, v, ref, derivatives=True)
    sx = np.where(pts[:, 0] > 0, system.region_stretch("T1")[0], 1.0)
    sy = np.where(pts[:, 1] > 0, system.region_stretch("T2")[1], 1.0)
    grads = grads / np.stack([sx, sy], axis=1)
    return vals.reshape(shape), grads.reshape(shape + (2,))


def fem_sigma_norm(system, v, rho, nq=24):
    """L2 norm of the FE function on the segment {rho} x (-1, 0)."""
    y, w = arm_trace_rule(system, nq)
    vals = fem_eval_physical(system, v, np.full_like(y, rho), y)
    return float(math.sqrt(np.dot(w, vals**2)))
