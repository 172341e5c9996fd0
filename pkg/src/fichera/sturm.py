"""One-dimensional reduction: -q'' + lambda(x) q on (L, R_trunc)."""
from dataclasses import dataclass, field, replace
import csv
import json
import math

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.linalg import eigsh

from .basis import gauss_legendre, gll_points, lagrange_eval

PI2 = math.pi**2


class SturmError(RuntimeError):
    pass


@dataclass(frozen=True)
class SturmProblem:
    L: float
    potential: object  # callable x -> lambda(x); may expose ``knots``
    R_trunc: float = 40.0
    far_bc: str = "N"
    degree: int = 10
    h_max: float = 0.25
    h_far: float = 1.0  # element size beyond the last potential knot

    def __post_init__(self):
        if self.L <= -1:
            raise SturmError("L must exceed -1")
        if self.L >= self.R_trunc:
            raise SturmError("L must be smaller than R_trunc")
        if self.far_bc not in ("N", "D"):
            raise SturmError("far_bc must be 'N' or 'D'")

    def at(self, L):
        return replace(self, L=float(L))


@dataclass
class SturmResult:
    L: float
    mu: float
    q: np.ndarray  # nodal values on ``x``
    x: np.ndarray
    q_at_L: float
    lambda_at_L: float

    @property
    def mu_over_pi2(self):
        return self.mu / PI2


@dataclass
class LstarResult:
    L_star: float
    mu_star: float
    bracket: float
    lambda_at_L_star: float
    evaluations: int = 0
    history: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"L_star": self.L_star, "mu_star": self.mu_star,
                           "mu_star_over_pi2": self.mu_star / PI2, "bracket": self.bracket,
                           "lambda_at_L_star": self.lambda_at_L_star}, sort_keys=True, indent=2)


def element_breaks(prob):
    """Element endpoints: L, 0, the potential's knots, R_trunc, refined to h_max."""
    pts = {float(prob.L), float(prob.R_trunc)}
    if prob.L < 0 < prob.R_trunc:
        pts.add(0.0)
    knots = getattr(prob.potential, "knots", None)
    if knots is not None:
        pts.update(float(k) for k in np.asarray(knots) if prob.L < k < prob.R_trunc)
    pts = np.array(sorted(pts))
    last_knot = float(np.max(knots)) if knots is not None else -np.inf
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        # geometric split toward -1 keeps elements small where lambda blows up
        h = prob.h_far if a >= last_knot else prob.h_max
        if a < 0:
            h = min(h, max(0.02, 0.5 * (1 + a)))
        n = max(1, int(math.ceil((b - a) / h - 1e-12)))
        out.extend(a + (b - a) * np.arange(1, n + 1) / n)
    out = np.array(out)
    out[-1] = prob.R_trunc
    return out


def solve_sturm(prob, nq=None):
    """Lowest eigenpair of the Sturm-Liouville operator by degree-p continuous FEM."""
    p = int(prob.degree)
    breaks = element_breaks(prob)
    ne = len(breaks) - 1
    nodes = gll_points(p)
    nq = nq or p + 6
    s, w = gauss_legendre(nq)
    phi, dphi = lagrange_eval(nodes, s)
    a, b = breaks[:-1], breaks[1:]
    h = b - a
    xq = (a[:, None] + b[:, None]) / 2 + (h[:, None] / 2) * s[None, :]
    V = np.asarray(prob.potential(xq.ravel()), dtype=float).reshape(xq.shape)
    if not np.all(np.isfinite(V)):
        raise SturmError("potential undefined on part of the interval")
    # element matrices
    Kref = dphi.T @ (w[:, None] * dphi)
    Mref = phi.T @ (w[:, None] * phi)
    Ke = (2 / h)[:, None, None] * Kref[None]
    Ke += np.einsum("qi,eq,qj->eij", phi, V * (w[None, :] * h[:, None] / 2), phi)
    Me = (h / 2)[:, None, None] * Mref[None]
    dofs = np.arange(ne)[:, None] * p + np.arange(p + 1)[None, :]
    n = ne * p + 1
    rows = np.repeat(dofs, p + 1, axis=1).ravel()
    cols = np.tile(dofs, (1, p + 1)).ravel()
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K = 0.5 * (K + K.T)
    free = np.arange(n)
    if prob.far_bc == "D":
        free = free[:-1]
    Kf = K[free][:, free]
    Mf = M[free][:, free]
    # the 1D spectrum is simple, so single-vector shift-invert Lanczos is reliable here
    vals, vecs = eigsh(Kf.tocsc(), k=1, M=Mf.tocsc(), sigma=0.0, which="LM", tol=0.0)
    mu = float(vals[0])
    v = vecs[:, 0] / math.sqrt(vecs[:, 0] @ (Mf @ vecs[:, 0]))
    q = np.zeros(n)
    q[free] = v
    if q[0] < 0:
        q = -q
    x = (a[:, None] + (nodes[None, :] + 1) / 2 * h[:, None])
    xs = np.concatenate([x[:, :-1].ravel(), [breaks[-1]]])
    lam_L = float(prob.potential(np.array([prob.L]))[0])
    return SturmResult(float(prob.L), mu, q, xs, float(q[0]), lam_L)


def mu_curve(L_samples, prob):
    """(L, mu(L), q_L(L), lambda(L)) for each sample."""
    out = []
    for L in L_samples:
        r = solve_sturm(prob.at(L))
        out.append((r.L, r.mu, r.q_at_L, r.lambda_at_L))
    return out


def write_mu_csv(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["L", "mu", "mu_over_pi2", "lambda_at_L", "q_at_L"])
    for L, mu, qL, lam in rows:
        w.writerow([f"{L:.17g}", f"{mu:.17g}", f"{mu / PI2:.17g}", f"{lam:.17g}", f"{qL:.17g}"])


def mu_derivative(L, prob, result=None):
    """mu'(L) = (mu(L) - lambda(L)) q_L(L)^2."""
    if L == 0:
        raise SturmError("the potential is not differentiable at 0")
    r = result or solve_sturm(prob.at(L))
    return (r.mu - r.lambda_at_L) * r.q_at_L**2


def find_Lstar(prob, tol=1e-4, lo=-0.99, hi=-1e-6, max_iter=200):
    """Bisection on sign(mu(L) - lambda(L)) over (lo, hi) inside (-1, 0)."""
    def f(L):
        r = solve_sturm(prob.at(L))
        return r.mu - r.lambda_at_L, r

    flo, _ = f(lo)
    fhi, _ = f(hi)
    evals = 2
    if not (flo < 0 < fhi):
        raise SturmError(
            f"no sign change of mu - lambda on ({lo}, {hi}): {flo:.3e}, {fhi:.3e}")
    hist = []
    it = 0
    while hi - lo > tol and it < max_iter:
        mid = 0.5 * (lo + hi)
        fm, _ = f(mid)
        evals += 1
        hist.append((mid, fm))
        if fm < 0:
            lo = mid
        else:
            hi = mid
        it += 1
    Ls = 0.5 * (lo + hi)
    r = solve_sturm(prob.at(Ls))
    return LstarResult(Ls, r.mu, hi - lo, r.lambda_at_L, evals + 1, hist)


def sign_changes(prob, L_grid):
    """Number of sign changes of mu - lambda along ``L_grid``."""
    vals = [solve_sturm(prob.at(L)) for L in L_grid]
    d = np.array([r.mu - r.lambda_at_L for r in vals])
    sgn = np.sign(d)
    sgn = sgn[sgn != 0]
    return int(np.count_nonzero(np.diff(sgn))), d


def min_mu(prob, lo=-0.9, hi=-0.01, tol=1e-7):
    """min over L of mu(L) by bounded scalar minimization."""
    from scipy.optimize import minimize_scalar

    r = minimize_scalar(lambda L: solve_sturm(prob.at(L)).mu, bounds=(lo, hi),
                        method="bounded", options={"xatol": tol})
    return float(r.x), float(r.fun)


def bargmann_bound(omega, L, L0):
    """1 + 2 int_L^inf t exp(-2 omega (t - L0)) dt in closed form."""
    if omega <= 0:
        raise SturmError("omega must be positive")
    return 1.0 + 2.0 * math.exp(2 * omega * (L0 - L)) * (L / (2 * omega) + 1 / (4 * omega**2))


def bargmann_bound_quadrature(omega, L, L0):
    val, _ = integrate.quad(lambda t: t * math.exp(-2 * omega * (t - L0)), L, np.inf,
                            epsabs=1e-14, epsrel=1e-13)
    return 1.0 + 2.0 * val
