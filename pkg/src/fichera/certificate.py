"""Variational certificate that the rounded guide has an eigenvalue below pi^2.

The trial function is the Helmholtz extension psi0 of the transverse mode
phi(t) = sqrt(2) sin(pi t) into the quarter disk, glued to the exponential
tails exp(-mu x) phi on the two straight arms.
"""
from dataclasses import asdict, dataclass, field
import json
import math

import numpy as np

from .basis import BasisSpec, gauss_legendre
from .fem import assemble, energy, solve_helmholtz
from .geometry import (DIRICHLET, NEUMANN, Geometry2D, GradingSpec, build_guide_mesh,
                       build_quarter_disk_mesh)

PI2 = math.pi**2


class CertificateError(RuntimeError):
    pass


def phi(t):
    """Normalized transverse ground mode on (-1, 0)."""
    return math.sqrt(2.0) * np.sin(math.pi * np.asarray(t, dtype=float))


def radial_energy(profile, dprofile, n_radial=64):
    """J(f(|x|)) on the quarter disk by Gauss quadrature in r (exact in theta)."""
    s, w = gauss_legendre(n_radial)
    r = 0.5 * (s + 1.0)
    w = 0.5 * w
    integrand = (dprofile(r) ** 2 - PI2 * profile(r) ** 2) * r
    return 0.5 * math.pi * float(np.dot(w, integrand))


def radial_testfn_energy(n_radial=64, frequency=1.0):
    """J of -sqrt(2) sin(frequency * pi * r); zero for frequency 1."""
    k = frequency * math.pi
    return radial_energy(lambda r: -math.sqrt(2) * np.sin(k * r),
                         lambda r: -math.sqrt(2) * k * np.cos(k * r), n_radial)


def disk_boundary_data(x, y, tol=1e-12):
    """phi on the two straight sides of the quarter disk, 0 on the arc."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    on1 = np.abs(x) < tol
    on2 = (np.abs(y) < tol) & ~on1
    out[on1] = phi(y[on1])
    out[on2] = phi(x[on2])
    return out


@dataclass
class Extension:
    u: np.ndarray
    system: object
    J_psi0: float
    norm_psi0_sq: float
    lambda_dir: float  # lowest Dirichlet eigenvalue of the discrete disk problem


def solve_helmholtz_extension(mesh=None, basis=8, boundary_fn=disk_boundary_data,
                              grading=None, base=4):
    """psi0 with -Lap psi0 = pi^2 psi0 in the quarter disk and trace ``boundary_fn``."""
    if mesh is None:
        mesh = build_quarter_disk_mesh(grading or GradingSpec(4, 0.1), base)
    if not isinstance(basis, BasisSpec):
        basis = BasisSpec(int(basis))
    sol = solve_helmholtz(mesh, basis, PI2, boundary_fn,
                          {"arc": DIRICHLET, "side1": DIRICHLET, "side2": DIRICHLET})
    J, nrm = energy(sol.system, sol.u, PI2)
    return Extension(sol.u, sol.system, J, nrm, sol.min_eigenvalue)


def rayleigh_formula(J, norm_sq, mu):
    return PI2 + mu * (mu + J) / (1.0 + mu * norm_sq)


@dataclass
class Certificate:
    J_psi0: float
    norm_psi0_sq: float
    mu_shift: float
    rayleigh: float
    verdict: bool
    rayleigh_direct: float = math.nan
    tail_length: float = math.nan
    discretization: dict = field(default_factory=dict)

    @property
    def rayleigh_over_pi2(self):
        return self.rayleigh / PI2

    def to_json(self):
        d = asdict(self)
        d["rayleigh_over_pi2"] = self.rayleigh_over_pi2
        return json.dumps(d, sort_keys=True, indent=2)


def certify(ext, direct=True, tail_mass=1e-10):
    """Evaluate the Rayleigh quotient of the glued trial function at mu = |J|/2."""
    J = ext.J_psi0
    if not J < 0:
        raise CertificateError(f"J(psi0) = {J:.6g} is not negative; no certificate")
    mu = 0.5 * abs(J)
    ray = rayleigh_formula(J, ext.norm_psi0_sq, mu)
    disc = {"degree": ext.system.basis.degree, "n_elements": ext.system.mesh.n_elements}
    cert = Certificate(J, ext.norm_psi0_sq, mu, ray, bool(ray < PI2), discretization=disc)
    if direct:
        cert.rayleigh_direct, cert.tail_length = glued_rayleigh(ext, mu, tail_mass)
    return cert


def tail_length_for(mu, tail_mass):
    """Arm length beyond which the exponential tail carries L2 mass below ``tail_mass``."""
    return max(1.0, math.ceil(math.log(1.0 / (2 * mu * tail_mass)) / (2 * mu)))


def glued_rayleigh(ext, mu, tail_mass=1e-10, base=None):
    """Rayleigh quotient of the glued trial function, assembled on a truncated rounded guide.

    The disk values are copied from psi0; the arms carry the nodal interpolant of
    exp(-mu x) phi.  Stiffness and mass are assembled without boundary
    elimination (the trial function vanishes on the walls by construction).
    """
    R = tail_length_for(mu, tail_mass)
    disk = ext.system
    base = base or disk.mesh.meta.get("base", 4)
    grading = disk.mesh.meta.get("grading", GradingSpec(4, 0.1))
    geom = Geometry2D("rounded-guide", float(R))
    mesh = build_guide_mesh(geom, grading, base)
    sys = assemble(mesh, disk.basis, {t: NEUMANN for t in mesh.tags()})
    x, y = sys.dofmap.coords.T
    u = np.where(x > 0, np.exp(-mu * np.maximum(x, 0)) * phi(y), 0.0)
    u = np.where(y > 0, np.exp(-mu * np.maximum(y, 0)) * phi(x), u)
    inside = (x <= 1e-14) & (y <= 1e-14)
    # disk dofs: match by coordinates
    key = {(round(a, 12), round(b, 12)): i for i, (a, b) in enumerate(disk.dofmap.coords)}
    idx = np.array([key.get((round(a, 12), round(b, 12)), -1)
                    for a, b in zip(x[inside], y[inside])])
    if np.any(idx < 0):
        raise CertificateError("disk dofs of the glued mesh do not match the extension mesh")
    u[inside] = ext.u[idx]
    num, den = energy(sys, u)
    return num / den, float(R)


def run_certificate(degree=8, base=4, grading=None, tail_mass=1e-10):
    grading = grading or GradingSpec(4, 0.1)
    mesh = build_quarter_disk_mesh(grading, base)
    ext = solve_helmholtz_extension(mesh, BasisSpec(degree))
    cert = certify(ext, True, tail_mass)
    cert.discretization.update({"base": base, "layers": grading.layers, "ratio": grading.ratio})
    return cert, ext
