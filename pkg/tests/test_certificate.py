import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fichera import certificate
from fichera.basis import BasisSpec, gauss_legendre
from fichera.fem import energy
from fichera.geometry import GradingSpec, build_quarter_disk_mesh

PI2 = math.pi**2


def test_phi_normalized():
    s, w = gauss_legendre(30)
    t = 0.5 * (s - 1)
    assert 0.5 * w @ certificate.phi(t) ** 2 == pytest.approx(1.0, rel=1e-14)


def test_radial_energy():
    assert abs(certificate.radial_testfn_energy()) < 1e-12
    assert abs(certificate.radial_testfn_energy(frequency=2.0)) > 1.0


@given(st.floats(-5, -1e-6), st.floats(0.01, 10))
@settings(max_examples=50, deadline=None)
def test_negative_J_gives_quotient_below_threshold(J, N):
    assert certificate.rayleigh_formula(J, N, abs(J) / 2) < PI2


def test_tail_length():
    mu = 0.36608814 / 2
    R = certificate.tail_length_for(mu, 1e-10)
    assert R == 66
    assert math.exp(-2 * mu * R) / (2 * mu) < 1e-10


@pytest.fixture(scope="module")
def ext():
    mesh = build_quarter_disk_mesh(GradingSpec(3, 0.1), 4)
    return certificate.solve_helmholtz_extension(mesh, BasisSpec(6))


def test_certificate_low_order(ext):
    cert = certificate.certify(ext)
    assert cert.J_psi0 < 0 and cert.verdict
    assert cert.rayleigh_direct == pytest.approx(cert.rayleigh, rel=1e-6)
    assert ext.lambda_dir > PI2


def test_extension_minimizes_energy(ext):
    # J(psi0 + w) = J(psi0) + J(w) > J(psi0) for w vanishing on the boundary
    s = ext.system
    rng = np.random.default_rng(0)
    for _ in range(5):
        w = np.zeros_like(ext.u)
        w[s.free] = 1e-2 * rng.standard_normal(len(s.free))
        assert energy(s, ext.u + w, PI2)[0] > ext.J_psi0


def test_zero_data_rejected():
    mesh = build_quarter_disk_mesh(GradingSpec(2, 0.1), 2)
    e = certificate.solve_helmholtz_extension(mesh, BasisSpec(4), lambda x, y: 0 * x)
    with pytest.raises(certificate.CertificateError):
        certificate.certify(e)
