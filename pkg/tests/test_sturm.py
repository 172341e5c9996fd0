import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fichera import guides, sturm

PI2 = math.pi**2


def const(c):
    return lambda x: np.full_like(np.asarray(x, dtype=float), c)


def model_curve():
    xs = np.geomspace(1e-3, 10, 25)
    vals = PI2 * (0.93 - 0.4 * np.exp(-1.5 * xs) - 0.03 / (1 - np.log(xs) / 2))
    vals = np.maximum.accumulate(np.maximum(vals, 0.5 * PI2 + 1e-3))
    return guides.LambdaCurve(list(zip(xs, vals)), lambda_inf=float(vals[-1]))


def test_constant_potential_is_exact():
    r = sturm.solve_sturm(sturm.SturmProblem(-0.5, const(3.0), R_trunc=5.0))
    assert r.mu == pytest.approx(3.0, rel=1e-12)


@pytest.mark.parametrize("L,R", [(-0.5, 2.0), (0.0, 7.0)])
def test_zero_potential_dirichlet_far_end(L, R):
    r = sturm.solve_sturm(sturm.SturmProblem(L, const(0.0), R_trunc=R, far_bc="D"))
    assert r.mu == pytest.approx((math.pi / (2 * (R - L))) ** 2, rel=1e-11)


def test_single_crossing_and_Lstar():
    prob = sturm.SturmProblem(-0.2, model_curve())
    n, d = sturm.sign_changes(prob, np.linspace(-0.95, -0.01, 40))
    assert n == 1
    ls = sturm.find_Lstar(prob, tol=1e-6)
    assert -1 < ls.L_star < 0
    assert ls.mu_star == pytest.approx(ls.lambda_at_L_star, rel=1e-4)
    L, mu = sturm.min_mu(prob)
    assert mu == pytest.approx(ls.mu_star, rel=1e-6)


@pytest.mark.parametrize("L", [-0.6, -0.2, 0.4])
def test_mu_derivative(L):
    prob = sturm.SturmProblem(L, model_curve())
    h = 1e-4
    fd = (sturm.solve_sturm(prob.at(L + h)).mu - sturm.solve_sturm(prob.at(L - h)).mu) / (2 * h)
    assert sturm.mu_derivative(L, prob) == pytest.approx(fd, rel=1e-4)


def test_far_truncation_insensitive():
    c = model_curve()
    for L in (-0.5, 0.5):
        a = sturm.solve_sturm(sturm.SturmProblem(L, c, R_trunc=40.0)).mu
        b = sturm.solve_sturm(sturm.SturmProblem(L, c, R_trunc=80.0)).mu
        assert abs(a / b - 1) < 1e-8


@given(st.floats(0.2, 3.0), st.floats(0.0, 5.0), st.floats(-1.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_bargmann_closed_form(omega, L, L0):
    a = sturm.bargmann_bound(omega, L, L0)
    b = sturm.bargmann_bound_quadrature(omega, L, L0)
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_validation():
    with pytest.raises(sturm.SturmError):
        sturm.SturmProblem(-1.0, const(1.0))
    with pytest.raises(sturm.SturmError):
        sturm.SturmProblem(0.0, const(1.0), far_bc="X")
    with pytest.raises(sturm.SturmError):
        sturm.mu_derivative(0, sturm.SturmProblem(0.5, const(1.0)))
