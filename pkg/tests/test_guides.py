import math

import numpy as np
import pytest

from fichera import guides
from fichera.geometry import DIRICHLET, NEUMANN

PI2 = math.pi**2
LOW = guides.Discretization(degree=6)


def test_closed_form_branch():
    assert guides.lambda_of(0.0) == pytest.approx(PI2 / 2, rel=1e-15)
    assert guides.lambda_of(-0.5) == pytest.approx(2 * PI2, rel=1e-15)
    with pytest.raises(guides.GuideError):
        guides.lambda_of(-1.0)


def test_bracketing_and_monotonicity_in_R():
    dirs, mixes = [], []
    for R in (1.0, 2.0, 3.0):
        d, m = guides.guide_pair_values("broken-guide", R, LOW)
        assert m <= d
        dirs.append(d)
        mixes.append(m)
    assert np.all(np.diff(dirs) < 0) and np.all(np.diff(mixes) > 0)
    assert all(PI2 / 2 < v < PI2 for v in mixes)


def test_dirichlet_mixed_pair_api():
    from fichera.geometry import Geometry2D

    d, m = guides.dirichlet_mixed_pair(Geometry2D("rounded-guide", 2.0), 2.0, LOW, count=2)
    assert len(d) == 2 and np.all(m.values <= d.values)
    with pytest.raises(guides.GuideError):
        guides.dirichlet_mixed_pair(Geometry2D("rounded-guide", 2.0), -1.0, LOW)


def test_derivative_formula_matches_finite_difference():
    disc = guides.Discretization(degree=10)
    R, h = 1.5, 1e-3
    deriv, bound = guides.eigen_derivative(R, disc)
    fd = (guides.lambda_of(R + h, disc) - guides.lambda_of(R - h, disc)) / (2 * h)
    assert deriv == pytest.approx(fd, rel=1e-4)
    assert deriv >= bound > 0
    one, _ = guides.eigen_derivative(R, disc, both_faces=False)
    assert one == pytest.approx(deriv, rel=1e-8)  # symmetric guide


def test_series_reproduces_fem_on_the_arm():
    disc = guides.Discretization(degree=12, base=4)
    R = 6.0
    lam, v, system, _ = guides.ground_state("broken-guide", R, disc)
    sol = guides.series_from_fem(v, system, lam, 30)
    x2 = np.linspace(-0.9, -0.1, 9)
    fe = guides.fem_eval_physical(system, v, np.full_like(x2, 3.0), x2)
    assert np.abs(fe - guides.series_eval(sol, 3.0, x2)).max() < 1e-6
    assert sol.sigma_norm(2.0) == pytest.approx(guides.fem_sigma_norm(system, v, 2.0), rel=1e-5)


def test_lambda_curve_interpolant():
    xs = [0.01, 0.1, 1.0, 3.0]
    vals = [0.6 * PI2, 0.7 * PI2, 0.85 * PI2, 0.9 * PI2]
    c = guides.LambdaCurve(list(zip(xs, vals)), lambda_inf=0.9 * PI2)
    assert c(0.0) == pytest.approx(PI2 / 2)
    assert c(-0.5) == pytest.approx(2 * PI2)
    assert c(50.0) == pytest.approx(0.9 * PI2)
    t = np.linspace(0, 3, 200)
    assert np.all(np.diff(c(t)) >= -1e-12)  # monotone data stays monotone
    assert c.check() == []
    bad = guides.LambdaCurve(list(zip(xs, vals[::-1])))
    assert bad.check()
    with pytest.raises(guides.GuideError):
        guides.LambdaCurve([(0.0, 1.0)])


def test_sweep_cache_roundtrip(tmp_path):
    a = guides.lambda_of(0.7, LOW, tmp_path)
    files = list(tmp_path.glob("*.json"))
    assert len(files) == 1
    assert guides.lambda_of(0.7, LOW, tmp_path) == a
    curve = guides.sweep_lambda([0.1, 0.7, 2.0], LOW, tmp_path)
    assert curve.samples[1][1] == a
    with pytest.raises(guides.GuideError):
        guides.sweep_lambda([2.0, 0.1], LOW)


def test_guide_rejects_bad_R():
    with pytest.raises(guides.GuideError):
        guides.guide_eigenpairs("broken-guide", 0.0, NEUMANN, LOW)


def test_layer_dof_guard():
    with pytest.raises(guides.GuideError):
        guides.layer_eigenpairs("fichera-layer", 4.0, DIRICHLET, 6, max_dofs=1000)
