import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fichera import analysis


@given(st.floats(0.1, 2.0), st.floats(-1, 3))
@settings(max_examples=40, deadline=None)
def test_fit_recovers_rate(rate, c):
    rows = [(R, 0.5 + math.exp(c - rate * R), 0.5) for R in range(1, 11)]
    fit = analysis.fit_exponential(rows, (4, 10))
    assert fit.slope == pytest.approx(-rate, rel=1e-6)
    assert fit.max_abs_residual < 1e-6


def test_fit_rejects_nonpositive_difference():
    rows = [(1, 2.0, 1.0), (2, 1.0, 1.0), (3, 1.5, 1.0)]
    with pytest.raises(analysis.AnalysisError):
        analysis.fit_exponential(rows, (1, 3))


def test_extrapolate_models():
    p = np.arange(1, 7)
    geo = 0.9 + 0.3 * 0.4**p
    lim, lo, hi = analysis.extrapolate_p(p, geo, "geometric")
    assert lim == pytest.approx(0.9, rel=1e-12) and lo <= lim <= hi
    alg = 0.9 + 0.2 * p**-2.5
    lim, _, _ = analysis.extrapolate_p(p, alg, "algebraic")
    assert lim == pytest.approx(0.9, rel=1e-9)
    with pytest.raises(analysis.AnalysisError):
        analysis.extrapolate_p(p, alg, "nope")


def test_gap_report_and_sandwich():
    lam_ess, lam1 = 10.0, 9.0
    rows = [(R, lam1 + math.exp(-2 * R), lam1 - math.exp(-2 * R)) for R in range(2, 11)]
    g = analysis.gap_report(lam_ess, rows)
    assert g.gap == pytest.approx(1 / 9)
    assert g.agmon_gamma == pytest.approx(1.0)
    assert g.fitted_beta == pytest.approx(2.0)
    s = analysis.lower_upper_sandwich(8.5, lam_ess, lam1)
    assert s.ok and s.lower_margin > 0 and s.upper_margin > 0
    assert not analysis.lower_upper_sandwich(9.5, lam_ess, lam1).ok


def test_canonical_json_and_hash():
    a = {"b": [1.0, np.float64(2.5)], "a": np.int64(3)}
    b = {"a": 3, "b": [1.0, 2.5]}
    assert analysis.canonical_json(a) == analysis.canonical_json(b)
    assert analysis.config_hash(a) == analysis.config_hash(b)
    assert analysis.config_hash({"x": 1}) != analysis.config_hash({"x": 2})


def test_pair_csv():
    buf = io.StringIO()
    analysis.write_pair_csv(buf, [(1.0, 2.0, 1.0)])
    lines = buf.getvalue().splitlines()
    assert lines[0].startswith("R,lambda_dir")
    assert lines[1].endswith(",0")


def test_lambda_inf_pair():
    assert analysis.extrapolate_lambda_inf(3.0, 1.0) == (2.0, 1.0)
    lam, half = analysis.extrapolate_lambda_inf(1.0, 1.0 + 1e-14)
    assert lam == pytest.approx(1.0) and half < 1e-13
    with pytest.raises(analysis.AnalysisError):
        analysis.extrapolate_lambda_inf(1.0, 1.1)
