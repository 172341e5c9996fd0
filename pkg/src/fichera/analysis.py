"""Rate fits, limit extrapolation, gap reports and the lower/upper sandwich."""
from dataclasses import asdict, dataclass, field
import hashlib
import json
import math

import numpy as np

PI2 = math.pi**2


class AnalysisError(ValueError):
    pass


@dataclass
class FitResult:
    slope: float
    intercept: float
    window: tuple
    max_abs_residual: float
    local_slopes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def fit_exponential(series, window=None):
    """Least-squares slope of log(dir - mix) against R.

    ``series`` holds (R, dir_value, mix_value) triples; ``window`` = (R_min, R_max)
    defaults to the last 6 units of R.
    """
    data = sorted((float(R), float(d), float(m)) for R, d, m in series)
    if not data:
        raise AnalysisError("empty series")
    Rmax = data[-1][0]
    lo, hi = window if window is not None else (Rmax - 6.0, Rmax)
    sel = [(R, d - m) for R, d, m in data if lo - 1e-12 <= R <= hi + 1e-12]
    if len(sel) < 2:
        raise AnalysisError(f"fewer than two points in window {lo, hi}")
    R = np.array([s[0] for s in sel])
    diff = np.array([s[1] for s in sel])
    if np.any(diff <= 0):
        bad = R[diff <= 0]
        raise AnalysisError(f"nonpositive difference at R = {bad.tolist()}; shrink the window")
    y = np.log(diff)
    A = np.stack([R, np.ones_like(R)], axis=1)
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * R + icpt)
    local = (np.diff(y) / np.diff(R)).tolist()
    return FitResult(float(slope), float(icpt), (float(lo), float(hi)),
                     float(np.abs(resid).max()), local)


def extrapolate_lambda_inf(dir_value, mix_value, rtol=1e-10):
    """Mean of the bracketing pair and its half-difference.

    A pair converged to round-off may come out inverted by a few ulps; only an
    inversion larger than ``rtol`` is an error.
    """
    if mix_value - dir_value > rtol * abs(dir_value):
        raise AnalysisError("dir value below mix value")
    return 0.5 * (dir_value + mix_value), 0.5 * abs(dir_value - mix_value)


def extrapolate_p(degrees, values, model="geometric"):
    """Limit of a sequence of Galerkin eigenvalues in the polynomial degree.

    ``geometric``: lambda(p) = L + C q^p through the last three values (Aitken).
    ``algebraic``: lambda(p) = L + C p^-b through the last three values.
    Returns (limit, bracket_low, bracket_high) where the upper end is the last
    computed value.
    """
    p = np.asarray(degrees, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        return float(v[-1]), float(v[-1]), float(v[-1])
    order = np.argsort(p)
    p, v = p[order], v[order]
    a, b, c = v[-3:]
    d1, d2 = b - a, c - b
    if model == "geometric":
        den = d2 - d1
        if den == 0 or d1 == 0 or d2 / d1 <= 0 or d2 / d1 >= 1:
            return float(c), float(c), float(c)
        lim = c - d2**2 / den
    elif model == "algebraic":
        from scipy.optimize import brentq

        p1, p2, p3 = p[-3:]

        def f(beta):
            return (b - a) / (c - b) - (p1**-beta - p2**-beta) / (p2**-beta - p3**-beta)

        try:
            beta = brentq(f, 0.05, 30.0)
        except ValueError:
            return float(c), float(c), float(c)
        C = (c - b) / (p3**-beta - p2**-beta)
        lim = c - C * p3**-beta
    else:
        raise AnalysisError(f"unknown model {model!r}")
    return float(lim), float(min(lim, c)), float(max(lim, c))


@dataclass
class GapReport:
    lambda_ess: float
    lambda_1: float
    lambda_1_bracket: tuple
    gap: float
    agmon_gamma: float
    fitted_beta: float
    note: str = ""

    def to_dict(self):
        d = asdict(self)
        d["lambda_ess_over_pi2"] = self.lambda_ess / PI2
        d["lambda_1_over_pi2"] = self.lambda_1 / PI2
        return d


def gap_report(lambda_ess, layer_series, lambda_1=None, bracket=None, window=None):
    """Relative gap, Agmon rate and observed decay slope of a 3D layer sweep.

    ``layer_series`` holds (R, dir_lambda1, mix_lambda1); ``lambda_1`` defaults to
    the mean of the pair at the largest R.
    """
    data = sorted(layer_series)
    if lambda_1 is None:
        R, d, m = data[-1]
        lambda_1, half = extrapolate_lambda_inf(d, m)
        bracket = bracket or (m, d)
    bracket = tuple(bracket) if bracket is not None else (lambda_1, lambda_1)
    gap = (lambda_ess - lambda_1) / lambda_1
    if lambda_1 <= lambda_ess:
        gamma = math.sqrt(lambda_ess - lambda_1)
        note = ""
    else:
        gamma = math.nan
        note = "no bound state resolved: lambda_1 >= lambda_ess"
    beta = math.nan
    if len(data) >= 2:
        Rmax = data[-1][0]
        try:
            fit = fit_exponential(data, window or (Rmax - 4.0, Rmax))
            beta = -fit.slope
        except AnalysisError as exc:
            note = (note + "; " if note else "") + str(exc)
    if math.isfinite(beta) and math.isfinite(gamma):
        note = (note + "; " if note else "") + f"beta - 2 gamma = {beta - 2 * gamma:+.4f}"
    return GapReport(lambda_ess, lambda_1, bracket, gap, gamma, beta, note)


@dataclass
class Sandwich:
    mu_star: float
    lambda_1: float
    lambda_inf: float
    ok: bool
    lower_margin: float
    upper_margin: float


def lower_upper_sandwich(mu_star, lambda_inf, lambda_1, slack=1e-3):
    """Check mu_star <= lambda_1 <= lambda_inf up to a relative slack."""
    lower = lambda_1 - mu_star
    upper = lambda_inf - lambda_1
    ok = lower >= -slack * abs(lambda_1) and upper >= -slack * abs(lambda_1)
    return Sandwich(mu_star, lambda_1, lambda_inf, bool(ok), lower, upper)


# ---------------------------------------------------------------------------
# deterministic serialization


def canonical_json(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=True) + "\n"


def _plain(obj):
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    if hasattr(obj, "__dataclass_fields__"):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(f"{float(obj):.17g}")
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def write_pair_csv(fh, rows):
    """Rows of (R, dir, mix) with normalized columns and log-difference."""
    import csv

    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["R", "lambda_dir", "lambda_mix", "dir_over_pi2", "mix_over_pi2", "log_diff"])
    for R, d, m in rows:
        ld = math.log(d - m) if d > m else float("nan")
        w.writerow([f"{R:.17g}", f"{d:.17g}", f"{m:.17g}", f"{d / PI2:.17g}", f"{m / PI2:.17g}",
                    f"{ld:.17g}"])
