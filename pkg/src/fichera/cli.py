"""Command-line front end: sweeps, the lambda curve, the 1D reduction, 3D layers,
the certificate and the full reproduction report.

Exit codes: 0 success, 1 usage error, 2 solver failure, 3 acceptance failure
(``reproduce`` exits with the number of failed criteria).
"""
import argparse
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, certificate, guides, reproduce, sturm
from .eigensolve import DEFAULT_SEED, EigenSolverError
from .geometry import DIRICHLET, NEUMANN

log = logging.getLogger("fichera")

PI2 = math.pi**2

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_ACCEPT = 0, 1, 2, 3

GEOMETRIES_2D = {"broken": "broken-guide", "rounded": "rounded-guide",
                 "scaled": "scaled-broken-guide"}
GEOMETRIES_3D = {"fichera": "fichera-layer", "scaled": "scaled-fichera-layer"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    geometry: str = "broken"
    R: list = field(default_factory=list)
    p: int = 16
    layers: int = 4
    ratio: float = 0.1
    base: int = 2
    grid: int = 1
    count: int = 1
    tol: float = 1e-10
    seed: int = DEFAULT_SEED
    out: str = "out"
    cache: str = ""
    workers: int = 1

    def validate(self):
        if self.p < 1:
            raise UsageError("p must be >= 1")
        if self.layers < 0 or not 0 < self.ratio < 1:
            raise UsageError("grading needs layers >= 0 and 0 < ratio < 1")
        if self.base < 1 or self.grid < 1 or self.count < 1 or self.workers < 1:
            raise UsageError("base, grid, count and workers must be positive")
        if any(r <= 0 for r in self.R):
            raise UsageError("R values must be positive")
        return self

    def disc(self):
        return guides.Discretization(degree=self.p, layers=self.layers, ratio=self.ratio,
                                     base=self.base, tol=self.tol, seed=self.seed)

    def record(self):
        return asdict(self)

    @property
    def hash(self):
        # where results go and how many processes compute them does not change them
        rec = {k: v for k, v in self.record().items() if k not in ("out", "cache", "workers")}
        return analysis.config_hash(rec)


def parse_range(spec):
    """``a:b`` gives a, then every integer in (a, b]; ``x,y,z`` is an explicit list."""
    spec = str(spec).strip()
    try:
        if ":" in spec:
            a, b = (float(s) for s in spec.split(":"))
            if b < a:
                raise UsageError(f"empty range {spec!r}")
            out = [a] + [float(k) for k in range(math.floor(a) + 1, math.floor(b) + 1)]
            return out
        return [float(s) for s in spec.split(",") if s]
    except ValueError:
        raise UsageError(f"bad range {spec!r}") from None


def read_config_file(path):
    """Plain ``key = value`` lines; '#' starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _coerce(name, value):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise UsageError(f"unknown config key {name!r}")
    t = types[name]
    if name == "R":
        return parse_range(value) if isinstance(value, str) else list(value)
    try:
        return {"int": int, "float": float, "str": str}.get(getattr(t, "__name__", t), str)(value)
    except ValueError:
        raise UsageError(f"bad value for {name}: {value!r}") from None


def build_config(args, defaults=None):
    cfg = dict(defaults or {})
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            cfg[f.name] = v
    cfg["command"] = args.command
    conf = RunConfig(**{k: _coerce(k, v) for k, v in cfg.items()})
    if not conf.cache:
        conf.cache = guides.default_cache_dir()
    return conf.validate()


# ---------------------------------------------------------------------------
# output helpers


def _outdir(conf):
    d = Path(conf.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_csv(path, conf, writer):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={conf.hash} seed={conf.seed}\n")
        writer(fh)
    return path


def _write_json(path, conf, payload):
    body = {"config": conf.record(), "config_hash": conf.hash, "seed": conf.seed}
    body.update(payload)
    Path(path).write_text(analysis.canonical_json(body))
    return path


def _pmap(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))  # map keeps input order


# ---------------------------------------------------------------------------
# commands


def _guide_job(args):
    kind, R, disc, cache = args
    return guides.guide_pair_values(kind, R, disc, cache)


def cmd_guide_sweep(conf):
    kind = GEOMETRIES_2D[conf.geometry]
    Rs = conf.R or [float(r) for r in range(1, 11)]
    disc = conf.disc()
    pairs = _pmap(_guide_job, [(kind, R, disc, conf.cache) for R in Rs], conf.workers)
    rows = [(R, d, m) for R, (d, m) in zip(Rs, pairs)]
    out = _outdir(conf)
    stem = f"guide_{conf.geometry}"
    _write_csv(out / f"{stem}.csv", conf, lambda fh: analysis.write_pair_csv(fh, rows))
    payload = {"geometry": kind, "rows": rows}
    if len(rows) >= 2:
        lo = max(Rs[0], Rs[-1] - 6.0)
        try:
            payload["fit"] = analysis.fit_exponential(rows, (lo, Rs[-1])).to_dict()
        except analysis.AnalysisError as exc:
            payload["fit_error"] = str(exc)
    lam, half = analysis.extrapolate_lambda_inf(rows[-1][1], rows[-1][2])
    payload.update(lambda_inf=lam, lambda_inf_over_pi2=lam / PI2, halfgap=half)
    _write_json(out / f"{stem}.json", conf, payload)
    print(f"lambda_inf/pi^2 = {lam / PI2:.8f} +- {half / PI2:.2e}")
    if "fit" in payload:
        print(f"slope of log(dir - mix) = {payload['fit']['slope']:.6f}")
    return EXIT_OK


def cmd_lambda_curve(conf, args):
    disc = conf.disc()
    if args.x3 is not None:
        val = guides.lambda_of(args.x3, disc, conf.cache)
        print(f"lambda({args.x3:g}) = {val:.15g} = {val / PI2:.12f} pi^2")
        return EXIT_OK
    lo, hi = args.x_range
    xs = guides.default_x3_samples(args.n, lo, hi)
    lam_inf = None
    if hi < 10:
        # the plateau value comes from the standard far sample
        d, m = guides.guide_pair_values("broken-guide", 10.0, disc, conf.cache)
        lam_inf = analysis.extrapolate_lambda_inf(d, m)
    curve = guides.sweep_lambda(xs, disc, conf.cache, lam_inf)
    out = _outdir(conf)

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x3", "lambda", "lambda_over_pi2", "branch"])
        for x in np.linspace(-0.9, 0.0, 10):
            v = float(guides.lambda_closed_form(x))
            w.writerow([f"{x:.17g}", f"{v:.17g}", f"{v / PI2:.17g}", "closed"])
        for x, v in curve.samples:
            w.writerow([f"{x:.17g}", f"{v:.17g}", f"{v / PI2:.17g}", "sampled"])

    _write_csv(out / "lambda_curve.csv", conf, write)
    print(f"{len(xs)} samples, lambda(x_max)/pi^2 = {curve.samples[-1][1] / PI2:.8f}")
    return EXIT_OK


def _load_curve(conf, build, n=60):
    disc = conf.disc()
    xs = guides.default_x3_samples(n)
    if not build:
        store = guides.SweepCache(conf.cache)
        missing = [x for x in xs
                   if store.get(guides._cache_key("broken-guide", NEUMANN, disc, x)) is None]
        if missing:
            raise UsageError(f"lambda curve cache incomplete ({len(missing)} of {len(xs)} "
                             "samples missing); rerun with --build or run lambda-curve first")
    d = guides._cached_guide_value("broken-guide", xs[-1], DIRICHLET, disc, conf.cache)
    m = guides.lambda_of(xs[-1], disc, conf.cache)
    return guides.sweep_lambda(xs, disc, conf.cache, analysis.extrapolate_lambda_inf(d, m))


def cmd_sturm(conf, args):
    curve = _load_curve(conf, args.build)
    prob = sturm.SturmProblem(reproduce.L_STAR, curve, degree=args.degree)
    out = _outdir(conf)
    Ls = np.linspace(-0.95, 1.0, 40)
    rows = sturm.mu_curve(Ls, prob)
    _write_csv(out / "sturm_mu.csv", conf, lambda fh: sturm.write_mu_csv(fh, rows))
    ls = sturm.find_Lstar(prob)
    family = {}
    for R in parse_range(args.family):
        fp = sturm.SturmProblem(reproduce.L_STAR, curve, R_trunc=R, far_bc="D",
                                degree=args.degree)
        family[R] = sturm.min_mu(fp)
    omega = curve.omega
    payload = {"L_star": ls.L_star, "mu_star": ls.mu_star, "mu_star_over_pi2": ls.mu_star / PI2,
               "bracket": ls.bracket, "omega": omega,
               "bargmann_bound": sturm.bargmann_bound(omega, max(ls.L_star, 0.0), 0.0),
               "family": {f"{R:g}": {"L_min": L, "mu_min": mu, "mu_min_over_pi2": mu / PI2}
                          for R, (L, mu) in family.items()}}
    _write_json(out / "sturm.json", conf, payload)
    print(f"L* = {ls.L_star:.5f}, mu*/pi^2 = {ls.mu_star / PI2:.6f}")
    for R, (L, mu) in family.items():
        print(f"R = {R:g}: min mu/pi^2 = {mu / PI2:.7f} at L = {L:.4f}")
    return EXIT_OK


def _layer_job(args):
    kind, R, bc, p, grid, count, tol, seed = args
    res, system = guides.layer_eigenpairs(kind, R, bc, p, grid, count, tol, seed)
    return res.values.tolist(), system.n_free


def _slice_rows(kind, R, p, grid, seed):
    from .eigensolve import eigenvector_sign_normalize

    res, system = guides.layer_eigenpairs(kind, R, NEUMANN, p, grid, 1, seed=seed)
    res = eigenvector_sign_normalize(res, system.M)
    u = system.expand(res.vectors[:, 0])
    X = system.dofmap.coords
    on = np.abs(X[:, 0] - X[:, 1]) < 1e-12
    return X[on], u[on]


def cmd_layer3d(conf, args):
    kind = GEOMETRIES_3D.get(conf.geometry)
    if kind is None:
        raise UsageError(f"layer3d geometry must be one of {sorted(GEOMETRIES_3D)}")
    Rs = conf.R or [float(r) for r in range(2, 11)]
    count = max(conf.count, 3)
    jobs = [(kind, R, bc, conf.p, conf.grid, count, conf.tol, conf.seed)
            for R in Rs for bc in (DIRICHLET, NEUMANN)]
    res = _pmap(_layer_job, jobs, conf.workers)
    table = [(R, res[2 * i][0], res[2 * i + 1][0], res[2 * i + 1][1]) for i, R in enumerate(Rs)]
    out = _outdir(conf)

    def write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["R"] + [f"{b}{k + 1}_over_pi2" for b in ("dir", "mix") for k in range(count)]
                   + ["n_free_mix"])
        for R, d, m, n in table:
            w.writerow([f"{R:.17g}"] + [f"{v / PI2:.17g}" for v in d + m] + [n])

    _write_csv(out / f"layer_{conf.geometry}.csv", conf, write)
    rows = [(R, d[0], m[0]) for R, d, m, _ in table]
    lam_ess = args.lambda_ess * PI2 if args.lambda_ess else None
    payload = {"geometry": kind, "table": table}
    if lam_ess is not None:
        gap = analysis.gap_report(lam_ess, rows)
        payload["gap_report"] = gap.to_dict()
        print(f"gap = {gap.gap:.4f}, gamma = {gap.agmon_gamma:.4f}, beta = {gap.fitted_beta:.4f}")
        if args.mu_star:
            s = analysis.lower_upper_sandwich(args.mu_star * PI2, lam_ess, gap.lambda_1)
            payload["sandwich"] = asdict(s)
            print(f"sandwich {'holds' if s.ok else 'FAILS'}")
    if args.slice is not None:
        X, v = _slice_rows(kind, args.slice, conf.p, conf.grid, conf.seed)

        def wslice(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x1", "x2", "x3", "u"])
            for (a, b, c), val in zip(X, v):
                w.writerow([f"{a:.17g}", f"{b:.17g}", f"{c:.17g}", f"{val:.17g}"])

        _write_csv(out / f"slice_{conf.geometry}_R{args.slice:g}.csv", conf, wslice)
    _write_json(out / f"layer_{conf.geometry}.json", conf, payload)
    R, d, m, _ = table[-1]
    print(f"R = {R:g}: dir {d[0] / PI2:.8f}, mix {m[0] / PI2:.8f} (pi^2 units)")
    return EXIT_OK


def _boundary(name):
    if name == "phi":
        return certificate.disk_boundary_data
    if name == "sin2":
        def fn(x, y, tol=1e-12):
            x, y = np.asarray(x, float), np.asarray(y, float)
            out = np.zeros(np.broadcast(x, y).shape)
            on1 = np.abs(x) < tol
            on2 = (np.abs(y) < tol) & ~on1
            out[on1] = math.sqrt(2) * np.sin(2 * math.pi * y[on1])
            out[on2] = math.sqrt(2) * np.sin(2 * math.pi * x[on2])
            return out
        return fn
    if name == "zero":
        return lambda x, y: np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
    raise UsageError(f"unknown boundary data {name!r}")


def cmd_certify(conf, args):
    from .basis import BasisSpec
    from .geometry import GradingSpec, build_quarter_disk_mesh

    mesh = build_quarter_disk_mesh(GradingSpec(conf.layers, conf.ratio), conf.base)
    ext = certificate.solve_helmholtz_extension(mesh, BasisSpec(conf.p), _boundary(args.data))
    out = _outdir(conf)
    try:
        cert = certificate.certify(ext, direct=args.data == "phi")
    except certificate.CertificateError as exc:
        _write_json(out / "certificate.json", conf,
                    {"error": str(exc), "J_psi0": ext.J_psi0, "norm_psi0_sq": ext.norm_psi0_sq})
        print(f"certificate rejected: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    _write_json(out / "certificate.json", conf, json.loads(cert.to_json()))
    print(f"J(psi0) = {cert.J_psi0:.10f}, Rayleigh/pi^2 = {cert.rayleigh_over_pi2:.10f}, "
          f"verdict {'true' if cert.verdict else 'false'}")
    return EXIT_OK if cert.verdict else EXIT_ACCEPT


def cmd_reproduce(conf, args):
    prof = reproduce.Profile.quick() if args.quick else reproduce.Profile()
    ws = reproduce.Workspace(prof, conf.cache)
    numbers = None
    if args.criterion:
        names = {v: k for k, v in reproduce.CRITERIA.items()}
        numbers = []
        for c in args.criterion:
            n = int(c) if c.isdigit() else names.get(c)
            if n not in reproduce.CRITERIA:
                raise UsageError(f"unknown criterion {c!r}")
            numbers.append(n)
    results = []
    for n in numbers or sorted(reproduce.CRITERIA):
        r = reproduce.run_criterion(n, ws)
        print(r.line(), flush=True)
        results.append(r)
    out = _outdir(conf)
    _write_json(out / "report.json", conf, {"profile": asdict(prof),
                                            "criteria": [asdict(r) for r in results]})
    (out / "report.md").write_text(reproduce.markdown_report(results))
    return sum(not r.passed for r in results)


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common(p, geometry_choices=None):
    p.add_argument("--config", help="key=value config file; flags override it")
    if geometry_choices:
        p.add_argument("--geometry", choices=geometry_choices)
    p.add_argument("--R", help="range a:b or list x,y,z")
    p.add_argument("--p", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--base", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--cache")
    p.add_argument("--workers", type=int)


def make_parser():
    ap = _Parser(prog="fichera", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("guide-sweep", help="Dirichlet/Neumann pairs of a 2D guide over R")
    _common(g, sorted(GEOMETRIES_2D))
    g.add_argument("--count", type=int)

    lc = sub.add_parser("lambda-curve", help="sampled lambda(x3) curve")
    _common(lc)
    lc.add_argument("--x3", type=float, help="single-point query")
    lc.add_argument("--n", type=int, default=60)
    lc.add_argument("--x-range", type=float, nargs=2, default=(1e-3, 10.0))

    st = sub.add_parser("sturm", help="mu(L) curve, L* and the finite-interval family")
    _common(st)
    st.add_argument("--build", action="store_true", help="build a missing lambda curve")
    st.add_argument("--degree", type=int, default=10)
    st.add_argument("--family", default="2,4,6,8,10,40")

    l3 = sub.add_parser("layer3d", help="3D layer eigenvalues on a tensor grid")
    _common(l3, sorted(GEOMETRIES_3D))
    l3.add_argument("--grid", type=int)
    l3.add_argument("--count", type=int)
    l3.add_argument("--lambda-ess", type=float, help="essential threshold in units of pi^2")
    l3.add_argument("--mu-star", type=float, help="Sturm lower bound in units of pi^2")
    l3.add_argument("--slice", type=float, help="export the ground state on x1 = x2 at this R")

    ce = sub.add_parser("certify", help="variational certificate for the rounded guide")
    _common(ce)
    ce.add_argument("--data", choices=["phi", "sin2", "zero"], default="phi")

    rp = sub.add_parser("reproduce", help="run the acceptance pipeline and write a report")
    _common(rp)
    rp.add_argument("--quick", action="store_true")
    rp.add_argument("--criterion", action="append", help="number or name; repeatable")
    return ap


DEFAULTS = {
    "guide-sweep": {},
    "lambda-curve": {"p": 12},
    "sturm": {"p": 12},
    "layer3d": {"geometry": "fichera", "p": 4},
    "certify": {"p": 8, "base": 4},
    "reproduce": {},
}


def main(argv=None):
    ap = make_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = build_config(args, DEFAULTS[args.command])
        cmd = args.command
        if cmd == "guide-sweep":
            return cmd_guide_sweep(conf)
        if cmd == "lambda-curve":
            return cmd_lambda_curve(conf, args)
        if cmd == "sturm":
            return cmd_sturm(conf, args)
        if cmd == "layer3d":
            return cmd_layer3d(conf, args)
        if cmd == "certify":
            return cmd_certify(conf, args)
        return cmd_reproduce(conf, args)
    except UsageError as exc:
        print(f"fichera: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EigenSolverError, guides.GuideError, sturm.SturmError, analysis.AnalysisError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
