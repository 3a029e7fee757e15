"""Command line harness: run, compare, constants, verify, stateest, datagen.

Exit status: 0 success, 1 validation/input error, 2 numerical or verification failure.
"""

import argparse
import configparser
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import checks
from . import datasets as D
from . import numkernel as nk
from . import optimizers as opt
from . import output as out
from . import presets as P
from . import stateest as se
from . import theory as th
from .errors import InputError, NumericalError
from .simnet import STOPPING_RULE, RunConfig, run_until_stop

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2

PARAM_KEYS = {
    "ipsg": ("alpha", "delta", "beta"),
    "sgd": ("alpha",),
    "adagrad": ("alpha", "eps"),
    "adam": ("alpha", "beta1", "beta2", "eps"),
    "amsgrad": ("alpha", "beta1", "beta2", "eps"),
}


@dataclass
class ExperimentSpec:
    dataset: str
    methods: list
    params: dict
    eps_tol: float = 1e-3
    window: int = 10
    t_max: int = 10_000
    seeds: list = field(default_factory=lambda: [0])
    out: str = "results"
    agents: int | None = None
    compute: str = "all"
    jobs: int = 1
    svg: bool = False

    def __post_init__(self):
        if not self.methods:
            raise InputError("at least one method is required")
        if not self.seeds:
            raise InputError("at least one seed is required")
        for m in self.methods:
            if m not in opt.METHODS:
                raise InputError(f"unknown method '{m}' (choose from {', '.join(opt.METHODS)})")


# ---------------------------------------------------------------- parsing helpers

def parse_seeds(text):
    """'3' -> [3]; '0-4' -> [0..4]; '1,5,9' -> [1, 5, 9]."""
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise InputError(f"cannot parse seeds '{text}'") from None
    if not seeds:
        raise InputError("seed list is empty")
    return seeds


def parse_methods(text):
    if text in (None, "all"):
        return list(opt.METHODS)
    methods = [m.strip().lower() for m in str(text).split(",") if m.strip()]
    bad = [m for m in methods if m not in opt.METHODS]
    if bad or not methods:
        raise InputError(f"unknown methods {bad}; choose from {list(opt.METHODS)} or 'all'")
    return methods


def parse_t_values(text):
    """'0:1000:100' (python range, end inclusive) or '0,10,100'."""
    if text is None:
        return None
    try:
        if ":" in text:
            a, b, *c = (int(float(v)) for v in text.split(":"))
            return list(range(a, b + 1, c[0] if c else 1))
        return [int(float(v)) for v in text.split(",")]
    except ValueError:
        raise InputError(f"cannot parse t range '{text}'") from None


def _num(value, key):
    if key == "alpha":
        return str(value).strip() if "/" in str(value) else float(value)
    return float(value)


def default_params(method, ds):
    """Generic hyperparameters for datasets without tuned presets."""
    lam = float(np.max(np.einsum("ij,ij->i", ds.A, ds.A)))
    if method == "ipsg":
        return {"alpha": 0.5 * th.precond_alpha_limit(ds.A, 1.0), "delta": 0.5, "beta": 1.0}
    if method == "sgd":
        return {"alpha": 1.0 / lam}
    if method == "adagrad":
        return {"alpha": 1.0, "eps": 1e-7}
    return {"alpha": "0.1/sqrt(t)", "beta1": 0.9, "beta2": 0.999, "eps": 1e-7}


EXPERIMENT_KEYS = {"dataset", "methods", "eps_tol", "window", "t_max", "seeds", "out",
                   "agents", "compute", "jobs", "svg"}


def read_config(path):
    """INI file: an [experiment] section plus one section per method."""
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    exp = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    bad = set(exp) - EXPERIMENT_KEYS
    if bad:
        raise InputError(f"config [experiment]: unknown keys {sorted(bad)}")
    params = {}
    for m in opt.METHODS:
        if cp.has_section(m):
            sec = dict(cp[m])
            bad = set(sec) - set(PARAM_KEYS[m])
            if bad:
                raise InputError(f"config [{m}]: unknown keys {sorted(bad)}")
            params[m] = {k: _num(v, k) for k, v in sec.items()}
    unknown = set(cp.sections()) - set(opt.METHODS) - {"experiment"}
    if unknown:
        raise InputError(f"config: unknown sections {sorted(unknown)}")
    return exp, params


def build_spec(args, ds, default_methods):
    """Merge defaults < benchmark preset < config file < command line flags."""
    exp, file_params = read_config(args.config) if args.config else ({}, {})
    dataset = args.dataset or exp.get("dataset")
    base = dataset.replace("-surrogate", "") if dataset else None
    bench = P.BENCHMARKS.get(base)

    def pick(flag, key, default, conv):
        if flag is not None:
            return conv(flag)
        if key in exp:
            return conv(exp[key])
        return default

    try:
        methods = parse_methods(args.method if args.method else exp.get("methods", default_methods))
        params = {}
        for m in methods:
            p = dict(bench.params[m]) if bench else default_params(m, ds)
            p.update(file_params.get(m, {}))
            for key in ("alpha", "beta", "delta"):
                v = getattr(args, key, None)
                if v is not None and key in PARAM_KEYS[m]:
                    p[key] = _num(v, key)
            params[m] = p
        return ExperimentSpec(
            dataset=dataset, methods=methods, params=params,
            eps_tol=pick(args.eps_tol, "eps_tol", bench.eps_tol if bench else 1e-3, float),
            window=pick(args.window, "window", 10, int),
            t_max=pick(args.t_max, "t_max", bench.t_max if bench else 10_000, lambda v: int(float(v))),
            seeds=parse_seeds(pick(args.seeds, "seeds", "0", str)),
            out=pick(args.out, "out", "results", str),
            agents=pick(args.agents, "agents", None, int),
            compute=pick(args.compute, "compute", "all", str),
            jobs=pick(args.jobs, "jobs", 1, int),
            svg=bool(args.svg) or exp.get("svg", "no").lower() in ("1", "yes", "true"),
        )
    except (ValueError, TypeError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------- experiments

def _timed_run(job):
    cfg, ds, part = job
    t0 = time.perf_counter()
    try:
        res = run_until_stop(cfg, ds, part)
    except NumericalError as exc:
        return None, time.perf_counter() - t0, str(exc)
    return res, time.perf_counter() - t0, None


def run_experiment(spec, ds):
    """Run every method x seed; returns (records, traces, failures) in deterministic order."""
    m = spec.agents or P.default_agents(spec.dataset, ds.N)
    part = D.partition(ds, m)
    x0 = P.default_x0(spec.dataset, ds.d)
    cfgs = [RunConfig(meth, spec.params[meth], seed=s, t_max=spec.t_max, eps_tol=spec.eps_tol,
                      window=spec.window, x0=x0, compute=spec.compute)
            for meth in spec.methods for s in spec.seeds]
    jobs = [(c, ds, part) for c in cfgs]
    if spec.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            results = list(pool.map(_timed_run, jobs))
    else:
        results = [_timed_run(j) for j in jobs]
    kappa = nk.condition_number(ds.A)
    records, traces, failures = [], [], []
    for cfg, (res, wall, err) in zip(cfgs, results):
        rec = {"dataset": spec.dataset, "method": cfg.method, "seed": cfg.seed,
               "kappa": out.fmt(kappa), "wall_time": f"{wall:.3f}"}
        if res is None:
            failures.append(f"{cfg.method} seed {cfg.seed}: {err}")
            rec.update(stop_iter="none", final_error="nan")
        else:
            rec.update(stop_iter="none" if res.stop_iter is None else res.stop_iter,
                       final_error=out.fmt(res.errors[-1]))
            traces.append((cfg, res))
        records.append(rec)
    return records, traces, failures, m, kappa


def write_run_outputs(spec, ds, records, traces, failures, m, kappa, extra=None):
    outdir = Path(spec.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for cfg, res in traces:
        out.write_trace(outdir / f"trace_{cfg.method}_seed{cfg.seed}.csv", res.errors)
    out.write_summary(outdir / "summary.csv", records)
    labelled = [(f"{cfg.method} seed {cfg.seed}", res.errors) for cfg, res in traces]
    if labelled:
        out.write_gnuplot(outdir / "traces.dat", labelled)
        if spec.svg:
            out.write_svg(outdir / "traces.svg", labelled, title=f"{spec.dataset}: relative error")
    meta = {
        "version": __version__,
        "dataset": spec.dataset,
        "provenance": ds.provenance,
        "N": ds.N, "d": ds.d, "agents": m, "kappa": kappa,
        "methods": spec.methods,
        "params": {k: {kk: str(vv) for kk, vv in v.items()} for k, v in spec.params.items()},
        "eps_tol": spec.eps_tol, "window": spec.window, "t_max": spec.t_max,
        "seeds": spec.seeds, "compute": spec.compute,
        "x0": P.default_x0(spec.dataset, ds.d),
        "K0": "zero matrix",
        "stopping_rule": STOPPING_RULE,
        "standardization": f"{D.STD_CONVENTION} standard deviation (ddof=0) for column scaling",
        "error": "||x(t) - x*|| / ||x(0) - x*|| (absolute if x(0) = x*)",
        "message_accounting": {
            f"{cfg.method} seed {cfg.seed}": {"up": res.messages_up, "down": res.messages_down,
                                              "bytes_up": res.bytes_up, "bytes_down": res.bytes_down}
            for cfg, res in traces},
        "failures": failures,
    }
    if extra:
        meta.update(extra)
    out.write_json(outdir / "run_metadata.json", meta)
    return outdir


def median_stop(records, method):
    """Median stop_iter over seeds; runs that never stopped count as +inf."""
    vals = [float(r["stop_iter"]) if r["stop_iter"] != "none" else np.inf
            for r in records if r["method"] == method]
    return float(np.median(vals))


def median_final_error(records, method):
    vals = [float(r["final_error"]) for r in records if r["method"] == method]
    return float(np.median(vals))


def ranking_line(medians, t_max, tiebreak=None):
    """Methods by median stop_iter; ties (e.g. never stopped) by `tiebreak`, then name."""
    tiebreak = tiebreak or {}
    order = sorted(medians, key=lambda k: (medians[k], tiebreak.get(k, 0.0), k))

    def show(v):
        return f">{t_max}" if np.isinf(v) else f"{v:g}"
    return "ranking: " + " < ".join(f"{k} ({show(medians[k])})" for k in order)


# ---------------------------------------------------------------- commands

def cmd_run(args, default_methods="ipsg"):
    ds = P.resolve_dataset(args.dataset) if args.dataset else None
    if ds is None and args.config:
        exp, _ = read_config(args.config)
        if "dataset" not in exp:
            raise InputError("no dataset given")
        args.dataset = exp["dataset"]
        ds = P.resolve_dataset(args.dataset)
    if ds is None:
        raise InputError("--dataset is required")
    spec = build_spec(args, ds, default_methods)
    records, traces, failures, m, kappa = run_experiment(spec, ds)
    extra = None
    if args.command == "compare":
        medians = {meth: median_stop(records, meth) for meth in spec.methods}
        finals = {meth: median_final_error(records, meth) for meth in spec.methods}
        line = ranking_line(medians, spec.t_max, finals)
        extra = {"median_stop_iter": {k: (None if np.isinf(v) else v) for k, v in medians.items()},
                 "ranking": line}
    outdir = write_run_outputs(spec, ds, records, traces, failures, m, kappa, extra)
    print(f"kappa = {kappa:.6g}")
    for r in records:
        print(f"{r['method']:8s} seed {r['seed']}: stop_iter {r['stop_iter']}, "
              f"final_error {float(r['final_error']):.3e}")
    if extra:
        print(extra["ranking"])
        (outdir / "ranking.txt").write_text(extra["ranking"] + "\n")
    print(f"outputs written to {outdir}")
    for f in failures:
        print(f"numerical failure: {f}", file=sys.stderr)
    return EXIT_FAIL if failures else EXIT_OK


def cmd_compare(args):
    return cmd_run(args, default_methods="all")


def cmd_constants(args):
    ds = P.resolve_dataset(args.dataset)
    bench = P.BENCHMARKS.get(args.dataset.replace("-surrogate", ""))
    base = bench.params["ipsg"] if bench else default_params("ipsg", ds)
    alpha = float(args.alpha if args.alpha is not None else base["alpha"])
    beta = float(args.beta if args.beta is not None else base["beta"])
    delta = float(args.delta if args.delta is not None else base["delta"])
    t_values = parse_t_values(args.t_range)
    noise = None
    if args.noise or t_values is not None:
        noise = th.estimate_noise_bounds(ds, ds.x_star, rng=args.seed)
    rep = th.constants_report(ds.A, alpha, beta, delta, noise=noise,
                              K0=np.zeros((ds.d, ds.d)), t_values=t_values)
    d = rep.to_dict()
    if not args.full:
        d.pop("K_beta")
    d["dataset"] = args.dataset
    if noise is not None and rep.C3 is not None and rep.rho < 1:
        d["limit_error_bound"] = th.limit_error_bound(rep, noise)
    text = json.dumps(d, indent=2, default=out._jsonable)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    print(f"kappa = {rep.kappa:.6g}", file=sys.stderr)
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_verify(args):
    cfg = checks.SuiteConfig(seed=args.seed, rho_offset=args.rho_offset, alpha=args.alpha,
                             precond_trials=args.trials)
    names = [c.strip() for c in args.checks.split(",")] if args.checks else None
    if names:
        bad = set(names) - set(checks.CHECKS)
        if bad:
            raise InputError(f"unknown checks {sorted(bad)}; choose from {list(checks.CHECKS)}")
    reports = checks.run_suite(cfg, names)
    for r in reports:
        print(r.line())
        if not r.passed:
            for k, v in r.details.items():
                if np.ndim(v) == 0 or isinstance(v, (dict, str)):
                    print(f"    {k}: {v}")
    if args.out:
        out.write_json(args.out, [asdict(r) for r in reports])
    ok = all(r.passed for r in reports)
    print("suite " + ("passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_FAIL


def _load_system(spec):
    if spec == "builtin":
        return se.builtin_system(), None
    if spec == "builtin-unobservable":
        return se.builtin_unobservable(), None
    return se.load_system(spec)


def cmd_stateest(args):
    sys_, z0_file = _load_system(args.system)
    if args.z0 is not None:
        z0 = np.array([float(v) for v in args.z0.split(",")])
    elif z0_file is not None:
        z0 = z0_file
    else:
        z0 = np.arange(1.0, sys_.d + 1.0)
    if z0.shape != (sys_.d,):
        raise InputError(f"z0 has {z0.shape[0]} entries, state dimension is {sys_.d}")
    obs = se.check_joint_observability(sys_)
    report = {
        "d": sys_.d, "m": sys_.m,
        "rank_local": list(obs.rank_local), "rank_global": obs.rank_global,
        "jointly_observable": obs.jointly_observable,
        "permutation_exact": bool(np.array_equal(obs.O_bar[obs.perm], obs.O_stacked)),
    }
    if not obs.jointly_observable:
        print("warning: system is not jointly observable; the estimate is a least-squares "
              "solution and z(0) is not uniquely determined", file=sys.stderr)
        report["caveat"] = "not jointly observable: least-squares estimate, not unique"
    meas = se.simulate_measurements(sys_, z0)
    reg, _ = se.to_regression(sys_, meas, obs)
    params = se.default_params(sys_, obs) if args.method == "ipsg" else \
        default_params(args.method, reg)
    for key in ("alpha", "beta", "delta"):
        v = getattr(args, key)
        if v is not None and key in PARAM_KEYS[args.method]:
            params[key] = _num(v, key)
    z_hat, res, x_ref = se.estimate_initial_state(
        sys_, meas, method=args.method, params=params, seed=args.seed,
        t_max=args.t_max or 100_000, eps_tol=args.eps_tol or 1e-6, window=args.window or 10)
    rel = float(np.linalg.norm(z_hat - x_ref) / max(np.linalg.norm(x_ref), 1e-300))
    times = parse_t_values(args.propagate) or [0, 1, 5, 10]
    report.update(z0_true=z0, z0_hat=z_hat, z0_oracle=x_ref, rel_error_vs_oracle=rel,
                  stop_iter=res.stop_iter, params={k: str(v) for k, v in params.items()},
                  propagated={str(t): se.propagate(sys_.A_state, z_hat, t) for t in times})
    outdir = Path(args.out or "results/stateest")
    outdir.mkdir(parents=True, exist_ok=True)
    out.write_trace(outdir / "trace.csv", res.errors)
    out.write_json(outdir / "stateest.json", report)
    print(f"ranks local {list(obs.rank_local)}, global {obs.rank_global} "
          f"({'jointly observable' if obs.jointly_observable else 'NOT jointly observable'})")
    print(f"z0_hat = {np.array2string(z_hat, precision=6)}; relative error vs oracle {rel:.3e}")
    print(f"outputs written to {outdir}")
    return EXIT_OK


def cmd_datagen(args):
    outdir = Path(args.out or "data/generated")
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for spec in ("random-20x5-s1", "consistent-20x5-s2", "random-50x8-s3"):
        ds = P.resolve_dataset(spec)
        D.write_matrix_market(outdir / f"{spec}.mtx", ds.A)
        np.savetxt(outdir / f"{spec}.rhs.txt", ds.B, fmt="%.17g")
        written += [f"{spec}.mtx", f"{spec}.rhs.txt"]
    for name in P.BENCHMARKS if args.surrogates else ():
        ds = P.surrogate(name)
        D.write_matrix_market(outdir / f"{name}-surrogate.mtx", ds.A)
        written.append(f"{name}-surrogate.mtx")
    for name, sys_ in (("lti_builtin", se.builtin_system()),
                       ("lti_unobservable", se.builtin_unobservable())):
        (outdir / f"{name}.txt").write_text(se.format_system(sys_, np.arange(1.0, sys_.d + 1.0)))
        written.append(f"{name}.txt")
    for w in written:
        print(outdir / w)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common_run_flags(p):
    p.add_argument("--dataset", help="benchmark name, NAME-surrogate, random-NxD[-sK], "
                   "consistent-NxD[-sK], scalar, or a .mtx path")
    p.add_argument("--method", help="comma-separated methods or 'all'")
    p.add_argument("--alpha")
    p.add_argument("--beta")
    p.add_argument("--delta")
    p.add_argument("--eps-tol", type=float)
    p.add_argument("--window", type=int, help="consecutive iterations below eps_tol (default 10)")
    p.add_argument("--t-max", type=float)
    p.add_argument("--seeds", help="e.g. 0-4 or 1,2,3")
    p.add_argument("--agents", type=int, help="number of agents (default: per dataset)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--jobs", type=int, help="parallel worker processes")
    p.add_argument("--compute", choices=("all", "consumed"),
                   help="'all' agents compute each round, or only the consumed one")
    p.add_argument("--svg", action="store_true", help="also write an SVG plot")


def build_parser():
    parser = argparse.ArgumentParser(prog="ipsg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    _common_run_flags(sub.add_parser("run", help="run one or more methods on a dataset"))
    _common_run_flags(sub.add_parser("compare", help="all methods x seeds with median ranking"))

    p = sub.add_parser("constants", help="convergence constants as JSON")
    p.add_argument("--dataset", required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--t-range", help="'start:stop:step' or comma list; needs noise bounds")
    p.add_argument("--noise", action="store_true", help="estimate gradient-noise bounds")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--full", action="store_true", help="include the K_beta matrix")
    p.add_argument("--out")

    p = sub.add_parser("verify", help="run the built-in bound verification suite")
    p.add_argument("--checks", help=f"comma list from {','.join(checks.CHECKS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--rho-offset", type=float, default=0.0, help="fault injection into rho")
    p.add_argument("--alpha", type=float, help="override alpha of the step-recursion check")
    p.add_argument("--out", help="JSON report path")

    p = sub.add_parser("stateest", help="recover the initial state of an LTI system")
    p.add_argument("--system", default="builtin",
                   help="system file, 'builtin' or 'builtin-unobservable'")
    p.add_argument("--z0", help="comma-separated true initial state")
    p.add_argument("--method", default="ipsg", choices=opt.METHODS)
    p.add_argument("--alpha")
    p.add_argument("--beta")
    p.add_argument("--delta")
    p.add_argument("--eps-tol", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--t-max", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--propagate", help="times to propagate z0_hat to, e.g. '0,1,5' or '0:10'")
    p.add_argument("--out")

    p = sub.add_parser("datagen", help="write the built-in synthetic problems to files")
    p.add_argument("--out")
    p.add_argument("--surrogates", action="store_true", help="also write benchmark surrogates")
    return parser


COMMANDS = {
    "run": cmd_run, "compare": cmd_compare, "constants": cmd_constants,
    "verify": cmd_verify, "stateest": cmd_stateest, "datagen": cmd_datagen,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, ValueError, OSError) as exc:
        # DomainError and AssumptionError are ValueErrors too: invalid inputs.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
