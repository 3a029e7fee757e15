"""Built-in verification suite on small seeded problems.

Each check compares a simulation against an analytic bound and returns a
CheckReport; the suite fails if any bound is violated beyond the Monte Carlo
slack, or if the requested parameters fall outside a bound's domain.
"""

from dataclasses import dataclass

import numpy as np

from . import datasets as D
from . import optimizers as opt
from . import theory as th
from .errors import DomainError
from .datasets import partition
from .simnet import RunConfig, run_until_stop


@dataclass(frozen=True)
class SuiteConfig:
    seed: int = 0
    precond_trials: int = 500
    precond_T: int = 200
    step_trials: int = 20_000
    rho_offset: float = 0.0  # fault injection into the K recursion check
    alpha: float | None = None  # override for the step-recursion check
    beta: float = 5.0


def noisy_problem():
    return D.random_problem(20, 5, seed=1)


def consistent_problem():
    return D.random_problem(20, 5, seed=2, consistent=True)


def unbiasedness_problem():
    return D.random_problem(50, 8, seed=3)


def contraction_params(ds, beta, noise, factor=0.5):
    """alpha, delta and the report for which the one-step contraction factor is in (0, 1)."""
    probe = th.constants_report(ds.A, 1e-6, beta, 1.0)
    alpha_lim = th.contraction_alpha_limit(probe, noise)
    alpha = factor * min(probe.alpha_bar, alpha_lim)
    rep = th.constants_report(ds.A, alpha, beta, 1.0, K0=np.zeros((ds.d, ds.d)))
    T, delta, _ = th.find_contraction_time(rep, noise, rep.Ktilde0_norm, rep.Ktilde0_fro)
    if T is None:
        raise DomainError("no contraction time found below t_max")
    return alpha, delta, T, rep


def ipsg_states(ds, alpha, beta, delta, times, seed=0):
    """(x(t), K(t)) of one IPSG trajectory (single agent) at the requested times."""
    rng = np.random.default_rng(seed)
    st = opt.IpsgState(np.zeros(ds.d), np.zeros((ds.d, ds.d)), alpha, delta, beta)
    out, want = {}, set(times)
    for t in range(max(times) + 1):
        if t in want:
            out[t] = (st.x.copy(), st.K.copy())
        i = rng.integers(ds.N)
        a, b = ds.A[i], ds.B[i]
        st = opt.ipsg_update(st, opt.GradientSample(opt.stoch_grad(st.x, a, b),
                                                    opt.precond_residuals(st.K, a, beta)))
    return [out[t] for t in times]


def check_unbiasedness(cfg):
    ds = unbiasedness_problem()
    rng = np.random.default_rng(cfg.seed)
    reports = [th.verify_unbiasedness(ds, 3.0 * rng.standard_normal(ds.d)) for _ in range(20)]
    worst = min(reports, key=lambda r: r.worst_margin)
    return th.CheckReport("unbiasedness", all(r.passed for r in reports), worst.worst_margin,
                          {"points": len(reports), "worst_rel_error": worst.details["rel_error"]})


def check_precond_bound(cfg):
    ds = noisy_problem()
    beta = 1.0
    alpha = 0.9 * th.precond_alpha_limit(ds.A, beta)
    return th.verify_precond_bound(ds, alpha, beta, np.zeros((ds.d, ds.d)), cfg.precond_T,
                            cfg.precond_trials, rng=cfg.seed, rho_offset=cfg.rho_offset)


def check_step_recursion(cfg):
    ds = noisy_problem()
    noise = th.estimate_noise_bounds(ds, ds.x_star, rng=cfg.seed)
    alpha, delta, T, rep = contraction_params(ds, cfg.beta, noise)
    if cfg.alpha is not None:
        alpha = cfg.alpha
        if not alpha < rep.alpha_bar:
            raise DomainError(f"alpha = {alpha:.6g} is not below alpha_bar = {rep.alpha_bar:.6g}")
    times = [T, 2 * T, 5 * T]
    K0 = np.zeros((ds.d, ds.d))
    reports = []
    details = {"alpha": alpha, "delta": delta, "T": T}
    for t, (x_t, K_t) in zip(times, ipsg_states(ds, alpha, cfg.beta, delta, times, seed=cfg.seed)):
        r = th.verify_step_recursion(ds, alpha, cfg.beta, delta, x_t, K_t, t, noise, K0,
                                     cfg.step_trials, rng=cfg.seed + t)
        details[f"t={t}"] = {k: r.details[k] for k in ("mc_mean", "bound", "R1", "delta_bar")}
        reports.append(r)
    worst = min(r.worst_margin for r in reports)
    return th.CheckReport("step_recursion", all(r.passed for r in reports), worst, details)


def check_limit_bound(cfg, t_max=20_000):
    """IPSG on consistent data: the asymptotic bound is ~0, so the run must reach rounding level."""
    ds = consistent_problem()
    beta = 1.0
    alpha = 0.5 / (beta + float(np.max(th.row_norms_sq(ds.A))))
    delta = 0.5
    noise = th.estimate_noise_bounds(ds, ds.x_star, rng=cfg.seed)
    rep = th.constants_report(ds.A, alpha, beta, delta)
    bound = th.limit_error_bound(rep, th.NoiseBounds(0.0, noise.V2, noise.E1, noise.E2))
    res = run_until_stop(RunConfig("ipsg", {"alpha": alpha, "beta": beta, "delta": delta},
                                   seed=cfg.seed, t_max=t_max, eps_tol=1e-300, window=1),
                         ds, partition(ds, 4))
    z2 = float(np.sum((res.x_final - ds.x_star) ** 2))
    allowed = 10.0 * bound + rounding_floor(ds)
    return th.CheckReport("limit_bound", z2 <= allowed, allowed - z2,
                          {"final_sq_error": z2, "bound": bound, "allowed": allowed})


def rounding_floor(ds):
    """Squared error attainable in float64 around x*: (d * 64 ulp * ||x*||)^2."""
    return float((ds.d * 64 * np.finfo(float).eps * max(np.linalg.norm(ds.x_star), 1.0)) ** 2)


CHECKS = {
    "unbiasedness": check_unbiasedness,
    "precond_bound": check_precond_bound,
    "step_recursion": check_step_recursion,
    "limit_bound": check_limit_bound,
}


def run_suite(cfg=None, names=None):
    """Run the selected checks; domain errors become failed reports instead of exceptions."""
    cfg = cfg or SuiteConfig()
    out = []
    for name in names or CHECKS:
        try:
            out.append(CHECKS[name](cfg))
        except DomainError as exc:
            out.append(th.CheckReport(name, False, float("-inf"), {"domain_error": str(exc)}))
    return out
