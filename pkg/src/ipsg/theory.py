"""Convergence constants for IPSG and empirical checks of the resulting bounds.

Notation follows the usual least-squares setup: A is N x d with rows a_i,
G = A^T A / N, s1 >= sd are the extreme eigenvalues of A^T A and
K_beta = (G + beta I)^{-1} is the matrix the pre-conditioner tracks.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numkernel as nk
from . import optimizers as opt
from .errors import AssumptionError, DomainError, NumericalError

MC_SLACK = 3.0  # standard errors allowed in Monte Carlo bound checks
NOISE_RADII = (0.1, 1.0, 10.0)


# ---------------------------------------------------------------- constants

def check_full_rank(s1, sd, d):
    """A^T A must be non-singular; raises AssumptionError otherwise."""
    if not sd > d * np.finfo(float).eps * max(s1, 1.0):
        raise AssumptionError(f"A^T A is singular to working precision (sd = {sd:.3e}, s1 = {s1:.3e})")


def compute_kbeta(A, beta):
    if not beta > 0:
        raise DomainError("beta must be positive")
    A = nk.as_matrix(A, "A")
    N, d = A.shape
    S = nk.gram(A) / N + beta * np.eye(d)
    Kb = nk.solve_spd(S, np.eye(d))
    Kb = 0.5 * (Kb + Kb.T)
    res = np.linalg.norm(S @ Kb - np.eye(d))
    if res > 1e-10 * np.sqrt(d):
        raise NumericalError(f"K_beta residual {res:.3e} too large")
    return Kb


def row_norms_sq(A):
    return np.sum(A * A, axis=1)


def precond_row_norms(A, alpha, beta):
    """||I - alpha (a_i^T a_i + beta I)|| per row from the rank-1 eigenstructure.

    Eigenvalues are 1 - alpha (||a_i||^2 + beta) once and 1 - alpha beta with
    multiplicity d - 1.
    """
    lam = row_norms_sq(A)
    top = np.abs(1.0 - alpha * (lam + beta))
    if A.shape[1] == 1:
        return top
    return np.maximum(top, abs(1.0 - alpha * beta))


def deviation_norms(A, chunk=64):
    """||a_i^T a_i - A^T A / N|| (spectral) for every row, via batched eigvalsh."""
    N, d = A.shape
    G = nk.gram(A) / N
    out = np.empty(N)
    for s in range(0, N, chunk):
        rows = A[s:s + chunk]
        M = rows[:, :, None] * rows[:, None, :] - G
        w = np.linalg.eigvalsh(M)
        out[s:s + chunk] = np.maximum(np.abs(w[:, 0]), np.abs(w[:, -1]))
    return out


def compute_rho_C1_C2(A, alpha, beta, K_beta, dev=None):
    if dev is None:
        dev = deviation_norms(A)
    rho = float(np.mean(precond_row_norms(A, alpha, beta)))
    C1 = float(np.max(dev))
    C2 = float(alpha * np.mean(dev) * nk.spectral_norm(K_beta))
    return rho, C1, C2


def sigma2_columns(A, beta, K_beta):
    """(1/N) sum_i ||(a_i^T a_i + beta I) K_beta e_j - e_j||^2 for each column j.

    With P = A K_beta the summand expands to
    P_ij^2 ||a_i||^2 + 2 P_ij (beta P_ij - A_ij) + ||beta k_j - e_j||^2.
    """
    N, d = A.shape
    P = A @ K_beta
    lam = row_norms_sq(A)
    Q = beta * K_beta - np.eye(d)
    tail = np.einsum("ij,ij->j", Q, Q)
    per = P * P * lam[:, None] + 2.0 * P * (beta * P - A)
    return per.mean(axis=0) + tail


def compute_L_sigma2_C3(A, beta, alpha, K_beta, sd):
    L = float(beta + np.max(row_norms_sq(A)))
    sigma2 = float(np.max(sigma2_columns(A, beta, K_beta)))
    if not alpha * L < 1.0:
        raise DomainError(f"C3 needs alpha < 1/L = {1.0 / L:.6g}, got alpha = {alpha:.6g}")
    if not sd > 0:
        raise DomainError("C3 needs sd > 0")
    N = A.shape[0]
    C3 = alpha * N * sigma2 / (sd * (1.0 - alpha * L))
    return L, sigma2, C3


def compute_alpha_bar(N, s1, sd, L, beta):
    if not sd > 0:
        raise DomainError("alpha_bar needs sd > 0")
    return min(N / sd, 1.0 / L, 2.0 / (s1 / N + beta))


def compute_mu(alpha, sd, N, L):
    return 1.0 - (2.0 * alpha * sd / N) * (1.0 - alpha * L)


def compute_varrho(alpha, beta, s1, sd, N):
    return max(abs(1.0 - alpha * (s1 / N + beta)), abs(1.0 - alpha * (sd / N + beta)))


def precond_alpha_limit(A, beta):
    """min_i 2 / (Lambda_i + beta): admissible range for alpha in the K recursion bound."""
    return float(np.min(2.0 / (row_norms_sq(A) + beta)))


@dataclass(frozen=True)
class NoiseBounds:
    V1: float
    V2: float
    E1: float
    E2: float


@dataclass
class ConstantsReport:
    N: int
    d: int
    alpha: float
    beta: float
    delta: float
    s1: float
    sd: float
    kappa: float
    K_beta: np.ndarray = field(repr=False)
    K_beta_norm: float
    rho: float
    C1: float
    C2: float
    C3: float | None
    L: float
    sigma2: float
    mu: float
    varrho: float
    alpha_bar: float
    precond_alpha_limit: float
    noise: NoiseBounds | None = None
    Ktilde0_norm: float | None = None
    Ktilde0_fro: float | None = None
    series: dict | None = None
    warnings: list = field(default_factory=list)

    def to_dict(self):
        out = asdict(self)
        out["K_beta"] = self.K_beta.tolist()
        if self.series is not None:
            out["series"] = {k: np.asarray(v).tolist() for k, v in self.series.items()}
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def constants_report(A, alpha, beta, delta, noise=None, K0=None, t_values=None):
    """Every quantity of the convergence analysis for one dataset and parameter set."""
    A = nk.as_matrix(A, "A")
    N, d = A.shape
    s1, sd = nk.sym_extreme_eigs(nk.gram(A))
    check_full_rank(s1, sd, d)
    Kb = compute_kbeta(A, beta)
    Kb_norm = nk.spectral_norm(Kb)
    rho, C1, C2 = compute_rho_C1_C2(A, alpha, beta, Kb)
    L = float(beta + np.max(row_norms_sq(A)))
    sigma2 = float(np.max(sigma2_columns(A, beta, Kb)))
    warnings = []
    C3 = None
    if alpha * L < 1.0 and sd > 0:
        C3 = alpha * N * sigma2 / (sd * (1.0 - alpha * L))
    else:
        warnings.append(f"alpha >= 1/L ({1.0 / L:.6g}); C3 undefined")
    alpha_bar = compute_alpha_bar(N, s1, sd, L, beta) if sd > 0 else 0.0
    if alpha >= alpha_bar:
        warnings.append(f"alpha = {alpha:.6g} is not below alpha_bar = {alpha_bar:.6g}; "
                        "the convergence guarantee does not apply")
    rep = ConstantsReport(
        N=N, d=d, alpha=alpha, beta=beta, delta=delta, s1=s1, sd=sd,
        kappa=s1 / sd if sd > 0 else float("inf"),
        K_beta=Kb, K_beta_norm=Kb_norm, rho=rho, C1=C1, C2=C2, C3=C3, L=L, sigma2=sigma2,
        mu=compute_mu(alpha, sd, N, L), varrho=compute_varrho(alpha, beta, s1, sd, N),
        alpha_bar=alpha_bar, precond_alpha_limit=precond_alpha_limit(A, beta),
        noise=noise, warnings=warnings)
    if K0 is not None:
        Kt0 = np.asarray(K0, dtype=np.float64) - Kb
        rep.Ktilde0_norm = nk.spectral_norm(Kt0)
        rep.Ktilde0_fro = nk.frob_norm(Kt0)
    if noise is not None and t_values is not None and C3 is not None and rep.Ktilde0_norm is not None:
        rep.series = compute_series(rep, noise, rep.Ktilde0_norm, rep.Ktilde0_fro, t_values)
    return rep


def _geom_sum(r, t):
    """sum_{j=0}^{t} r^j."""
    t = np.asarray(t, dtype=np.float64)
    if r == 1.0:
        return t + 1.0
    return (1.0 - r ** (t + 1.0)) / (1.0 - r)


def compute_series(c, noise, kt0_norm, kt0_fro, t_values, delta=None):
    """Time-dependent quantities C4..C8, R1..R3 and delta_bar at each t."""
    t = np.asarray(t_values, dtype=np.float64)
    delta = c.delta if delta is None else delta
    if c.C3 is None:
        raise DomainError("series need C3, which requires alpha < 1/L")
    V1, V2, E1, E2 = noise.V1, noise.V2, noise.E1, noise.E2
    Kb, N, d, a = c.K_beta_norm, c.N, c.d, c.alpha
    bracket = (d * c.C3 + Kb ** 2 + 2.0 * c.C2 * Kb * _geom_sum(c.rho, t)
               + kt0_fro ** 2 * c.mu ** (t + 1.0) + 2.0 * Kb * kt0_norm * c.rho ** (t + 1.0))
    C4 = (V2 + 1.0) * c.s1 ** 2 / N * bracket
    C5 = 2.0 * c.C1 * E2 * c.s1 / N * (Kb + kt0_norm * c.varrho ** t)
    C6 = 2.0 * c.sd / (c.sd + N * c.beta) - 2.0 * c.s1 / N * kt0_norm * c.varrho ** (t + 1.0)
    C7 = 2.0 * c.C1 * E1 * (Kb + kt0_norm * c.varrho ** t)
    C8 = C4 + 0.5
    R3 = delta ** 2 * V1 * N * bracket
    R2 = R3 + 0.5 * a ** 2 * C7 ** 2
    R1 = 1.0 + delta ** 2 * C8 + a * delta * C5 - delta * C6
    with np.errstate(divide="ignore"):
        delta_bar = np.minimum(1.0 / C6, (C6 - a * C5) / C8)
    return {"t": t, "C4": C4, "C5": C5, "C6": C6, "C7": C7, "C8": C8,
            "R1": R1, "R2": R2, "R3": R3, "delta_bar": delta_bar}


def limit_error_bound(c, noise, alpha=None, delta=None):
    """Asymptotic bound on E||x(t) - x*||^2."""
    alpha = c.alpha if alpha is None else alpha
    delta = c.delta if delta is None else delta
    if not c.rho < 1.0:
        raise DomainError(f"limit bound needs rho < 1, got {c.rho:.6g}")
    if c.C3 is None:
        raise DomainError("limit bound needs C3, which requires alpha < 1/L")
    Kb = c.K_beta_norm
    return (delta ** 2 * noise.V1 * c.N * (c.d * c.C3 + Kb ** 2 + 2.0 * c.C2 * Kb / (1.0 - c.rho))
            + 2.0 * alpha ** 2 * (c.C1 * noise.E1 * Kb) ** 2)


# ---------------------------------------------------------------- noise bounds

def all_gradients(A, B, x):
    """Row-wise stochastic gradients a_i^T (a_i x - b_i), shape (N, d)."""
    return A * (A @ x - B)[:, None]


def gradient_variance(A, B, x):
    G = all_gradients(A, B, x)
    mean = G.mean(axis=0)
    return float(np.mean(np.einsum("ij,ij->i", G, G)) - mean @ mean), G, mean


def estimate_noise_bounds(ds, x_star, probes=100, rng=None, radii=NOISE_RADII):
    """Fit the gradient-noise constants V1, V2, E1, E2 around x_star.

    V1 is exact (enumeration at the minimizer); V2 and E2 are maxima over random
    probe points on spheres of radius r * ||x*|| + 1 for each r in `radii`.
    """
    rng = np.random.default_rng(rng)
    A, B = ds.A, ds.B
    N, d = A.shape
    G_star = all_gradients(A, B, x_star)
    V1 = max(float(np.mean(np.einsum("ij,ij->i", G_star, G_star))), 0.0)
    E1 = float(max(np.max(np.linalg.norm(G_star, axis=1)), np.sqrt(V1 * N)))
    V2, E2_fit = 0.0, 0.0
    base = float(np.linalg.norm(x_star))
    for r in radii:
        radius = r * base + 1.0
        for _ in range(probes):
            u = rng.standard_normal(d)
            x = x_star + radius * u / np.linalg.norm(u)
            var, G, mean = gradient_variance(A, B, x)
            gn2 = float(mean @ mean)
            if gn2 <= 0:
                continue
            V2 = max(V2, (var - V1) / gn2)
            E2_fit = max(E2_fit, (float(np.max(np.linalg.norm(G, axis=1))) - E1) / np.sqrt(gn2))
    E2 = max(E2_fit, np.sqrt((V2 + 1.0) * N))
    return NoiseBounds(V1, V2, E1, float(E2))


# ---------------------------------------------------------------- verification

@dataclass
class CheckReport:
    name: str
    passed: bool
    worst_margin: float
    details: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst margin {self.worst_margin:.4g}"


def verify_unbiasedness(ds, x, rtol=1e-12):
    """Enumeration mean of the stochastic gradients against (A^T A x - A^T B) / N."""
    A, B = ds.A, ds.B
    N = A.shape[0]
    mean = all_gradients(A, B, x).mean(axis=0)
    full = (A.T @ (A @ x) - A.T @ B) / N
    scale = max(float(np.max(np.abs(full))), float(np.max(np.abs(A.T @ B))) / N, 1e-300)
    diff = np.abs(mean - full)
    worst = int(np.argmax(diff))
    rel = float(diff[worst] / scale)
    details = {"rel_error": rel, "worst_component": worst}
    passed = rel <= rtol
    if ds.x_star is not None:
        s1, _ = nk.sym_extreme_eigs(nk.gram(A))
        gnorm = float(np.linalg.norm(full))
        bound = s1 / N * float(np.linalg.norm(x - ds.x_star))
        details.update(grad_norm=gnorm, grad_bound=bound)
        passed = passed and gnorm <= bound * (1 + 1e-10) + 1e-14 * scale
    return CheckReport("unbiasedness", passed, rtol - rel, details)


def simulate_k_recursion(A, alpha, beta, K0, T, trials, rng):
    """||K(t) - K_beta|| for t = 0..T over independent trials of the K-update alone."""
    rng = np.random.default_rng(rng)
    N, d = A.shape
    Kb = compute_kbeta(A, beta)
    K = np.broadcast_to(np.asarray(K0, dtype=np.float64), (trials, d, d)).copy()
    norms = np.empty((T + 1, trials))
    norms[0] = np.linalg.norm(K - Kb, ord=2, axis=(1, 2))
    eye = np.eye(d)
    for t in range(1, T + 1):
        a = A[rng.integers(N, size=trials)]
        aK = np.einsum("ti,tij->tj", a, K)
        R = a[:, :, None] * aK[:, None, :] + beta * K - eye
        K = K - alpha * R
        norms[t] = np.linalg.norm(K - Kb, ord=2, axis=(1, 2))
    return norms


def verify_precond_bound(ds, alpha, beta, K0, T, trials, rng=None, rho_offset=0.0):
    """Monte Carlo check of E||K(t) - K_beta|| <= rho^t ||K~(0)|| + C2 sum_{j<t} rho^j.

    `rho_offset` perturbs rho before the check (fault injection for self-tests).
    """
    A = ds.A
    limit = precond_alpha_limit(A, beta)
    if not 0 < alpha < limit:
        raise DomainError(f"the K recursion bound needs 0 < alpha < {limit:.6g}, got {alpha:.6g}")
    Kb = compute_kbeta(A, beta)
    rho, C1, C2 = compute_rho_C1_C2(A, alpha, beta, Kb)
    rho += rho_offset
    norms = simulate_k_recursion(A, alpha, beta, K0, T, trials, rng)
    mean = norms.mean(axis=1)
    se = norms.std(axis=1, ddof=1) / np.sqrt(trials) if trials > 1 else np.zeros(T + 1)
    t = np.arange(T + 1)
    bound = rho ** t * norms[0, 0] + C2 * _geom_sum(rho, t - 1)
    margin = bound + MC_SLACK * se - mean
    passed = bool(rho < 1.0 and np.all(margin >= 0))
    details = {"rho": rho, "C2": C2, "mean": mean, "bound": bound, "se": se,
               "rho_below_one": rho < 1.0}
    return CheckReport("precond_bound", passed, float(np.min(margin)), details)


def step_moments(ds, x_t, K_t, alpha, beta, delta):
    """||z(t+1)||^2 for every possible consumed row, as an (N,) array."""
    A, B = ds.A, ds.B
    out = np.empty(A.shape[0])
    st = opt.IpsgState(np.asarray(x_t, float), np.asarray(K_t, float), alpha, delta, beta)
    for i, (a, b) in enumerate(zip(A, B)):
        sample = opt.GradientSample(opt.stoch_grad(st.x, a, b), opt.precond_residuals(st.K, a, beta))
        z = opt.ipsg_update(st, sample).x - ds.x_star
        out[i] = z @ z
    return out


def verify_step_recursion(ds, alpha, beta, delta, x_t, K_t, t, noise, K0, trials, rng=None):
    """Monte Carlo E||z(t+1)||^2 from a fixed (x(t), K(t)) against R1(t)||z(t)||^2 + R2(t)."""
    rep = constants_report(ds.A, alpha, beta, delta, noise=noise, K0=K0, t_values=[t])
    if not alpha < rep.alpha_bar:
        raise DomainError(f"recursion bound needs alpha < alpha_bar = {rep.alpha_bar:.6g}")
    if not delta > 0:
        raise DomainError("delta must be positive")
    rng = np.random.default_rng(rng)
    per_row = step_moments(ds, x_t, K_t, alpha, beta, delta)
    draws = per_row[rng.integers(ds.N, size=trials)]
    mc_mean = float(draws.mean())
    se = float(draws.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    z = np.asarray(x_t) - ds.x_star
    s = rep.series
    bound = float(s["R1"][0] * (z @ z) + s["R2"][0])
    margin = bound + MC_SLACK * se - mc_mean
    details = {"mc_mean": mc_mean, "exact_mean": float(per_row.mean()), "se": se,
               "bound": bound, "R1": float(s["R1"][0]), "R2": float(s["R2"][0]),
               "delta_bar": float(s["delta_bar"][0]), "t": t}
    return CheckReport("step_recursion", margin >= 0, margin, details)


def contraction_alpha_limit(c, noise):
    """Largest alpha with C6(inf) > alpha C5(inf).

    The contraction factor R1(t) can only drop below 1 for large t when this
    holds; alpha < alpha_bar alone does not imply it.
    """
    c6 = 2.0 * c.sd / (c.sd + c.N * c.beta)
    c5_per_alpha = 2.0 * c.C1 * noise.E2 * c.s1 / c.N * c.K_beta_norm
    return float("inf") if c5_per_alpha == 0 else c6 / c5_per_alpha


def find_contraction_time(c, noise, kt0_norm, kt0_fro, t_max=10_000, factor=0.5,
                          horizon=(2, 5, 10, 100, 1000)):
    """Smallest T <= t_max such that, with delta = factor * delta_bar(T), R1(t) is in (0, 1)
    at t = T and at every t = T * h for h in `horizon` (plus t = 1e6).

    Returns (T, delta, series_at_checked_t) or (None, None, None).
    """
    ts = np.arange(t_max + 1)
    db = compute_series(c, noise, kt0_norm, kt0_fro, ts)["delta_bar"]
    for T in np.flatnonzero(db > 0):
        delta = factor * float(db[T])
        check = np.unique(np.concatenate([[T], T * np.asarray(horizon), [10 ** 6]]))
        s = compute_series(c, noise, kt0_norm, kt0_fro, check, delta=delta)
        if np.all((s["R1"] > 0) & (s["R1"] < 1)):
            return int(T), delta, s
    return None, None, None
