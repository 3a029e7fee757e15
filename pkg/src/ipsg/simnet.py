"""Synchronous server/agent simulation of the distributed stochastic methods.

Each round the server broadcasts its estimate (and pre-conditioner for IPSG),
every agent samples one of its local rows and replies, and the server applies
exactly one randomly chosen agent's reply. Agents keep their data private: the
server only ever sees the GradientSample objects they return.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import optimizers as opt
from .errors import InputError, NumericalError

REAL_BYTES = 8

STOPPING_RULE = ("stop_iter is the last index of the first run of `window` consecutive "
                 "iterations whose error is <= eps_tol (window start = stop_iter - window + 1)")


def make_streams(seed, m):
    """One independent generator for the server and one per agent, all from `seed`."""
    children = np.random.SeedSequence(seed).spawn(m + 1)
    return np.random.Generator(np.random.PCG64(children[0])), [
        np.random.Generator(np.random.PCG64(c)) for c in children[1:]]


def sample_uniform(rng, k):
    if k < 1:
        raise InputError("cannot sample from an empty range")
    return int(rng.integers(k))


class Agent:
    def __init__(self, agent_id, A_i, B_i, rng):
        if A_i.shape[0] < 1:
            raise InputError(f"agent {agent_id} holds no data")
        self.id = agent_id
        self._A = A_i
        self._B = B_i
        self.rng = rng
        self._row = None

    @property
    def n(self):
        return self._A.shape[0]

    def draw(self):
        self._row = sample_uniform(self.rng, self.n)
        return self._row

    def respond(self, x, K=None, beta=None):
        a, b = self._A[self._row], self._B[self._row]
        g = opt.stoch_grad(x, a, b)
        if K is None:
            return opt.GradientSample(g)
        return opt.GradientSample(g, opt.precond_residuals(K, a, beta))


@dataclass(frozen=True)
class RunConfig:
    method: str
    params: dict
    seed: int = 0
    t_max: int = 10_000
    eps_tol: float = 1e-3
    window: int = 10
    x0: np.ndarray | None = None
    K0: np.ndarray | None = None
    # "all": every agent computes its reply each round (protocol-faithful);
    # "consumed": only the sampled agent computes. Both give identical traces.
    compute: str = "all"

    def __post_init__(self):
        if self.method not in opt.METHODS:
            raise InputError(f"unknown method '{self.method}'")
        if not self.eps_tol > 0:
            raise InputError("eps_tol must be positive")
        if self.window < 1:
            raise InputError("window must be at least 1")
        if self.t_max < 0:
            raise InputError("t_max must be non-negative")
        if self.compute not in ("all", "consumed"):
            raise InputError(f"unknown compute mode '{self.compute}'")


@dataclass
class RunResult:
    errors: np.ndarray
    stop_iter: int | None
    messages_up: int
    messages_down: int
    bytes_up: int
    bytes_down: int
    seed: int
    x_final: np.ndarray = field(repr=False)
    error_kind: str = "relative"

    @property
    def iterations(self):
        return len(self.errors) - 1


class Server:
    """Holds the optimizer state and message counters; never touches agent data."""

    def __init__(self, cfg, d, rng):
        self.cfg = cfg
        self.rng = rng
        x0 = np.zeros(d) if cfg.x0 is None else np.asarray(cfg.x0, dtype=np.float64).copy()
        if x0.shape != (d,):
            raise InputError(f"x0 has shape {x0.shape}, expected ({d},)")
        p = cfg.params
        if cfg.method == "ipsg":
            K0 = np.zeros((d, d)) if cfg.K0 is None else np.asarray(cfg.K0, dtype=np.float64).copy()
            self.state = opt.IpsgState(x0, K0, float(p["alpha"]), float(p["delta"]), float(p["beta"]))
        else:
            hyper = {k: float(p[k]) for k in ("beta1", "beta2", "eps") if k in p}
            self.state = opt.BaselineState.create(cfg.method, x0, p["alpha"], **hyper)
        self.messages_up = self.messages_down = 0
        self.bytes_up = self.bytes_down = 0

    @property
    def x(self):
        return self.state.x

    def broadcast(self):
        if self.cfg.method == "ipsg":
            return self.state.x, self.state.K, self.state.beta
        return self.state.x, None, None

    def apply(self, sample, t):
        if self.cfg.method == "ipsg":
            self.state = opt.ipsg_update(self.state, sample, t)
        else:
            self.state = opt.baseline_update(self.state, sample.g)


def build_agents(ds, part, rngs):
    return [Agent(i + 1, A_i, B_i, rng)
            for i, ((A_i, B_i), rng) in enumerate(zip(part.split(ds), rngs))]


def run_round(server, agents, t):
    """One synchronous round; returns the index of the agent whose reply was applied."""
    m = len(agents)
    x, K, beta = server.broadcast()
    d = x.shape[0]
    payload = d + (d * d if K is not None else 0)
    server.messages_down += m
    server.bytes_down += m * payload * REAL_BYTES

    for agent in agents:
        agent.draw()
    chosen = sample_uniform(server.rng, m)
    if server.cfg.compute == "all":
        replies = [agent.respond(x, K, beta) for agent in agents]
        sample = replies[chosen]
    else:
        sample = agents[chosen].respond(x, K, beta)
    server.messages_up += m
    server.bytes_up += m * payload * REAL_BYTES

    server.apply(sample, t)
    return chosen


def run_until_stop(cfg, ds, part):
    """Iterate rounds until the stopping rule fires or t_max rounds have run."""
    x_star = ds.x_star
    if x_star is None:
        raise InputError("dataset has no reference solution; call with_solution() first")
    if any(e - s != part.n for s, e in part.blocks):
        raise InputError("all agents must hold the same number of rows")
    server_rng, agent_rngs = make_streams(cfg.seed, part.m)
    agents = build_agents(ds, part, agent_rngs)
    server = Server(cfg, ds.d, server_rng)

    scale = float(np.linalg.norm(server.x - x_star))
    kind = "relative"
    if scale == 0.0:
        scale, kind = 1.0, "absolute"

    errors = [float(np.linalg.norm(server.x - x_star)) / scale]
    below = 1 if errors[0] <= cfg.eps_tol else 0
    stop = 0 if below >= cfg.window else None
    t = 0
    while stop is None and t < cfg.t_max:
        run_round(server, agents, t)
        t += 1
        err = float(np.linalg.norm(server.x - x_star)) / scale
        if not np.isfinite(err):
            raise NumericalError(f"{cfg.method} error became non-finite", iteration=t)
        errors.append(err)
        below = below + 1 if err <= cfg.eps_tol else 0
        if below >= cfg.window:
            stop = t
    return RunResult(np.asarray(errors), stop, server.messages_up, server.messages_down,
                     server.bytes_up, server.bytes_down, cfg.seed, server.x.copy(), kind)


def first_stop(errors, eps_tol, window):
    """Stopping index for a precomputed error trace, same semantics as run_until_stop."""
    below = 0
    for t, e in enumerate(errors):
        below = below + 1 if e <= eps_tol else 0
        if below >= window:
            return t
    return None


def _run_job(job):
    cfg, ds, part = job
    return run_until_stop(cfg, ds, part)


def run_many(cfgs, ds, part, jobs=1):
    """Run several configs, returning results in config order regardless of scheduling."""
    work = [(cfg, ds, part) for cfg in cfgs]
    if jobs <= 1 or len(work) <= 1:
        return [_run_job(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_job, work))
