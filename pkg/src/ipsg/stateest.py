"""Distributed state estimation of a noiseless discrete-time LTI system.

Agent i knows the state matrix and its own output row c_i and measures
y_i(t) = c_i A^t z0 for t = 0..d-1. Stacking those gives y_i = O_i z0 with O_i
the local observability matrix, so recovering z0 is a distributed linear
regression over the blocks (O_i, y_i).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numkernel as nk
from .datasets import Dataset, Partition, least_squares_oracle
from .errors import FormatError, InputError
from .simnet import RunConfig, run_until_stop

RANK_RTOL = 1e-8


@dataclass(frozen=True)
class LtiSystem:
    A_state: np.ndarray
    C_rows: tuple

    def __post_init__(self):
        A = nk.as_matrix(self.A_state, "A_state")
        if A.shape[0] != A.shape[1]:
            raise InputError(f"state matrix must be square, got {A.shape}")
        rows = tuple(nk.as_vector(c, "c") for c in self.C_rows)
        if not rows:
            raise InputError("system needs at least one agent")
        for c in rows:
            if c.shape[0] != A.shape[0]:
                raise InputError(f"output row length {c.shape[0]} != state dimension {A.shape[0]}")
        object.__setattr__(self, "A_state", A)
        object.__setattr__(self, "C_rows", rows)

    @property
    def d(self):
        return self.A_state.shape[0]

    @property
    def m(self):
        return len(self.C_rows)


@dataclass(frozen=True)
class ObservabilityMatrices:
    O_local: tuple
    O_stacked: np.ndarray
    O_bar: np.ndarray
    perm: np.ndarray  # O_bar[perm] == O_stacked
    rank_local: tuple
    rank_global: int
    jointly_observable: bool


def local_observability(A_state, c):
    """Rows c, cA, ..., cA^{d-1}."""
    d = A_state.shape[0]
    O = np.empty((d, d))
    row = np.asarray(c, dtype=np.float64)
    for k in range(d):
        O[k] = row
        row = row @ A_state
    return O


def numerical_rank(M, rtol=RANK_RTOL):
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def check_joint_observability(sys):
    d, m = sys.d, sys.m
    O_local = tuple(local_observability(sys.A_state, c) for c in sys.C_rows)
    O = np.vstack(O_local)
    # Global ordering: time-major (all agents at t=0, then t=1, ...).
    # Rows are advanced one at a time (vector @ matrix) so the two orderings
    # share bit-identical products.
    rows = [np.asarray(c, dtype=np.float64) for c in sys.C_rows]
    blocks = []
    for _ in range(d):
        blocks.append(np.vstack(rows))
        rows = [r @ sys.A_state for r in rows]
    O_bar = np.vstack(blocks)
    # Row i*d + k of O is agent i at power k, which is row k*m + i of O_bar.
    perm = np.array([k * m + i for i in range(m) for k in range(d)])
    if not np.array_equal(O_bar[perm], O):
        raise AssertionError("global observability matrix is not a row permutation of O")
    ranks = tuple(numerical_rank(Oi) for Oi in O_local)
    rank_global = numerical_rank(O_bar)
    return ObservabilityMatrices(O_local, O, O_bar, perm, ranks, rank_global, rank_global == d)


def propagate(A_state, z0, t):
    if t < 0:
        raise InputError("t must be non-negative")
    z = np.asarray(z0, dtype=np.float64)
    for _ in range(t):
        z = A_state @ z
    return z


def simulate_measurements(sys, z0):
    """y_i = [c_i z(0), ..., c_i z(d-1)] for each agent."""
    z0 = nk.as_vector(z0, "z0")
    states = [z0]
    for _ in range(sys.d - 1):
        states.append(sys.A_state @ states[-1])
    Z = np.vstack(states)  # (d, d): row t is z(t)
    return tuple(Z @ c for c in sys.C_rows)


def to_regression(sys, meas, obs=None):
    obs = obs or check_joint_observability(sys)
    A = obs.O_stacked
    B = np.concatenate(meas)
    note = "jointly observable" if obs.jointly_observable else \
        "WARNING: not jointly observable, regression is ill-posed"
    ds = Dataset("lti", A, B, provenance=f"LTI regression d={sys.d} m={sys.m}; {note}")
    part = Partition(sys.m, tuple((i * sys.d, (i + 1) * sys.d) for i in range(sys.m)))
    return ds, part


def default_params(sys, obs=None):
    """IPSG parameters for the regression of `sys`: alpha = 2 / (s1 + sd), beta = delta = 0.5."""
    obs = obs or check_joint_observability(sys)
    w = np.linalg.eigvalsh(nk.gram(obs.O_stacked))
    w = w[w > RANK_RTOL * w[-1]]  # unobservable directions do not limit the step
    alpha = 2.0 / (w[-1] + w[0])
    return {"alpha": alpha, "beta": 0.5, "delta": 0.5}


def estimate_initial_state(sys, meas, method="ipsg", params=None, seed=0, t_max=100_000,
                           eps_tol=1e-6, window=10, compute="all"):
    """Run the distributed solver on the regression problem; returns (z0_hat, RunResult, x_ref).

    The reference solution is the least-squares oracle; for a system that is
    not jointly observable it is the minimum-norm least-squares solution, which
    is only one of many states consistent with the measurements. If it is zero
    (so the relative error is undefined) the simulator falls back to absolute error.
    """
    obs = check_joint_observability(sys)
    ds, part = to_regression(sys, meas, obs)
    if params is None:
        if method != "ipsg":
            raise InputError(f"parameters for '{method}' must be given")
        params = default_params(sys, obs)
    if obs.jointly_observable:
        x_ref = least_squares_oracle(ds)
    else:
        x_ref = np.linalg.pinv(ds.A, rcond=RANK_RTOL) @ ds.B
    ds = Dataset(ds.name, ds.A, ds.B, x_ref, provenance=ds.provenance)
    cfg = RunConfig(method, params, seed=seed, t_max=t_max, eps_tol=eps_tol,
                    window=window, compute=compute)
    res = run_until_stop(cfg, ds, part)
    return res.x_final, res, x_ref


def builtin_system():
    """Four-state system, four agents; each agent alone is unobservable, jointly observable."""
    A = np.array([[0.9, 0.2, 0.0, 0.0],
                  [0.0, 0.9, 0.0, 0.0],
                  [0.0, 0.0, 0.5, 0.3],
                  [0.0, 0.0, -0.3, 0.5]])
    return LtiSystem(A, tuple(np.eye(4)))


def builtin_unobservable():
    """Both agents see only the first block: rank 2 of 4."""
    A = builtin_system().A_state
    return LtiSystem(A, (np.array([1.0, 0, 0, 0]), np.array([0, 1.0, 0, 0])))


# ---------------------------------------------------------------- system files

def parse_system(text):
    """Parse the key-value system format.

    Grammar (one entry per line, '#' starts a comment)::

        d = <int>
        m = <int>
        A = <d*d reals, row-major, whitespace or comma separated>
        c1 = <d reals>
        ...
        cm = <d reals>
        z0 = <d reals>          (optional)
    """
    vals = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", line=no)
        key, value = (s.strip() for s in line.split("=", 1))
        if key in vals:
            raise FormatError(f"duplicate key '{key}'", line=no)
        try:
            nums = [float(tok) for tok in value.replace(",", " ").split()]
        except ValueError:
            raise FormatError(f"non-numeric value for '{key}'", line=no) from None
        vals[key] = (no, nums)
    for key in ("d", "m", "A"):
        if key not in vals:
            raise FormatError(f"missing key '{key}'")
    for key in ("d", "m"):
        no, v = vals[key]
        if len(v) != 1 or v[0] != int(v[0]) or v[0] < 1:
            raise FormatError(f"'{key}' must be a positive integer", line=no)
    d, m = int(vals["d"][1][0]), int(vals["m"][1][0])
    allowed = {"d", "m", "A", "z0"} | {f"c{i}" for i in range(1, m + 1)}
    for key, (no, _) in vals.items():
        if key not in allowed:
            raise FormatError(f"unknown key '{key}'", line=no)
    no, a = vals["A"]
    if len(a) != d * d:
        raise FormatError(f"A needs {d * d} entries, got {len(a)}", line=no)
    rows = []
    for i in range(1, m + 1):
        if f"c{i}" not in vals:
            raise FormatError(f"missing output row 'c{i}'")
        no, c = vals[f"c{i}"]
        if len(c) != d:
            raise FormatError(f"c{i} needs {d} entries, got {len(c)}", line=no)
        rows.append(np.asarray(c))
    z0 = None
    if "z0" in vals:
        no, z = vals["z0"]
        if len(z) != d:
            raise FormatError(f"z0 needs {d} entries, got {len(z)}", line=no)
        z0 = np.asarray(z)
    return LtiSystem(np.asarray(a).reshape(d, d), tuple(rows)), z0


def load_system(path):
    return parse_system(Path(path).read_text())


def format_system(sys, z0=None):
    fmt = lambda v: " ".join(f"{x:.17g}" for x in np.ravel(v))  # noqa: E731
    lines = [f"d = {sys.d}", f"m = {sys.m}", f"A = {fmt(sys.A_state)}"]
    lines += [f"c{i + 1} = {fmt(c)}" for i, c in enumerate(sys.C_rows)]
    if z0 is not None:
        lines.append(f"z0 = {fmt(z0)}")
    return "\n".join(lines) + "\n"
